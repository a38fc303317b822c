//! The UAM network: vertistops (nodes), flight corridors (links), the
//! aircraft battery, the charging behaviour of other aircraft and the
//! reward parameters used by the routing MDP.
//!
//! Every duration is stored as an integer number of time steps (`ticks`) of
//! length [`Network::delta_t`] minutes. The network document format uses
//! minutes; conversion happens once, on load.

mod document;
mod validate;

use std::collections::VecDeque;

pub use document::{
    case_study_link_ticks, case_study_link_times, load_network, load_network_file,
    uniform_travel_pmf, BatteryDoc, ChargeDistDoc, DemandDoc, LinkDoc, NetworkDocument, NodeDoc,
    RewardsDoc,
};
pub use validate::{validate, Severity, Violation};

use crate::error::{Error, Result};

/// Tolerance on probability vectors summing to one.
pub const PMF_TOLERANCE: f64 = 1e-9;

/// A vertistop.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    /// Number of landing spots, each able to charge one aircraft at a time.
    pub capacity: u32,
    pub queue_min: u32,
    pub queue_max: u32,
    /// `queue_pmf[i]` is the probability of `queue_min + i` other aircraft
    /// landing no later than us.
    pub queue_pmf: Vec<f64>,
}

impl Node {
    /// A node whose queue length is deterministic.
    pub fn with_fixed_queue(id: impl Into<String>, capacity: u32, queue: u32) -> Self {
        Node {
            id: id.into(),
            capacity,
            queue_min: queue,
            queue_max: queue,
            queue_pmf: vec![1.0],
        }
    }

    pub fn queue_prob(&self, q: u32) -> f64 {
        if q < self.queue_min {
            return 0.0;
        }
        self.queue_pmf
            .get((q - self.queue_min) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// Queue lengths paired with their probabilities.
    pub fn queue_support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.queue_pmf
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.queue_min + i as u32, p))
    }

    /// Largest queue length with positive probability.
    pub fn worst_queue(&self) -> u32 {
        self.queue_support()
            .filter(|&(_, p)| p > 0.0)
            .map(|(q, _)| q)
            .last()
            .unwrap_or(self.queue_max)
    }
}

/// A directed flight corridor.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    /// Minimum travel time in ticks.
    pub x_lower: u32,
    /// `travel_pmf[k]` is the probability of a travel time of
    /// `x_lower + k` ticks.
    pub travel_pmf: Vec<f64>,
    /// Informational; kept so a document can be re-derived at another step.
    pub distance_miles: Option<f64>,
}

impl Link {
    /// Number of travel-time grid points beyond the minimum.
    pub fn spread(&self) -> u32 {
        self.travel_pmf.len().saturating_sub(1) as u32
    }

    /// Maximum travel time in ticks.
    pub fn x_upper(&self) -> u32 {
        self.x_lower + self.spread()
    }

    /// Largest tick offset with positive probability.
    pub fn worst_offset(&self) -> u32 {
        self.travel_pmf
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.travel_pmf.len().saturating_sub(1)) as u32
    }
}

/// Battery capacity and charging granularity, all in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatteryModel {
    /// Full battery level (the maximal battery index).
    pub capacity: u32,
    /// Spacing of the levels at which charging may stop.
    pub charge_step: u32,
    /// Time needed to charge by one `charge_step`.
    pub charge_step_time: u32,
}

impl BatteryModel {
    pub fn new(capacity: u32, charge_step: u32, charge_step_time: u32) -> Self {
        BatteryModel {
            capacity,
            charge_step,
            charge_step_time,
        }
    }

    /// Number of charge levels above empty.
    pub fn charge_levels(&self) -> u32 {
        if self.charge_step == 0 {
            0
        } else {
            self.capacity / self.charge_step
        }
    }

    /// Ticks needed to charge an empty battery to full.
    pub fn full_charge_time(&self) -> u32 {
        self.charge_levels() * self.charge_step_time
    }

    /// Whether charging may stop at battery index `level`.
    pub fn is_charge_level(&self, level: u32) -> bool {
        self.charge_step != 0 && level % self.charge_step == 0
    }

    /// Wall-clock minutes spent raising the battery by one index.
    pub fn minutes_per_index(&self, delta_t: f64) -> f64 {
        self.charge_step_time as f64 * delta_t / self.charge_step as f64
    }
}

/// Charging durations of other aircraft, as multiples of the charge step
/// time: `pmf[k - 1]` is the probability of `k` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeDurationDist {
    pub pmf: Vec<f64>,
}

impl ChargeDurationDist {
    pub fn uniform(levels: u32) -> Self {
        let n = levels.max(1) as usize;
        ChargeDurationDist {
            pmf: vec![1.0 / n as f64; n],
        }
    }

    pub fn prob(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.pmf.get(k as usize - 1).copied().unwrap_or(0.0)
    }

    pub fn max_index(&self) -> u32 {
        self.pmf.len() as u32
    }

    pub fn worst_index(&self) -> u32 {
        self.pmf.iter().rposition(|&p| p > 0.0).map_or(1, |i| i as u32 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    /// Reward per time step of flight, hovering or queueing.
    pub r_t: f64,
    /// Battery-exhaustion penalty.
    pub r_d: f64,
    /// Arrival reward.
    pub r_a: f64,
}

impl RewardParams {
    /// Reward of charging the battery by one index, i.e. the travel-time cost
    /// of the `full_charge_time / capacity` steps it takes.
    pub fn r_b(&self, battery: &BatteryModel) -> f64 {
        self.r_t * battery.full_charge_time() as f64 / battery.capacity as f64
    }

    /// The case-study convention: one unit of cost per minute.
    pub fn per_minute(delta_t: f64) -> Self {
        RewardParams {
            r_t: -delta_t,
            r_d: -1000.0,
            r_a: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Demand {
    pub origin: usize,
    pub destination: usize,
}

/// A sequence of connected links.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    pub links: Vec<usize>,
}

impl Route {
    pub fn new(links: Vec<usize>, network: &Network) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidRoute("route has no links".into()));
        }
        for &l in &links {
            if l >= network.links().len() {
                return Err(Error::InvalidRoute(format!("link index {l} out of range")));
            }
        }
        for w in links.windows(2) {
            let (a, b) = (network.link(w[0]), network.link(w[1]));
            if a.head != b.tail {
                return Err(Error::InvalidRoute(format!(
                    "`{}` does not connect to `{}`",
                    a.id, b.id
                )));
            }
        }
        Ok(Route { links })
    }

    pub fn from_ids<S: AsRef<str>>(ids: &[S], network: &Network) -> Result<Self> {
        let links = ids
            .iter()
            .map(|id| {
                network
                    .link_index(id.as_ref())
                    .ok_or_else(|| Error::UnknownLink(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Route::new(links, network)
    }

    pub fn origin(&self, network: &Network) -> usize {
        network.link(self.links[0]).tail
    }

    pub fn destination(&self, network: &Network) -> usize {
        network.link(*self.links.last().expect("nonempty route")).head
    }

    /// Nodes visited, in order: the first tail followed by every head.
    pub fn nodes(&self, network: &Network) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.links.len() + 1);
        out.push(self.origin(network));
        out.extend(self.links.iter().map(|&l| network.link(l).head));
        out
    }

    pub fn describe(&self, network: &Network) -> String {
        self.nodes(network)
            .iter()
            .map(|&v| network.node(v).id.as_str())
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

/// A UAM network. Immutable once built; the derived adjacency is kept in
/// sync by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    delta_t: f64,
    nodes: Vec<Node>,
    links: Vec<Link>,
    battery: BatteryModel,
    charge_dist: ChargeDurationDist,
    rewards: RewardParams,
    demand: Option<Demand>,
    outgoing: Vec<Vec<usize>>,
    in_degree: Vec<usize>,
}

impl Network {
    /// Assembles a network without validating it. Nodes and links are
    /// reordered by id; link endpoints are remapped accordingly and must be
    /// in range.
    pub fn from_parts(
        delta_t: f64,
        mut nodes: Vec<Node>,
        mut links: Vec<Link>,
        battery: BatteryModel,
        charge_dist: ChargeDurationDist,
        rewards: RewardParams,
        demand: Option<Demand>,
    ) -> Self {
        let mut node_order: Vec<usize> = (0..nodes.len()).collect();
        node_order.sort_by(|&a, &b| nodes[a].id.cmp(&nodes[b].id));
        let mut remap = vec![0; nodes.len()];
        for (new, &old) in node_order.iter().enumerate() {
            remap[old] = new;
        }
        let map = |v: usize| remap.get(v).copied().unwrap_or(v);
        for link in &mut links {
            link.tail = map(link.tail);
            link.head = map(link.head);
        }
        let demand = demand.map(|d| Demand {
            origin: map(d.origin),
            destination: map(d.destination),
        });
        let mut sorted = Vec::with_capacity(nodes.len());
        let mut taken: Vec<Option<Node>> = nodes.drain(..).map(Some).collect();
        for &old in &node_order {
            sorted.push(taken[old].take().expect("each node moved once"));
        }
        links.sort_by(|a, b| a.id.cmp(&b.id));

        let mut outgoing = vec![Vec::new(); sorted.len()];
        let mut in_degree = vec![0; sorted.len()];
        for (i, link) in links.iter().enumerate() {
            if let Some(out) = outgoing.get_mut(link.tail) {
                out.push(i);
            }
            if let Some(d) = in_degree.get_mut(link.head) {
                *d += 1;
            }
        }
        Network {
            delta_t,
            nodes: sorted,
            links,
            battery,
            charge_dist,
            rewards,
            demand,
            outgoing,
            in_degree,
        }
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, v: usize) -> &Node {
        &self.nodes[v]
    }

    pub fn link(&self, e: usize) -> &Link {
        &self.links[e]
    }

    pub fn battery(&self) -> &BatteryModel {
        &self.battery
    }

    pub fn charge_dist(&self) -> &ChargeDurationDist {
        &self.charge_dist
    }

    pub fn rewards(&self) -> &RewardParams {
        &self.rewards
    }

    pub fn demand(&self) -> Option<Demand> {
        self.demand
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes
            .binary_search_by(|n| n.id.as_str().cmp(id))
            .ok()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links
            .binary_search_by(|l| l.id.as_str().cmp(id))
            .ok()
    }

    pub fn require_node(&self, id: &str) -> Result<usize> {
        self.node_index(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Links leaving `v`, ordered by id.
    pub fn outgoing(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    /// Nodes that head no link.
    pub fn is_source(&self, v: usize) -> bool {
        self.in_degree[v] == 0
    }

    /// Nodes that tail no link.
    pub fn is_sink(&self, v: usize) -> bool {
        self.outgoing[v].is_empty()
    }

    pub fn ticks_to_minutes(&self, ticks: u32) -> f64 {
        ticks as f64 * self.delta_t
    }

    /// Resolves a demand given by node ids and checks the demand assumptions.
    pub fn demand_between(&self, origin: &str, destination: &str) -> Result<Demand> {
        let demand = Demand {
            origin: self.require_node(origin)?,
            destination: self.require_node(destination)?,
        };
        self.check_demand(demand)?;
        Ok(demand)
    }

    pub fn check_demand(&self, demand: Demand) -> Result<()> {
        let n = self.nodes.len();
        if demand.origin >= n || demand.destination >= n {
            return Err(Error::InvalidDemand("node index out of range".into()));
        }
        if demand.origin == demand.destination {
            return Err(Error::InvalidDemand(
                "origin and destination coincide".into(),
            ));
        }
        if !self.is_source(demand.origin) {
            return Err(Error::InvalidDemand(format!(
                "origin `{}` is the head of some link",
                self.nodes[demand.origin].id
            )));
        }
        if !self.is_sink(demand.destination) {
            return Err(Error::InvalidDemand(format!(
                "destination `{}` is the tail of some link",
                self.nodes[demand.destination].id
            )));
        }
        Ok(())
    }

    /// The demand recorded in the network, validated.
    pub fn require_demand(&self) -> Result<Demand> {
        let demand = self
            .demand
            .ok_or_else(|| Error::InvalidDemand("network has no demand".into()))?;
        self.check_demand(demand)?;
        Ok(demand)
    }

    fn rebuild(&self, nodes: Vec<Node>, links: Vec<Link>, demand: Option<Demand>) -> Network {
        Network::from_parts(
            self.delta_t,
            nodes,
            links,
            self.battery,
            self.charge_dist.clone(),
            self.rewards,
            demand,
        )
    }

    /// Keeps the nodes of `keep` (by index) and the links between them that
    /// `keep_link` accepts.
    fn induced(
        &self,
        keep: &[bool],
        keep_link: impl Fn(usize) -> bool,
        demand: Option<Demand>,
    ) -> Network {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (v, node) in self.nodes.iter().enumerate() {
            if keep[v] {
                remap[v] = nodes.len();
                nodes.push(node.clone());
            }
        }
        let links = self
            .links
            .iter()
            .enumerate()
            .filter(|&(e, l)| keep[l.tail] && keep[l.head] && keep_link(e))
            .map(|(_, l)| Link {
                tail: remap[l.tail],
                head: remap[l.head],
                ..l.clone()
            })
            .collect();
        let demand = demand.map(|d| Demand {
            origin: remap[d.origin],
            destination: remap[d.destination],
        });
        self.rebuild(nodes, links, demand)
    }

    /// The sub-network relevant to flying from `origin` to `destination`:
    /// links into the origin are dropped, then only nodes reachable from
    /// the origin that can still reach the destination are kept. The
    /// result has the origin as its only source and the destination as
    /// its only sink.
    pub fn restrict_to_demand(&self, origin: usize, destination: usize) -> Result<Network> {
        if origin == destination {
            return Err(Error::InvalidDemand(
                "origin and destination coincide".into(),
            ));
        }
        let usable = |e: usize| {
            let l = &self.links[e];
            l.head != origin && l.tail != destination
        };
        let n = self.nodes.len();
        let mut forward = vec![false; n];
        let mut queue = VecDeque::from([origin]);
        forward[origin] = true;
        while let Some(v) = queue.pop_front() {
            for &e in &self.outgoing[v] {
                let h = self.links[e].head;
                if usable(e) && !forward[h] {
                    forward[h] = true;
                    queue.push_back(h);
                }
            }
        }
        let mut incoming = vec![Vec::new(); n];
        for (e, l) in self.links.iter().enumerate() {
            if usable(e) {
                incoming[l.head].push(l.tail);
            }
        }
        let mut backward = vec![false; n];
        backward[destination] = true;
        queue.push_back(destination);
        while let Some(v) = queue.pop_front() {
            for &t in &incoming[v] {
                if !backward[t] {
                    backward[t] = true;
                    queue.push_back(t);
                }
            }
        }
        if !forward[destination] {
            return Err(Error::InvalidDemand(format!(
                "`{}` cannot reach `{}`",
                self.nodes[origin].id, self.nodes[destination].id
            )));
        }
        let keep: Vec<bool> = (0..n).map(|v| forward[v] && backward[v]).collect();
        Ok(self.induced(&keep, usable, Some(Demand { origin, destination })))
    }

    /// The network made of a route's nodes and links only, with the
    /// route's endpoints as demand.
    pub fn restrict_to_route(&self, route: &Route) -> Network {
        let mut keep = vec![false; self.nodes.len()];
        for v in route.nodes(self) {
            keep[v] = true;
        }
        let on_route: Vec<bool> = (0..self.links.len())
            .map(|e| route.links.contains(&e))
            .collect();
        self.induced(
            &keep,
            |e| on_route[e],
            Some(Demand {
                origin: route.origin(self),
                destination: route.destination(self),
            }),
        )
    }

    /// Same network with every queue length set to zero.
    pub fn with_zero_queues(&self) -> Network {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node::with_fixed_queue(n.id.clone(), n.capacity, 0))
            .collect();
        self.rebuild(nodes, self.links.clone(), self.demand)
    }

    /// Same network with a different per-step charge time (in ticks); the
    /// full-charge time changes accordingly.
    pub fn with_charge_step_time(&self, ticks: u32) -> Network {
        let mut out = self.clone();
        out.battery.charge_step_time = ticks;
        out
    }

    pub fn with_demand(&self, demand: Demand) -> Network {
        let mut out = self.clone();
        out.demand = Some(demand);
        out
    }
}

/// Incremental construction of small networks, mostly for tests and
/// examples. Durations are given in ticks.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    delta_t: f64,
    nodes: Vec<Node>,
    links: Vec<(String, String, String, u32, Vec<f64>)>,
    battery: BatteryModel,
    charge_dist: Option<ChargeDurationDist>,
    rewards: Option<RewardParams>,
    demand: Option<(String, String)>,
}

impl NetworkBuilder {
    pub fn new(delta_t: f64, battery: BatteryModel) -> Self {
        NetworkBuilder {
            delta_t,
            nodes: Vec::new(),
            links: Vec::new(),
            battery,
            charge_dist: None,
            rewards: None,
            demand: None,
        }
    }

    pub fn node(mut self, id: &str, capacity: u32, queue_min: u32, queue_pmf: Vec<f64>) -> Self {
        let queue_max = queue_min + queue_pmf.len().saturating_sub(1) as u32;
        self.nodes.push(Node {
            id: id.to_string(),
            capacity,
            queue_min,
            queue_max,
            queue_pmf,
        });
        self
    }

    pub fn fixed_node(mut self, id: &str, capacity: u32, queue: u32) -> Self {
        self.nodes.push(Node::with_fixed_queue(id, capacity, queue));
        self
    }

    pub fn link(mut self, id: &str, tail: &str, head: &str, x_lower: u32, pmf: Vec<f64>) -> Self {
        self.links
            .push((id.into(), tail.into(), head.into(), x_lower, pmf));
        self
    }

    pub fn charge_dist(mut self, pmf: Vec<f64>) -> Self {
        self.charge_dist = Some(ChargeDurationDist { pmf });
        self
    }

    pub fn rewards(mut self, rewards: RewardParams) -> Self {
        self.rewards = Some(rewards);
        self
    }

    pub fn demand(mut self, origin: &str, destination: &str) -> Self {
        self.demand = Some((origin.into(), destination.into()));
        self
    }

    /// Builds without validation. Unknown endpoint ids are an error.
    pub fn build_unchecked(self) -> Result<Network> {
        let find = |id: &str| {
            self.nodes
                .iter()
                .position(|n| n.id == id)
                .ok_or_else(|| Error::UnknownNode(id.to_string()))
        };
        let links = self
            .links
            .iter()
            .map(|(id, t, h, x, pmf)| {
                Ok(Link {
                    id: id.clone(),
                    tail: find(t)?,
                    head: find(h)?,
                    x_lower: *x,
                    travel_pmf: pmf.clone(),
                    distance_miles: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let demand = match &self.demand {
            Some((o, d)) => Some(Demand {
                origin: find(o)?,
                destination: find(d)?,
            }),
            None => None,
        };
        let charge_dist = self
            .charge_dist
            .clone()
            .unwrap_or_else(|| ChargeDurationDist::uniform(self.battery.charge_levels()));
        let rewards = self
            .rewards
            .unwrap_or_else(|| RewardParams::per_minute(self.delta_t));
        Ok(Network::from_parts(
            self.delta_t,
            self.nodes,
            links,
            self.battery,
            charge_dist,
            rewards,
            demand,
        ))
    }

    /// Builds and rejects any error-severity violation.
    pub fn build(self) -> Result<Network> {
        let network = self.build_unchecked()?;
        let errors: Vec<Violation> = validate(&network)
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .collect();
        if errors.is_empty() {
            Ok(network)
        } else {
            Err(Error::Validation(errors))
        }
    }
}
