//! The routing MDP: state space, action sets and the sparse transition and
//! reward structure.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Demand, Network};
use crate::stochastics::{hazards_from_pmf, wait_pmf_dp, WaitDistribution};

/// Tolerance on transition rows summing to one.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Node and link fields are indices into the network; battery and tick
/// fields count time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    /// Hovering at a node waiting for a landing spot.
    Queue { node: usize, battery: u32 },
    /// Landed at a node.
    Charging { node: usize, battery: u32 },
    /// `tick` steps past the link's minimum travel time without arrival.
    LinkTravel { link: usize, tick: u32, battery: u32 },
    /// Arrived at the head of `link`, choosing whether to land.
    Decision { link: usize, battery: u32 },
    Target,
}

impl State {
    pub fn battery(&self) -> Option<u32> {
        match *self {
            State::Queue { battery, .. }
            | State::Charging { battery, .. }
            | State::LinkTravel { battery, .. }
            | State::Decision { battery, .. } => Some(battery),
            State::Target => None,
        }
    }

    /// Battery-exhaustion sinks.
    pub fn is_exhausted(&self) -> bool {
        matches!(
            self,
            State::Queue { battery: 0, .. } | State::LinkTravel { battery: 0, .. }
        )
    }

    pub fn describe(&self, network: &Network) -> String {
        match *self {
            State::Queue { node, battery } => {
                format!("queue({},kb={battery})", network.node(node).id)
            }
            State::Charging { node, battery } => {
                format!("charging({},kb={battery})", network.node(node).id)
            }
            State::LinkTravel { link, tick, battery } => {
                format!("travel({},k={tick},kb={battery})", network.link(link).id)
            }
            State::Decision { link, battery } => {
                format!("decision({},kb={battery})", network.link(link).id)
            }
            State::Target => "target".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// Land, or keep charging.
    Charge,
    ChooseLink(usize),
    Default,
}

impl Action {
    pub fn describe(&self, network: &Network) -> String {
        match *self {
            Action::Charge => "charge".into(),
            Action::ChooseLink(e) => format!("link:{}", network.link(e).id),
            Action::Default => "default".into(),
        }
    }

    /// Inverse of [`Action::describe`].
    pub fn parse(text: &str, network: &Network) -> Result<Action> {
        match text {
            "charge" => Ok(Action::Charge),
            "default" => Ok(Action::Default),
            _ => {
                let id = text
                    .strip_prefix("link:")
                    .ok_or_else(|| Error::Config(format!("unrecognized action `{text}`")))?;
                network
                    .link_index(id)
                    .map(Action::ChooseLink)
                    .ok_or_else(|| Error::UnknownLink(id.to_string()))
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Charge => write!(f, "charge"),
            Action::ChooseLink(e) => write!(f, "link#{e}"),
            Action::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// A transition whose successor is not yet indexed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: State,
    pub prob: f64,
    pub reward: f64,
}

fn outcome(next: State, prob: f64, reward: f64) -> Outcome {
    Outcome { next, prob, reward }
}

/// Exact count of enumerated states.
pub fn state_count_formula(network: &Network) -> usize {
    let kb = network.battery().capacity as usize;
    let mut total = 1;
    for v in 0..network.nodes().len() {
        total += if network.is_source(v) { 1 } else { kb + (kb + 1) };
    }
    for l in network.links() {
        total += (l.spread() as usize + 1) * (kb + 1) + (kb + 1);
    }
    total
}

/// Every state, ordered by family, then node or link index, then tick and
/// battery.
pub fn enumerate_states(network: &Network) -> Vec<State> {
    let kb = network.battery().capacity;
    let n = network.nodes().len();
    let mut out = Vec::with_capacity(state_count_formula(network));
    for node in (0..n).filter(|&v| !network.is_source(v)) {
        out.extend((0..kb).map(|battery| State::Queue { node, battery }));
    }
    for node in 0..n {
        if network.is_source(node) {
            out.push(State::Charging { node, battery: kb });
        } else {
            out.extend((0..=kb).map(|battery| State::Charging { node, battery }));
        }
    }
    for (link, l) in network.links().iter().enumerate() {
        for tick in 0..=l.spread() {
            out.extend((0..=kb).map(|battery| State::LinkTravel { link, tick, battery }));
        }
    }
    for link in 0..network.links().len() {
        out.extend((0..=kb).map(|battery| State::Decision { link, battery }));
    }
    out.push(State::Target);
    out
}

/// Everything needed to evaluate action sets and transitions: the network,
/// the demand, per-node wait pmfs and per-link hazards.
#[derive(Debug, Clone)]
pub struct MdpContext<'a> {
    pub network: &'a Network,
    pub demand: Demand,
    /// Unbounded wait pmf per node, in ticks.
    pub waits: Vec<BTreeMap<u32, f64>>,
    pub hazards: Vec<Vec<f64>>,
}

impl<'a> MdpContext<'a> {
    pub fn new(network: &'a Network, demand: Demand) -> Result<Self> {
        network.check_demand(demand)?;
        let waits = network
            .nodes()
            .iter()
            .map(|node| wait_pmf_dp(node, network.battery(), network.charge_dist()))
            .collect();
        let mut hazards = Vec::with_capacity(network.links().len());
        for link in network.links() {
            let h = hazards_from_pmf(&link.travel_pmf);
            let last = h.last().copied().unwrap_or(0.0);
            if last != 1.0 {
                return Err(Error::OpenHazard {
                    link: link.id.clone(),
                    value: last,
                });
            }
            hazards.push(h);
        }
        Ok(MdpContext {
            network,
            demand,
            waits,
            hazards,
        })
    }

    pub fn wait_distribution(&self, node: usize, battery: u32) -> WaitDistribution {
        WaitDistribution::bounded(&self.network.node(node).id, &self.waits[node], battery)
    }

    fn full(&self) -> u32 {
        self.network.battery().capacity
    }

    pub fn available_actions(&self, state: State) -> Result<Vec<Action>> {
        let net = self.network;
        let links = |v: usize| net.outgoing(v).iter().map(|&e| Action::ChooseLink(e));
        Ok(match state {
            State::Queue { .. } => vec![Action::Charge],
            State::Charging { node, .. } if node == self.demand.destination => vec![Action::Default],
            State::Charging { node, battery } => {
                let mut out = Vec::new();
                if battery < self.full() {
                    out.push(Action::Charge);
                }
                if battery == self.full() || net.battery().is_charge_level(battery) {
                    out.extend(links(node));
                }
                if out.is_empty() {
                    return Err(Error::DeadEnd(state.describe(net)));
                }
                out
            }
            State::LinkTravel { .. } | State::Target => vec![Action::Default],
            State::Decision { link, .. } => {
                let mut out = vec![Action::Charge];
                out.extend(links(net.link(link).head));
                out
            }
        })
    }

    fn depart(&self, link: usize, battery: u32) -> Outcome {
        let x = self.network.link(link).x_lower;
        let after = battery.saturating_sub(x);
        outcome(
            State::LinkTravel {
                link,
                tick: 0,
                battery: after,
            },
            1.0,
            self.network.rewards().r_t * (battery - after) as f64,
        )
    }

    fn queue(&self, node: usize, battery: u32) -> Vec<Outcome> {
        let r = self.network.rewards();
        if battery == 0 {
            return vec![outcome(State::Queue { node, battery: 0 }, 1.0, r.r_d)];
        }
        let wait = self.wait_distribution(node, battery);
        let mut out: Vec<Outcome> = wait
            .pmf
            .iter()
            .filter(|&(_, &p)| p > 0.0)
            .map(|(&k, &p)| {
                outcome(
                    State::Charging {
                        node,
                        battery: battery - k,
                    },
                    p,
                    r.r_t * k as f64,
                )
            })
            .collect();
        if wait.overflow > 0.0 {
            out.push(outcome(State::Queue { node, battery: 0 }, wait.overflow, r.r_d));
        }
        out
    }

    /// Successor distribution of `action` in `state`.
    pub fn transitions(&self, state: State, action: Action) -> Result<Vec<Outcome>> {
        let net = self.network;
        let r = net.rewards();
        let available = self.available_actions(state)?;
        if !available.contains(&action) {
            return Err(Error::ActionUnavailable {
                state: state.describe(net),
                action: action.describe(net),
            });
        }
        Ok(match (state, action) {
            (State::Queue { node, battery }, _) => self.queue(node, battery),
            (State::Charging { .. }, Action::Default) => vec![outcome(State::Target, 1.0, r.r_a)],
            (State::Charging { node, battery }, Action::Charge) => vec![outcome(
                State::Charging {
                    node,
                    battery: battery + 1,
                },
                1.0,
                r.r_b(net.battery()),
            )],
            (State::Charging { battery, .. }, Action::ChooseLink(e)) => vec![self.depart(e, battery)],
            (State::LinkTravel { link, tick, battery }, _) => {
                if battery == 0 {
                    vec![outcome(state, 1.0, r.r_d)]
                } else {
                    let p = self.hazards[link][tick as usize];
                    let mut out = Vec::with_capacity(2);
                    if p > 0.0 {
                        out.push(outcome(State::Decision { link, battery }, p, 0.0));
                    }
                    if p < 1.0 {
                        out.push(outcome(
                            State::LinkTravel {
                                link,
                                tick: tick + 1,
                                battery: battery - 1,
                            },
                            1.0 - p,
                            r.r_t,
                        ));
                    }
                    out
                }
            }
            (State::Decision { link, battery }, Action::Charge) => {
                let node = net.link(link).head;
                if battery < self.full() {
                    vec![outcome(State::Queue { node, battery }, 1.0, 0.0)]
                } else {
                    // no queue state holds a full battery; hover directly
                    self.queue(node, battery)
                }
            }
            (State::Decision { battery, .. }, Action::ChooseLink(e)) => vec![self.depart(e, battery)],
            (State::Target, _) => vec![outcome(State::Target, 1.0, 0.0)],
            _ => unreachable!("availability checked above"),
        })
    }
}

/// Available actions of `state`; fails on a dead end.
pub fn available_actions(state: State, network: &Network, demand: Demand) -> Result<Vec<Action>> {
    MdpContext::new(network, demand)?.available_actions(state)
}

/// The assembled MDP. Rows are stored flat: the actions of state `s` are
/// `action_start[s]..action_start[s + 1]`, and the transitions of action
/// slot `a` are `row_start[a]..row_start[a + 1]`.
#[derive(Debug, Clone)]
pub struct MdpModel {
    pub states: Vec<State>,
    pub initial: usize,
    index: HashMap<State, usize>,
    action_start: Vec<usize>,
    action_list: Vec<Action>,
    row_start: Vec<usize>,
    entries: Vec<Transition>,
}

impl MdpModel {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn target(&self) -> Option<usize> {
        self.index_of(&State::Target)
    }

    pub fn actions(&self, s: usize) -> &[Action] {
        &self.action_list[self.action_start[s]..self.action_start[s + 1]]
    }

    /// Transitions of the `a`-th available action of `s`.
    pub fn row(&self, s: usize, a: usize) -> &[Transition] {
        let slot = self.action_start[s] + a;
        &self.entries[self.row_start[slot]..self.row_start[slot + 1]]
    }

    pub fn action_slot(&self, s: usize, action: Action) -> Option<usize> {
        self.actions(s).iter().position(|&a| a == action)
    }

    pub fn row_for(&self, s: usize, action: Action) -> Option<&[Transition]> {
        self.action_slot(s, action).map(|a| self.row(s, a))
    }

    pub fn transition_count(&self) -> usize {
        self.entries.len()
    }

    fn assemble(states: Vec<State>, initial: State, rows: Vec<Vec<(Action, Vec<Outcome>)>>) -> Result<Self> {
        let index: HashMap<State, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut action_start = Vec::with_capacity(states.len() + 1);
        let mut action_list = Vec::new();
        let mut row_start = vec![0];
        let mut entries = Vec::new();
        action_start.push(0);
        for per_state in rows {
            for (action, outs) in per_state {
                action_list.push(action);
                for o in outs {
                    let next = *index.get(&o.next).ok_or_else(|| {
                        Error::UnknownState(format!("{:?}", o.next))
                    })?;
                    entries.push(Transition {
                        next,
                        prob: o.prob,
                        reward: o.reward,
                    });
                }
                row_start.push(entries.len());
            }
            action_start.push(action_list.len());
        }
        let initial = *index
            .get(&initial)
            .ok_or_else(|| Error::UnknownState(format!("{initial:?}")))?;
        Ok(MdpModel {
            states,
            initial,
            index,
            action_start,
            action_list,
            row_start,
            entries,
        })
    }

    /// States reachable from `from` under any choice of actions, in their
    /// original order, with `from` as the initial state.
    pub fn reachable_subset(&self, from: usize) -> MdpModel {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(s) = queue.pop_front() {
            for a in 0..self.actions(s).len() {
                for t in self.row(s, a) {
                    if !seen[t.next] {
                        seen[t.next] = true;
                        queue.push_back(t.next);
                    }
                }
            }
        }
        let kept: Vec<usize> = (0..self.len()).filter(|&s| seen[s]).collect();
        let mut remap = vec![usize::MAX; self.len()];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let mut out = MdpModel {
            states: kept.iter().map(|&s| self.states[s]).collect(),
            initial: remap[from],
            index: HashMap::with_capacity(kept.len()),
            action_start: vec![0],
            action_list: Vec::new(),
            row_start: vec![0],
            entries: Vec::new(),
        };
        for (new, &old) in kept.iter().enumerate() {
            out.index.insert(self.states[old], new);
            for a in 0..self.actions(old).len() {
                out.action_list.push(self.actions(old)[a]);
                out.entries.extend(self.row(old, a).iter().map(|t| Transition {
                    next: remap[t.next],
                    ..*t
                }));
                out.row_start.push(out.entries.len());
            }
            out.action_start.push(out.action_list.len());
        }
        out
    }

    /// Debug export: one CSV row per transition.
    pub fn write_csv<W: Write>(&self, network: &Network, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["state_idx", "state_descr", "action", "succ_idx", "prob", "reward"])?;
        for s in 0..self.len() {
            let descr = self.states[s].describe(network);
            for (a, action) in self.actions(s).iter().enumerate() {
                for t in self.row(s, a) {
                    w.write_record([
                        s.to_string(),
                        descr.clone(),
                        action.describe(network),
                        t.next.to_string(),
                        format!("{:.12e}", t.prob),
                        format!("{}", t.reward),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the full MDP of `network` for `demand` and checks that every
/// row is a probability distribution.
pub fn build_mdp(network: &Network, demand: Demand) -> Result<MdpModel> {
    let ctx = MdpContext::new(network, demand)?;
    let states = enumerate_states(network);
    let mut rows = Vec::with_capacity(states.len());
    for &state in &states {
        let actions = ctx.available_actions(state)?;
        let mut per_state = Vec::with_capacity(actions.len());
        for action in actions {
            let outs = ctx.transitions(state, action)?;
            let sum: f64 = outs.iter().map(|o| o.prob).sum();
            let bad = outs
                .iter()
                .any(|o| !(0.0..=1.0 + ROW_TOLERANCE).contains(&o.prob) || !o.reward.is_finite());
            if bad || (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::NotStochastic {
                    state: state.describe(network),
                    action: action.describe(network),
                    sum,
                });
            }
            per_state.push((action, outs));
        }
        rows.push(per_state);
    }
    let initial = State::Charging {
        node: demand.origin,
        battery: network.battery().capacity,
    };
    MdpModel::assemble(states, initial, rows)
}
