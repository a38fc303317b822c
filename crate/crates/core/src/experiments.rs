//! The case-study experiments: worst-case optimal routes, the fraction of
//! queue settings a route or link stays safe under, and the time saved by
//! optimized charging over always charging to full.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{build_mdp, MdpModel};
use crate::model::{Demand, Network, Route};
use crate::rollout::{trace_route, EpisodeOutcome, RolloutConfig, Simulator, TracedRoute};
use crate::safety::full_charge_policy;
use crate::solver::{extract_policy, value_iteration, Policy, SolverConfig, ValueIteration};

/// An optimal policy over the states reachable from the initial state.
#[derive(Debug, Clone)]
pub struct Solution {
    pub full_states: usize,
    pub model: MdpModel,
    pub vi: ValueIteration,
    pub policy: Policy,
}

impl Solution {
    pub fn initial_value(&self) -> f64 {
        self.vi.values.values[self.model.initial]
    }
}

pub fn solve(network: &Network, demand: Demand, config: &SolverConfig) -> Result<Solution> {
    let full = build_mdp(network, demand)?;
    let model = full.reachable_subset(full.initial);
    let vi = value_iteration(&model, config)?;
    let policy = extract_policy(&model, &vi.values, config.gamma);
    Ok(Solution {
        full_states: full.len(),
        model,
        vi,
        policy,
    })
}

fn worst_case_trace(
    network: &Network,
    demand: Demand,
    model: &MdpModel,
    policy: &Policy,
    gamma: f64,
) -> Result<(TracedRoute, f64)> {
    let config = RolloutConfig {
        gamma,
        ..RolloutConfig::default()
    };
    let t = Simulator::new(network, demand, model, policy, config)?.worst_case()?;
    if t.outcome != EpisodeOutcome::Arrived {
        return Err(Error::NotArrived);
    }
    Ok((trace_route(&t, network)?, t.total_time))
}

/// Re-expresses a route of `from` in the link indices of `to`.
pub fn map_route(route: &Route, from: &Network, to: &Network) -> Result<Route> {
    let ids: Vec<&str> = route.links.iter().map(|&e| from.link(e).id.as_str()).collect();
    Route::from_ids(&ids, to)
}

/// The route the optimal policy flies when every travel time, queue and
/// charge duration takes its largest value. The route is expressed in
/// the links of `network`.
pub fn worst_case_route(network: &Network, demand: Demand, config: &SolverConfig) -> Result<TracedRoute> {
    let sub = network.restrict_to_demand(demand.origin, demand.destination)?;
    let d = sub.require_demand()?;
    let sol = solve(&sub, d, config)?;
    let (traced, _) = worst_case_trace(&sub, d, &sol.model, &sol.policy, config.gamma)?;
    let route = map_route(&traced.route, &sub, network)?;
    let landings = traced
        .landings
        .into_iter()
        .map(|mut l| {
            l.node = network
                .node_index(&sub.node(l.node).id)
                .expect("sub-network nodes exist in the network");
            l
        })
        .collect();
    Ok(TracedRoute { route, landings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QsafeCase {
    Route,
    Link,
}

impl QsafeCase {
    pub fn name(&self) -> &'static str {
        match self {
            QsafeCase::Route => "route",
            QsafeCase::Link => "link",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsafeRow {
    pub case: QsafeCase,
    pub qmax: u32,
    pub n_safe: u64,
    pub n_total: u64,
}

impl QsafeRow {
    pub fn r_safe(&self) -> f64 {
        if self.n_total == 0 {
            f64::NAN
        } else {
            self.n_safe as f64 / self.n_total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct QsafeOutcome {
    pub rows: Vec<QsafeRow>,
    /// Worst-case optimal route per origin, by origin id.
    pub routes: Vec<(String, Route)>,
}

impl QsafeOutcome {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["case", "qmax", "n_safe", "n_total", "r_safe"])?;
        for r in &self.rows {
            w.write_record([
                r.case.name().to_string(),
                r.qmax.to_string(),
                r.n_safe.to_string(),
                r.n_total.to_string(),
                format!("{:.12}", r.r_safe()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn link_safe_with(network: &Network, link: usize, queue_max: u32) -> bool {
    let l = network.link(link);
    let c = network.node(l.head).capacity;
    let b = network.battery();
    c > 0 && l.x_upper() + b.full_charge_time() * (queue_max / c) <= b.capacity
}

/// Route case: every non-destination node is an origin; its worst-case
/// optimal route under empty queues is fixed, and every assignment of
/// maximal queue lengths from `qmax` to the nodes after the origin is
/// checked against the battery bound, grouped by the assignment's largest
/// entry. Link case: one row per maximal queue length at the head of each
/// link.
pub fn experiment_qsafe(
    network: &Network,
    qmax: RangeInclusive<u32>,
    config: &SolverConfig,
) -> Result<QsafeOutcome> {
    if qmax.is_empty() {
        return Err(Error::Config("queue-length range is empty".into()));
    }
    let dest = network.require_demand()?.destination;
    let base = network.with_zero_queues();
    let origins: Vec<usize> = (0..network.nodes().len()).filter(|&v| v != dest).collect();
    let routes: Vec<(String, Route)> = origins
        .par_iter()
        .map(|&o| {
            let r = worst_case_route(&base, Demand { origin: o, destination: dest }, config)?;
            Ok((network.node(o).id.clone(), r.route))
        })
        .collect::<Result<_>>()?;

    let values: Vec<u32> = qmax.clone().collect();
    let mut safe_by_max: BTreeMap<u32, (u64, u64)> = values.iter().map(|&q| (q, (0, 0))).collect();
    for (_, route) in &routes {
        let l = route.links.len();
        let mut combo = vec![0usize; l];
        loop {
            let top = combo.iter().map(|&i| values[i]).max().expect("nonempty route");
            let safe = route
                .links
                .iter()
                .zip(&combo)
                .all(|(&e, &i)| link_safe_with(network, e, values[i]));
            let entry = safe_by_max.get_mut(&top).expect("value in range");
            entry.0 += u64::from(safe);
            entry.1 += 1;
            let mut i = 0;
            while i < l && combo[i] + 1 == values.len() {
                combo[i] = 0;
                i += 1;
            }
            if i == l {
                break;
            }
            combo[i] += 1;
        }
    }
    let mut rows: Vec<QsafeRow> = safe_by_max
        .into_iter()
        .map(|(q, (n_safe, n_total))| QsafeRow {
            case: QsafeCase::Route,
            qmax: q,
            n_safe,
            n_total,
        })
        .collect();
    for &q in &values {
        let n_safe = (0..network.links().len())
            .filter(|&e| link_safe_with(network, e, q))
            .count() as u64;
        rows.push(QsafeRow {
            case: QsafeCase::Link,
            qmax: q,
            n_safe,
            n_total: network.links().len() as u64,
        });
    }
    Ok(QsafeOutcome { rows, routes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargingRow {
    pub origin: String,
    pub full_charge_minutes: f64,
    pub t_optimal: f64,
    pub t_naive: f64,
    pub route: String,
}

impl ChargingRow {
    pub fn r_charging(&self) -> f64 {
        self.t_optimal / self.t_naive
    }
}

pub fn write_charging_csv<W: Write>(rows: &[ChargingRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["origin", "T_B", "t_optimal", "t_naive", "r_charging"])?;
    for r in rows {
        w.write_record([
            r.origin.clone(),
            r.full_charge_minutes.to_string(),
            format!("{:.12}", r.t_optimal),
            format!("{:.12}", r.t_naive),
            format!("{:.12}", r.r_charging()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// For each origin, fixes the worst-case optimal route under empty queues,
/// then for each full-charge time compares the worst-case total time of
/// the optimal policy restricted to that route against landing and
/// charging to full at every stop.
pub fn experiment_charging(
    network: &Network,
    origins: &[String],
    full_charge_minutes: &[f64],
    config: &SolverConfig,
) -> Result<Vec<ChargingRow>> {
    if origins.is_empty() || full_charge_minutes.is_empty() {
        return Err(Error::Config("origins and charge-time range must be nonempty".into()));
    }
    let dest = network.require_demand()?.destination;
    let base = network.with_zero_queues();
    let levels = base.battery().charge_levels();
    let dt = base.delta_t();
    let step_ticks = |tb: f64| -> Result<u32> {
        let ticks = tb / levels as f64 / dt;
        if ticks >= 1.0 && (ticks - ticks.round()).abs() < 1e-9 {
            Ok(ticks.round() as u32)
        } else {
            Err(Error::OffGrid {
                minutes: tb / levels as f64,
                delta_t: dt,
            })
        }
    };
    let mut jobs = Vec::new();
    for id in origins {
        let origin = base.require_node(id)?;
        let route = worst_case_route(&base, Demand { origin, destination: dest }, config)?.route;
        for &tb in full_charge_minutes {
            jobs.push((id.clone(), route.clone(), tb, step_ticks(tb)?));
        }
    }
    jobs.par_iter()
        .map(|(id, route, tb, ticks)| {
            let net = base.with_charge_step_time(*ticks);
            let sub = net.restrict_to_route(route);
            let d = sub.require_demand()?;
            let sub_route = map_route(route, &net, &sub)?;
            let sol = solve(&sub, d, config)?;
            let (_, t_optimal) = worst_case_trace(&sub, d, &sol.model, &sol.policy, config.gamma)?;
            let naive = full_charge_policy(&sub_route, &sub, &sol.model);
            let (_, t_naive) = worst_case_trace(&sub, d, &sol.model, &naive, config.gamma)?;
            Ok(ChargingRow {
                origin: id.clone(),
                full_charge_minutes: *tb,
                t_optimal,
                t_naive,
                route: sub_route.describe(&sub),
            })
        })
        .collect()
}
