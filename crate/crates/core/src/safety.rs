//! The worst-case battery bound on links, the search for a route that
//! satisfies it everywhere, and the land-and-fully-charge policy along such
//! a route.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::mdp::{Action, MdpModel, State};
use crate::model::{Demand, Network, Route};
use crate::solver::Policy;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkVerdict {
    pub link: usize,
    /// Worst-case travel plus worst-case queue wait at the head, in ticks;
    /// `None` when the head has no landing spots.
    pub lhs_ticks: Option<u32>,
    pub bound_ticks: u32,
    pub safe: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    pub links: Vec<LinkVerdict>,
    pub safe: bool,
}

impl SafetyReport {
    pub fn first_unsafe(&self) -> Option<&LinkVerdict> {
        self.links.iter().find(|v| !v.safe)
    }

    /// `link_id, lhs_minutes, B_minutes, safe`; the lhs is empty for a
    /// head without landing spots.
    pub fn write_csv<W: Write>(&self, network: &Network, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["link_id", "lhs_minutes", "B_minutes", "safe"])?;
        for v in &self.links {
            w.write_record([
                network.link(v.link).id.clone(),
                v.lhs_ticks
                    .map(|t| network.ticks_to_minutes(t).to_string())
                    .unwrap_or_default(),
                network.ticks_to_minutes(v.bound_ticks).to_string(),
                v.safe.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn link_verdict(link: usize, network: &Network) -> LinkVerdict {
    let l = network.link(link);
    let head = network.node(l.head);
    let battery = network.battery();
    let lhs_ticks = (head.capacity > 0)
        .then(|| l.x_upper() + battery.full_charge_time() * (head.queue_max / head.capacity));
    LinkVerdict {
        link,
        lhs_ticks,
        bound_ticks: battery.capacity,
        safe: lhs_ticks.is_some_and(|t| t <= battery.capacity),
    }
}

/// Whether the worst-case flight over the link plus the worst-case wait at
/// its head fits in one full battery.
pub fn is_safe_link(link: usize, network: &Network) -> bool {
    link_verdict(link, network).safe
}

pub fn is_safe_route(route: &Route, network: &Network) -> SafetyReport {
    let links: Vec<LinkVerdict> = route.links.iter().map(|&e| link_verdict(e, network)).collect();
    SafetyReport {
        safe: links.iter().all(|v| v.safe),
        links,
    }
}

/// Verdicts for every link of the network.
pub fn network_report(network: &Network) -> SafetyReport {
    let links: Vec<LinkVerdict> = (0..network.links().len())
        .map(|e| link_verdict(e, network))
        .collect();
    SafetyReport {
        safe: links.iter().all(|v| v.safe),
        links,
    }
}

/// Shortest route over safe links, weighting each link by its worst-case
/// travel time plus a full charge. Equal-cost routes are ordered by their
/// link-id sequence.
pub fn find_safe_route(network: &Network, demand: Demand) -> Option<Route> {
    let weight = |e: usize| (network.link(e).x_upper() + network.battery().full_charge_time()) as u64;
    let mut settled = vec![false; network.nodes().len()];
    let mut heap = BinaryHeap::from([Reverse((0u64, Vec::<usize>::new(), demand.origin))]);
    while let Some(Reverse((cost, path, v))) = heap.pop() {
        if settled[v] {
            continue;
        }
        settled[v] = true;
        if v == demand.destination {
            return Route::new(path, network).ok();
        }
        for &e in network.outgoing(v) {
            let h = network.link(e).head;
            if !settled[h] && is_safe_link(e, network) {
                let mut p = path.clone();
                p.push(e);
                heap.push(Reverse((cost + weight(e), p, h)));
            }
        }
    }
    None
}

/// Land at every stop of the route, charge to full and take the next
/// route link. Off-route states take their first available action. The
/// route is not checked for safety.
pub fn full_charge_policy(route: &Route, network: &Network, model: &MdpModel) -> Policy {
    let dest = route.destination(network);
    let full = network.battery().capacity;
    let next_link = |v: usize| route.links.iter().copied().find(|&e| network.link(e).tail == v);
    let actions = (0..model.len())
        .map(|s| {
            let available = model.actions(s);
            let chosen = match model.states[s] {
                State::Decision { link, .. } if route.links.contains(&link) => Some(Action::Charge),
                State::Charging { node, .. } if node == dest => Some(Action::Default),
                State::Charging { node, battery } => next_link(node).map(|e| {
                    if battery < full {
                        Action::Charge
                    } else {
                        Action::ChooseLink(e)
                    }
                }),
                _ => None,
            };
            Some(
                chosen
                    .filter(|a| available.contains(a))
                    .unwrap_or(available[0]),
            )
        })
        .collect();
    Policy { actions }
}

/// [`full_charge_policy`] over a route that must satisfy the battery bound
/// on every link.
pub fn conservative_policy(route: &Route, network: &Network, model: &MdpModel) -> Result<Policy> {
    let report = is_safe_route(route, network);
    if let Some(v) = report.first_unsafe() {
        return Err(Error::UnsafeRoute(network.link(v.link).id.clone()));
    }
    Ok(full_charge_policy(route, network, model))
}
