//! The JSON network document and its conversion to and from [`Network`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::validate::{validate, Severity, Violation};
use super::{
    BatteryModel, ChargeDurationDist, Demand, Link, Network, Node, RewardParams,
};
use crate::error::{Error, Result};

const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    /// Time step in minutes.
    pub delta_t: f64,
    /// Top speed in mph; required when any link gives `distance_miles`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    pub battery: BatteryDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_dist: Option<ChargeDistDoc>,
    pub rewards: RewardsDoc,
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<DemandDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryDoc {
    pub capacity: f64,
    pub charge_step: f64,
    pub charge_step_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeDistDoc {
    /// Keyed by the number of charge steps, 1-based.
    pub pmf: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardsDoc {
    pub r_t: f64,
    pub r_d: f64,
    pub r_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: String,
    pub capacity: u32,
    pub queue_min: u32,
    pub queue_max: u32,
    /// Keyed by queue length; defaults to a point mass at `queue_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_pmf: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDoc {
    pub id: String,
    pub tail: String,
    pub head: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_miles: Option<f64>,
    /// Keyed by travel time in minutes; defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_pmf: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandDoc {
    pub origin: String,
    pub destination: String,
}

fn ticks(minutes: f64, delta_t: f64) -> Option<u32> {
    if !(minutes.is_finite() && delta_t > 0.0) || minutes < 0.0 {
        return None;
    }
    let ratio = minutes / delta_t;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= GRID_TOLERANCE * ratio.max(1.0) && rounded <= u32::MAX as f64 {
        Some(rounded as u32)
    } else {
        None
    }
}

/// Case-study discretization of a corridor: the minimum travel time is the
/// distance at top speed rounded to the grid, the maximum is 20% above it,
/// floored to the grid, plus one step. Returns ticks.
pub fn case_study_link_ticks(distance_miles: f64, v_max: f64, delta_t: f64) -> Result<(u32, u32)> {
    if !(distance_miles > 0.0 && v_max > 0.0 && delta_t > 0.0) {
        return Err(Error::Config(format!(
            "distance ({distance_miles}), v_max ({v_max}) and delta_t ({delta_t}) must be positive"
        )));
    }
    let lower = (distance_miles / v_max * 60.0 / delta_t).round();
    if lower < 1.0 {
        return Err(Error::DegenerateLink {
            distance_miles,
            v_max,
        });
    }
    let lower = lower as u32;
    // floor(1.2 * lower) in exact integer arithmetic
    let upper = 6 * lower / 5 + 1;
    Ok((lower, upper))
}

/// [`case_study_link_ticks`] in minutes.
pub fn case_study_link_times(distance_miles: f64, v_max: f64, delta_t: f64) -> Result<(f64, f64)> {
    let (lo, hi) = case_study_link_ticks(distance_miles, v_max, delta_t)?;
    Ok((lo as f64 * delta_t, hi as f64 * delta_t))
}

/// Uniform travel-time pmf over the grid `x_lower, x_lower + delta_t, ..,
/// x_upper` (minutes).
pub fn uniform_travel_pmf(x_lower: f64, x_upper: f64, delta_t: f64) -> Result<Vec<f64>> {
    let spread = x_upper - x_lower;
    let k = ticks(spread, delta_t).ok_or(Error::OffGrid {
        minutes: spread,
        delta_t,
    })?;
    ticks(x_lower, delta_t).ok_or(Error::OffGrid {
        minutes: x_lower,
        delta_t,
    })?;
    let n = k as usize + 1;
    Ok(vec![1.0 / n as f64; n])
}

fn fmt_minutes(m: f64) -> String {
    format!("{m}")
}

impl NetworkDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    /// Re-discretizes the document at another time step. Links given by
    /// distance are re-derived; the per-step travel reward is rescaled so
    /// the per-minute cost is unchanged.
    pub fn with_delta_t(&self, delta_t: f64) -> NetworkDocument {
        let mut doc = self.clone();
        doc.rewards.r_t *= delta_t / self.delta_t;
        doc.delta_t = delta_t;
        for link in &mut doc.links {
            if link.distance_miles.is_some() {
                link.x_lower = None;
                link.x_upper = None;
                link.travel_pmf = None;
            }
        }
        doc
    }

    /// Lowers the document to a network. Grid and reference errors are
    /// collected as violations; the network is only built if there are none.
    pub fn to_network(&self) -> std::result::Result<Network, Vec<Violation>> {
        let mut errs = Vec::new();
        let dt = self.delta_t;
        if !(dt.is_finite() && dt > 0.0) {
            errs.push(Violation::error("delta_t", format!("must be positive, got {dt}")));
            return Err(errs);
        }

        let mut battery = BatteryModel::new(0, 0, 0);
        let mut battery_ok = true;
        for (name, minutes, slot) in [
            ("capacity", self.battery.capacity, &mut battery.capacity),
            ("charge_step", self.battery.charge_step, &mut battery.charge_step),
            (
                "charge_step_time",
                self.battery.charge_step_time,
                &mut battery.charge_step_time,
            ),
        ] {
            match ticks(minutes, dt) {
                Some(t) if t > 0 => *slot = t,
                _ => {
                    battery_ok = false;
                    errs.push(Violation::error(
                        format!("battery.{name}"),
                        format!("{minutes} min is not a positive multiple of delta_t = {dt} (divisibility)"),
                    ));
                }
            }
        }
        if battery_ok && battery.capacity % battery.charge_step != 0 {
            battery_ok = false;
            errs.push(Violation::error(
                "battery.charge_step",
                format!(
                    "capacity {} min is not a multiple of charge_step {} min (divisibility)",
                    self.battery.capacity, self.battery.charge_step
                ),
            ));
        }

        let charge_dist = match (&self.charge_dist, battery_ok) {
            (None, _) => ChargeDurationDist::uniform(battery.charge_levels()),
            (Some(doc), ok) => {
                let levels = if ok {
                    battery.charge_levels()
                } else {
                    doc.pmf.len() as u32
                };
                let mut pmf = vec![0.0; levels as usize];
                for (key, &p) in &doc.pmf {
                    match key.trim().parse::<u32>() {
                        Ok(k) if k >= 1 && k <= levels => pmf[k as usize - 1] += p,
                        _ => errs.push(Violation::error(
                            format!("charge_dist.pmf[{key}]"),
                            format!("charge index must be an integer in 1..={levels}"),
                        )),
                    }
                }
                ChargeDurationDist { pmf }
            }
        };

        let mut node_index = HashMap::new();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, nd) in self.nodes.iter().enumerate() {
            if node_index.insert(nd.id.clone(), i).is_some() {
                errs.push(Violation::error(
                    format!("nodes[{}]", nd.id),
                    "duplicate node id",
                ));
            }
            let queue_pmf = match &nd.queue_pmf {
                _ if nd.queue_min > nd.queue_max => Vec::new(),
                None => {
                    let mut v = vec![0.0; (nd.queue_max - nd.queue_min + 1) as usize];
                    *v.last_mut().expect("nonempty") = 1.0;
                    v
                }
                Some(map) => {
                    let mut v = vec![0.0; (nd.queue_max - nd.queue_min + 1) as usize];
                    for (key, &p) in map {
                        match key.trim().parse::<u32>() {
                            Ok(q) if q >= nd.queue_min && q <= nd.queue_max => {
                                v[(q - nd.queue_min) as usize] += p
                            }
                            _ => errs.push(Violation::error(
                                format!("nodes[{}].queue_pmf[{key}]", nd.id),
                                format!(
                                    "queue length must be an integer in {}..={}",
                                    nd.queue_min, nd.queue_max
                                ),
                            )),
                        }
                    }
                    v
                }
            };
            nodes.push(Node {
                id: nd.id.clone(),
                capacity: nd.capacity,
                queue_min: nd.queue_min,
                queue_max: nd.queue_max,
                queue_pmf,
            });
        }

        let mut link_ids = HashMap::new();
        let mut links = Vec::with_capacity(self.links.len());
        for ld in &self.links {
            let loc = format!("links[{}]", ld.id);
            if link_ids.insert(ld.id.clone(), ()).is_some() {
                errs.push(Violation::error(&loc, "duplicate link id"));
            }
            let tail = node_index.get(&ld.tail).copied();
            let head = node_index.get(&ld.head).copied();
            if tail.is_none() {
                errs.push(Violation::error(
                    format!("{loc}.tail"),
                    format!("unknown node `{}`", ld.tail),
                ));
            }
            if head.is_none() {
                errs.push(Violation::error(
                    format!("{loc}.head"),
                    format!("unknown node `{}`", ld.head),
                ));
            }

            let bounds: Option<(u32, u32)> = match (ld.x_lower, ld.x_upper, ld.distance_miles) {
                (Some(lo), hi, _) => {
                    let hi = hi.unwrap_or(lo);
                    let lo_t = ticks(lo, dt);
                    let spread = ticks(hi - lo, dt);
                    if lo_t.is_none() {
                        errs.push(Violation::error(
                            format!("{loc}.x_lower"),
                            format!("x_lower/delta_t = {} is not a natural number (divisibility)", lo / dt),
                        ));
                    }
                    if spread.is_none() {
                        errs.push(Violation::error(
                            format!("{loc}.x_upper"),
                            format!(
                                "(x_upper - x_lower)/delta_t = {} is not a nonnegative integer (divisibility)",
                                (hi - lo) / dt
                            ),
                        ));
                    }
                    lo_t.zip(spread).map(|(l, s)| (l, l + s))
                }
                (None, _, Some(dist)) => match self.v_max {
                    None => {
                        errs.push(Violation::error(
                            &loc,
                            "distance_miles given but the document has no v_max",
                        ));
                        None
                    }
                    Some(v) => match case_study_link_ticks(dist, v, dt) {
                        Ok(b) => Some(b),
                        Err(e) => {
                            errs.push(Violation::error(format!("{loc}.distance_miles"), e.to_string()));
                            None
                        }
                    },
                },
                (None, _, None) => {
                    errs.push(Violation::error(
                        &loc,
                        "either x_lower/x_upper or distance_miles is required",
                    ));
                    None
                }
            };

            let Some((lo, hi)) = bounds else { continue };
            let n = (hi - lo + 1) as usize;
            let travel_pmf = match &ld.travel_pmf {
                None => vec![1.0 / n as f64; n],
                Some(map) => {
                    let mut v = vec![0.0; n];
                    for (key, &p) in map {
                        let at = key.trim().parse::<f64>().ok().and_then(|m| ticks(m, dt));
                        match at {
                            Some(t) if t >= lo && t <= hi => v[(t - lo) as usize] += p,
                            _ => errs.push(Violation::error(
                                format!("{loc}.travel_pmf[{key}]"),
                                format!(
                                    "travel time must lie on the grid {}..={} min in steps of {dt}",
                                    lo as f64 * dt,
                                    hi as f64 * dt
                                ),
                            )),
                        }
                    }
                    v
                }
            };
            if let (Some(tail), Some(head)) = (tail, head) {
                links.push(Link {
                    id: ld.id.clone(),
                    tail,
                    head,
                    x_lower: lo,
                    travel_pmf,
                    distance_miles: ld.distance_miles,
                });
            }
        }

        let demand = self.demand.as_ref().and_then(|d| {
            let o = node_index.get(&d.origin).copied();
            let t = node_index.get(&d.destination).copied();
            if o.is_none() {
                errs.push(Violation::error(
                    "demand.origin",
                    format!("unknown node `{}`", d.origin),
                ));
            }
            if t.is_none() {
                errs.push(Violation::error(
                    "demand.destination",
                    format!("unknown node `{}`", d.destination),
                ));
            }
            Some(Demand {
                origin: o?,
                destination: t?,
            })
        });

        if !errs.is_empty() {
            return Err(errs);
        }
        let rewards = RewardParams {
            r_t: self.rewards.r_t,
            r_d: self.rewards.r_d,
            r_a: self.rewards.r_a,
        };
        Ok(Network::from_parts(
            dt,
            nodes,
            links,
            battery,
            charge_dist,
            rewards,
            demand,
        ))
    }
}

impl Network {
    /// The document form: explicit grid bounds and pmfs everywhere.
    pub fn to_document(&self) -> NetworkDocument {
        let dt = self.delta_t();
        let b = self.battery();
        NetworkDocument {
            delta_t: dt,
            v_max: None,
            battery: BatteryDoc {
                capacity: b.capacity as f64 * dt,
                charge_step: b.charge_step as f64 * dt,
                charge_step_time: b.charge_step_time as f64 * dt,
            },
            charge_dist: Some(ChargeDistDoc {
                pmf: self
                    .charge_dist()
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| ((i + 1).to_string(), p))
                    .collect(),
            }),
            rewards: RewardsDoc {
                r_t: self.rewards().r_t,
                r_d: self.rewards().r_d,
                r_a: self.rewards().r_a,
            },
            nodes: self
                .nodes()
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.clone(),
                    capacity: n.capacity,
                    queue_min: n.queue_min,
                    queue_max: n.queue_max,
                    queue_pmf: Some(
                        n.queue_support()
                            .map(|(q, p)| (q.to_string(), p))
                            .collect(),
                    ),
                })
                .collect(),
            links: self
                .links()
                .iter()
                .map(|l| LinkDoc {
                    id: l.id.clone(),
                    tail: self.node(l.tail).id.clone(),
                    head: self.node(l.head).id.clone(),
                    x_lower: Some(l.x_lower as f64 * dt),
                    x_upper: Some(l.x_upper() as f64 * dt),
                    distance_miles: l.distance_miles,
                    travel_pmf: Some(
                        l.travel_pmf
                            .iter()
                            .enumerate()
                            .map(|(k, &p)| (fmt_minutes((l.x_lower + k as u32) as f64 * dt), p))
                            .collect(),
                    ),
                })
                .collect(),
            demand: self.demand().map(|d| DemandDoc {
                origin: self.node(d.origin).id.clone(),
                destination: self.node(d.destination).id.clone(),
            }),
        }
    }
}

fn reject_errors(network: Network) -> Result<Network> {
    let mut found = validate(&network);
    found.retain(|v| v.severity == Severity::Error);
    if found.is_empty() {
        Ok(network)
    } else {
        Err(Error::Validation(found))
    }
}

/// Parses and validates a network document.
pub fn load_network(text: &str) -> Result<Network> {
    NetworkDocument::from_json(text)?.load()
}

pub fn load_network_file(path: impl AsRef<Path>) -> Result<Network> {
    load_network(&std::fs::read_to_string(path)?)
}

impl NetworkDocument {
    /// [`NetworkDocument::to_network`] followed by validation.
    pub fn load(&self) -> Result<Network> {
        let net = self.to_network().map_err(Error::Validation)?;
        reject_errors(net)
    }
}
