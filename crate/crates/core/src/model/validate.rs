use std::fmt;

use super::{Network, PMF_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// One violated model constraint, located by a path into the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl Violation {
    pub fn error(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn warning(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag} at {}: {}", self.location, self.message)
    }
}

pub(crate) fn check_pmf(pmf: &[f64], location: &str, out: &mut Vec<Violation>) {
    if pmf.is_empty() {
        out.push(Violation::error(location, "distribution has no support"));
        return;
    }
    if let Some(i) = pmf.iter().position(|p| !p.is_finite() || *p < 0.0) {
        out.push(Violation::error(
            location,
            format!("entry {i} is {} (must be a nonnegative probability)", pmf[i]),
        ));
        return;
    }
    let sum: f64 = pmf.iter().sum();
    if (sum - 1.0).abs() > PMF_TOLERANCE {
        out.push(Violation::error(
            location,
            format!("probabilities sum to {sum}, not 1"),
        ));
    }
}

/// Checks every model invariant. Never fails; each finding is returned as
/// a [`Violation`].
pub fn validate(network: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(network.delta_t().is_finite() && network.delta_t() > 0.0) {
        out.push(Violation::error(
            "delta_t",
            format!("time step must be positive, got {}", network.delta_t()),
        ));
    }

    let n = network.nodes().len();
    for (v, node) in network.nodes().iter().enumerate() {
        let loc = format!("nodes[{}]", node.id);
        if node.queue_min > node.queue_max {
            out.push(Violation::error(
                &loc,
                format!(
                    "queue_min {} exceeds queue_max {}",
                    node.queue_min, node.queue_max
                ),
            ));
        } else if node.queue_pmf.len() != (node.queue_max - node.queue_min + 1) as usize {
            out.push(Violation::error(
                format!("{loc}.queue_pmf"),
                format!(
                    "expected {} entries for queue lengths {}..={}, got {}",
                    node.queue_max - node.queue_min + 1,
                    node.queue_min,
                    node.queue_max,
                    node.queue_pmf.len()
                ),
            ));
        } else {
            check_pmf(&node.queue_pmf, &format!("{loc}.queue_pmf"), &mut out);
        }
        if node.capacity == 0 && !network.is_source(v) {
            out.push(Violation::warning(
                &loc,
                "capacity 0: no aircraft can land at this node",
            ));
        }
        if network.is_source(v) && network.is_sink(v) {
            out.push(Violation::error(
                &loc,
                "node is both a source and a sink (isolated)",
            ));
        }
    }

    let battery = network.battery();
    let mut battery_ok = true;
    if battery.capacity == 0 {
        out.push(Violation::error("battery.capacity", "capacity must be positive"));
        battery_ok = false;
    }
    if battery.charge_step == 0 {
        out.push(Violation::error(
            "battery.charge_step",
            "charge step must be positive",
        ));
        battery_ok = false;
    } else if battery.capacity % battery.charge_step != 0 {
        out.push(Violation::error(
            "battery.charge_step",
            format!(
                "capacity ({} steps) is not a multiple of the charge step ({} steps)",
                battery.capacity, battery.charge_step
            ),
        ));
        battery_ok = false;
    }
    if battery.charge_step_time == 0 {
        out.push(Violation::error(
            "battery.charge_step_time",
            "charge step time must be positive",
        ));
    } else if battery.charge_step_time > battery.capacity {
        out.push(Violation::error(
            "battery.charge_step_time",
            format!(
                "charge step time ({} steps) exceeds the battery capacity ({} steps)",
                battery.charge_step_time, battery.capacity
            ),
        ));
    }

    let cd = network.charge_dist();
    if battery_ok && cd.pmf.len() != battery.charge_levels() as usize {
        out.push(Violation::error(
            "charge_dist.pmf",
            format!(
                "expected {} entries (one per charge level), got {}",
                battery.charge_levels(),
                cd.pmf.len()
            ),
        ));
    } else {
        check_pmf(&cd.pmf, "charge_dist.pmf", &mut out);
    }

    let r = network.rewards();
    if !(r.r_t < 0.0 && r.r_t.is_finite()) {
        out.push(Violation::error("rewards.r_t", "travel reward must be negative"));
    }
    if !(r.r_d < 0.0 && r.r_d.is_finite()) {
        out.push(Violation::error(
            "rewards.r_d",
            "exhaustion penalty must be negative",
        ));
    }
    if !(r.r_a > 0.0 && r.r_a.is_finite()) {
        out.push(Violation::error("rewards.r_a", "arrival reward must be positive"));
    }

    for link in network.links() {
        let loc = format!("links[{}]", link.id);
        if link.tail >= n || link.head >= n {
            out.push(Violation::error(&loc, "endpoint is not a known node"));
            continue;
        }
        if link.tail == link.head {
            out.push(Violation::error(&loc, "tail and head coincide"));
        }
        if link.x_lower == 0 {
            out.push(Violation::error(
                format!("{loc}.x_lower"),
                "minimum travel time must be a positive multiple of delta_t",
            ));
        }
        check_pmf(&link.travel_pmf, &format!("{loc}.travel_pmf"), &mut out);
    }

    if let Some(d) = network.demand() {
        if d.origin >= n || d.destination >= n {
            out.push(Violation::error("demand", "unknown node"));
        } else {
            if d.origin == d.destination {
                out.push(Violation::error("demand", "origin equals destination"));
            }
            if !network.is_source(d.origin) {
                out.push(Violation::error(
                    "demand.origin",
                    format!(
                        "`{}` is the head of some link (must be a source)",
                        network.node(d.origin).id
                    ),
                ));
            }
            if !network.is_sink(d.destination) {
                out.push(Violation::error(
                    "demand.destination",
                    format!(
                        "`{}` is the tail of some link (must be a sink)",
                        network.node(d.destination).id
                    ),
                ));
            }
        }
    }
    out
}
