//! Value iteration, policy iteration and policy analysis.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{Action, MdpModel};
use crate::model::Network;

/// Relative gap below which two action values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sweep {
    /// Synchronous, parallel and bit-reproducible.
    #[default]
    Jacobi,
    /// In place, single-threaded.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub sweep: Sweep,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 0.99,
            tolerance: 1e-8,
            max_iterations: 100_000,
            sweep: Sweep::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

/// A deterministic policy over the states of one model; `None` marks a
/// state the policy does not cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub actions: Vec<Option<Action>>,
}

impl Policy {
    pub fn get(&self, s: usize) -> Option<Action> {
        self.actions.get(s).copied().flatten()
    }
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub values: ValueFunction,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Max-norm residual of every sweep.
    pub residuals: Vec<f64>,
}

fn q_value(model: &MdpModel, s: usize, a: usize, v: &[f64], gamma: f64) -> f64 {
    model
        .row(s, a)
        .iter()
        .map(|t| t.prob * (t.reward + gamma * v[t.next]))
        .sum()
}

fn best_value(model: &MdpModel, s: usize, v: &[f64], gamma: f64) -> f64 {
    (0..model.actions(s).len())
        .map(|a| q_value(model, s, a, v, gamma))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Bellman sweeps from zero until the max-norm change drops below the
/// tolerance. Hitting `max_iterations` is reported as non-convergence.
pub fn value_iteration(model: &MdpModel, config: &SolverConfig) -> Result<ValueIteration> {
    config.check()?;
    let g = config.gamma;
    let mut v = vec![0.0; model.len()];
    let mut residuals = Vec::new();
    let mut residual = f64::INFINITY;
    while residuals.len() < config.max_iterations {
        residual = match config.sweep {
            Sweep::Jacobi => {
                let next: Vec<f64> = (0..model.len())
                    .into_par_iter()
                    .map(|s| best_value(model, s, &v, g))
                    .collect();
                let r = max_diff(&next, &v);
                v = next;
                r
            }
            Sweep::GaussSeidel => {
                let mut r: f64 = 0.0;
                for s in 0..model.len() {
                    let new = best_value(model, s, &v, g);
                    r = r.max((new - v[s]).abs());
                    v[s] = new;
                }
                r
            }
        };
        residuals.push(residual);
        if residual < config.tolerance {
            break;
        }
    }
    Ok(ValueIteration {
        values: ValueFunction { values: v },
        iterations: residuals.len(),
        converged: residual < config.tolerance,
        residual,
        residuals,
    })
}

fn is_better(candidate: f64, incumbent: f64) -> bool {
    candidate - incumbent > TIE_TOLERANCE * incumbent.abs().max(1.0)
}

/// Greedy policy; among tied actions the first in the model's order wins.
pub fn extract_policy(model: &MdpModel, values: &ValueFunction, gamma: f64) -> Policy {
    let actions = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let mut best = 0;
            let mut best_q = q_value(model, s, 0, &values.values, gamma);
            for a in 1..model.actions(s).len() {
                let q = q_value(model, s, a, &values.values, gamma);
                if is_better(q, best_q) {
                    best = a;
                    best_q = q;
                }
            }
            Some(model.actions(s)[best])
        })
        .collect();
    Policy { actions }
}

/// Action slot of the policy at every state, failing on gaps or actions
/// the model does not offer.
fn slots(model: &MdpModel, policy: &Policy, states: impl Iterator<Item = usize>) -> Result<Vec<usize>> {
    let mut out = vec![usize::MAX; model.len()];
    for s in states {
        let action = policy
            .get(s)
            .ok_or_else(|| Error::PolicyUndefined(format!("{:?}", model.states[s])))?;
        out[s] = model.action_slot(s, action).ok_or_else(|| Error::ActionUnavailable {
            state: format!("{:?}", model.states[s]),
            action: action.to_string(),
        })?;
    }
    Ok(out)
}

fn evaluate_slots(model: &MdpModel, slot: &[usize], config: &SolverConfig, start: Vec<f64>) -> Vec<f64> {
    let g = config.gamma;
    let mut v = start;
    for _ in 0..config.max_iterations {
        let next: Vec<f64> = (0..model.len())
            .into_par_iter()
            .map(|s| {
                if slot[s] == usize::MAX {
                    0.0
                } else {
                    q_value(model, s, slot[s], &v, g)
                }
            })
            .collect();
        let r = max_diff(&next, &v);
        v = next;
        if r < config.tolerance {
            break;
        }
    }
    v
}

/// Value of a fixed policy, by iterating its Bellman operator.
pub fn policy_evaluation(model: &MdpModel, policy: &Policy, config: &SolverConfig) -> Result<ValueFunction> {
    config.check()?;
    let slot = slots(model, policy, 0..model.len())?;
    Ok(ValueFunction {
        values: evaluate_slots(model, &slot, config, vec![0.0; model.len()]),
    })
}

#[derive(Debug, Clone)]
pub struct PolicyIteration {
    pub policy: Policy,
    pub values: ValueFunction,
    pub improvements: usize,
}

/// Evaluation and greedy improvement until no action changes. An action
/// is only replaced by a strictly better one.
pub fn policy_iteration(model: &MdpModel, config: &SolverConfig) -> Result<PolicyIteration> {
    config.check()?;
    let g = config.gamma;
    let mut slot = vec![0usize; model.len()];
    let mut v = vec![0.0; model.len()];
    let mut improvements = 0;
    loop {
        v = evaluate_slots(model, &slot, config, v);
        let next: Vec<usize> = (0..model.len())
            .into_par_iter()
            .map(|s| {
                let mut best = slot[s];
                let mut best_q = q_value(model, s, best, &v, g);
                for a in 0..model.actions(s).len() {
                    let q = q_value(model, s, a, &v, g);
                    if is_better(q, best_q) {
                        best = a;
                        best_q = q;
                    }
                }
                best
            })
            .collect();
        if next == slot || improvements >= config.max_iterations {
            break;
        }
        slot = next;
        improvements += 1;
    }
    let actions = (0..model.len()).map(|s| Some(model.actions(s)[slot[s]])).collect();
    Ok(PolicyIteration {
        policy: Policy { actions },
        values: ValueFunction { values: v },
        improvements,
    })
}

/// States reachable from `from` under `policy`, in visiting order.
pub fn reachable_under(model: &MdpModel, policy: &Policy, from: usize) -> Result<Vec<usize>> {
    let mut seen = vec![false; model.len()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(s) = queue.pop_front() {
        order.push(s);
        let action = policy
            .get(s)
            .ok_or_else(|| Error::PolicyUndefined(format!("{:?}", model.states[s])))?;
        let row = model.row_for(s, action).ok_or_else(|| Error::ActionUnavailable {
            state: format!("{:?}", model.states[s]),
            action: action.to_string(),
        })?;
        for t in row {
            if !seen[t.next] {
                seen[t.next] = true;
                queue.push_back(t.next);
            }
        }
    }
    Ok(order)
}

/// The first state reachable from `from` at which the policy has no
/// available action, following the policy wherever it is defined.
pub fn first_uncovered(model: &MdpModel, policy: &Policy, from: usize) -> Option<usize> {
    let mut seen = vec![false; model.len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(s) = queue.pop_front() {
        let Some(row) = policy.get(s).and_then(|a| model.row_for(s, a)) else {
            return Some(s);
        };
        for t in row {
            if !seen[t.next] {
                seen[t.next] = true;
                queue.push_back(t.next);
            }
        }
    }
    None
}

/// Probability of ever entering an exhaustion state from `from` under the
/// policy. Iterates the absorption equations up from zero, so it is
/// exactly zero when no exhaustion state is reachable.
pub fn exhaustion_probability(model: &MdpModel, policy: &Policy, from: usize) -> Result<f64> {
    let reach = reachable_under(model, policy, from)?;
    if !reach.iter().any(|&s| model.states[s].is_exhausted()) {
        return Ok(0.0);
    }
    let slot = slots(model, policy, reach.iter().copied())?;
    let mut x = vec![0.0; model.len()];
    for &s in &reach {
        if model.states[s].is_exhausted() {
            x[s] = 1.0;
        }
    }
    // Gauss-Seidel in reverse visiting order converges in one pass on
    // acyclic chains
    let interior: Vec<usize> = reach
        .iter()
        .rev()
        .copied()
        .filter(|&s| !model.states[s].is_exhausted())
        .collect();
    for _ in 0..1_000_000 {
        let mut change: f64 = 0.0;
        for &s in &interior {
            let new: f64 = model.row(s, slot[s]).iter().map(|t| t.prob * x[t.next]).sum();
            change = change.max((new - x[s]).abs());
            x[s] = new;
        }
        if change < 1e-12 {
            break;
        }
    }
    Ok(x[from])
}

/// Writes `state_idx, state_descr, action_descr, value`.
pub fn write_policy_csv<W: Write>(
    model: &MdpModel,
    network: &Network,
    policy: &Policy,
    values: &ValueFunction,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["state_idx", "state_descr", "action_descr", "value"])?;
    for s in 0..model.len() {
        let action = policy.get(s).map(|a| a.describe(network)).unwrap_or_default();
        w.write_record([
            s.to_string(),
            model.states[s].describe(network),
            action,
            format!("{:.12e}", values.values[s]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a policy written by [`write_policy_csv`], matching states by
/// description. Rows for states outside the model are ignored.
pub fn read_policy_csv<R: Read>(model: &MdpModel, network: &Network, reader: R) -> Result<Policy> {
    let by_descr: HashMap<String, usize> = (0..model.len())
        .map(|s| (model.states[s].describe(network), s))
        .collect();
    let mut actions = vec![None; model.len()];
    let mut r = csv::Reader::from_reader(reader);
    for record in r.records() {
        let record = record?;
        let (Some(descr), Some(action)) = (record.get(1), record.get(2)) else {
            return Err(Error::Config("policy row needs state_descr and action_descr".into()));
        };
        if let (Some(&s), false) = (by_descr.get(descr), action.is_empty()) {
            actions[s] = Some(Action::parse(action, network)?);
        }
    }
    Ok(Policy { actions })
}
