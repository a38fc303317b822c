//! Probability computations consumed by the MDP and the simulator: link
//! hazard probabilities, the queue-wait distribution at a vertistop, and
//! samplers for the generative model.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BatteryModel, ChargeDurationDist, Link, Node};

/// Default bound on the number of charge-duration vectors the enumerating
/// wait computation may visit per node.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Conditional arrival probabilities of a link: `p[k]` is the probability
/// of arriving after `x_lower + k` ticks given no arrival before.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardVector {
    pub link: String,
    pub p: Vec<f64>,
}

/// Hazards of a grid pmf. Undefined conditionals (no mass left) are 1.
pub fn hazards_from_pmf(pmf: &[f64]) -> Vec<f64> {
    let mut tail = 0.0;
    let mut out = vec![0.0; pmf.len()];
    for k in (0..pmf.len()).rev() {
        tail += pmf[k];
        out[k] = if tail > 0.0 { pmf[k] / tail } else { 1.0 };
    }
    if let Some(last) = out.last_mut() {
        // f/f is 1 already unless the entry is 0, in which case the
        // conditional is undefined and set to 1 as well
        *last = 1.0;
    }
    out
}

pub fn hazard_probabilities(link: &Link) -> HazardVector {
    HazardVector {
        link: link.id.clone(),
        p: hazards_from_pmf(&link.travel_pmf),
    }
}

/// Inverse of [`hazard_probabilities`].
pub fn reconstruct_pmf(h: &HazardVector) -> Vec<f64> {
    let mut survive = 1.0;
    h.p.iter()
        .map(|&p| {
            let f = p * survive;
            survive *= 1.0 - p;
            f
        })
        .collect()
}

/// Probability that the aircraft ahead charge for the given numbers of
/// charge steps, independently.
pub fn charge_vector_probability(vec: &[u32], charge_dist: &ChargeDurationDist) -> f64 {
    vec.iter().map(|&k| charge_dist.prob(k)).product()
}

/// Greedy spot assignment: every aircraft takes the spot that frees up
/// first (lowest index on ties) and occupies it for its duration. Returns
/// the time the next spot frees up after all have been placed, in the
/// units of `durations`.
pub fn greedy_wait(capacity: u32, durations: &[u32]) -> u32 {
    assert!(capacity > 0, "greedy_wait needs at least one spot");
    let mut busy = vec![0u32; capacity as usize];
    for &d in durations {
        let n = first_argmin(&busy);
        busy[n] += d;
    }
    busy.iter().copied().min().expect("capacity > 0")
}

fn first_argmin(w: &[u32]) -> usize {
    let mut best = 0;
    for (i, &x) in w.iter().enumerate() {
        if x < w[best] {
            best = i;
        }
    }
    best
}

/// Distribution of the hover time before landing, bounded by the battery.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitDistribution {
    pub node: String,
    /// Battery index of the querying aircraft; waits of this many ticks or
    /// more exhaust it.
    pub max_wait_ticks: u32,
    /// Wait in ticks to probability, only waits below `max_wait_ticks`.
    pub pmf: BTreeMap<u32, f64>,
    /// Probability of waiting `max_wait_ticks` or longer.
    pub overflow: f64,
}

impl WaitDistribution {
    /// Splits an unbounded wait pmf at `max_wait_ticks`.
    pub fn bounded(node: &str, full: &BTreeMap<u32, f64>, max_wait_ticks: u32) -> Self {
        let pmf: BTreeMap<u32, f64> = full
            .range(..max_wait_ticks)
            .map(|(&k, &p)| (k, p))
            .collect();
        let overflow = full.range(max_wait_ticks..).map(|(_, &p)| p).sum();
        WaitDistribution {
            node: node.to_string(),
            max_wait_ticks,
            pmf,
            overflow,
        }
    }

    pub fn total(&self) -> f64 {
        self.pmf.values().sum::<f64>() + self.overflow
    }

    pub fn expected_wait(&self) -> f64 {
        self.pmf.iter().map(|(&k, &p)| k as f64 * p).sum()
    }
}

/// Unbounded wait pmf of a node (ticks to probability) by explicit
/// enumeration of charge-duration vectors. Capacity 0 puts all mass at
/// `u32::MAX`, i.e. the aircraft never lands.
pub fn wait_pmf_enumerated(
    node: &Node,
    battery: &BatteryModel,
    charge_dist: &ChargeDurationDist,
    cap: u128,
) -> Result<BTreeMap<u32, f64>> {
    let mut full = BTreeMap::new();
    if node.capacity == 0 {
        full.insert(u32::MAX, 1.0);
        return Ok(full);
    }
    let levels = charge_dist.max_index();
    let vectors: u128 = node
        .queue_support()
        .filter(|&(q, p)| p > 0.0 && q >= node.capacity)
        .map(|(q, _)| (levels as u128).saturating_pow(q))
        .fold(0u128, |a, b| a.saturating_add(b));
    if vectors > cap {
        return Err(Error::EnumerationCap {
            node: node.id.clone(),
            vectors,
            cap,
        });
    }

    for (q, pq) in node.queue_support() {
        if pq <= 0.0 {
            continue;
        }
        if q < node.capacity {
            *full.entry(0).or_insert(0.0) += pq;
            continue;
        }
        let mut conditional: BTreeMap<u32, f64> = BTreeMap::new();
        let mut vec = vec![1u32; q as usize];
        loop {
            let p = charge_vector_probability(&vec, charge_dist);
            if p > 0.0 {
                let t = greedy_wait(node.capacity, &vec) * battery.charge_step_time;
                *conditional.entry(t).or_insert(0.0) += p;
            }
            // odometer increment over {1..levels}^q
            let mut i = 0;
            while i < vec.len() && vec[i] == levels {
                vec[i] = 1;
                i += 1;
            }
            if i == vec.len() {
                break;
            }
            vec[i] += 1;
        }
        for (t, p) in conditional {
            *full.entry(t).or_insert(0.0) += pq * p;
        }
    }
    Ok(full)
}

/// [`wait_pmf_enumerated`] by dynamic programming over the multiset of
/// spot busy-until times; independent of the queue length's growth.
pub fn wait_pmf_dp(
    node: &Node,
    battery: &BatteryModel,
    charge_dist: &ChargeDurationDist,
) -> BTreeMap<u32, f64> {
    let mut full = BTreeMap::new();
    if node.capacity == 0 {
        full.insert(u32::MAX, 1.0);
        return full;
    }
    let c = node.capacity;
    let steps: Vec<(u32, f64)> = (1..=charge_dist.max_index())
        .map(|k| (k, charge_dist.prob(k)))
        .filter(|&(_, p)| p > 0.0)
        .collect();

    let mut layer: BTreeMap<Vec<u32>, f64> = BTreeMap::from([(vec![0; c as usize], 1.0)]);
    for q in 0..=node.queue_max {
        let pq = node.queue_prob(q);
        if pq > 0.0 {
            if q < c {
                *full.entry(0).or_insert(0.0) += pq;
            } else {
                let mut conditional: BTreeMap<u32, f64> = BTreeMap::new();
                for (busy, &p) in &layer {
                    *conditional.entry(busy[0]).or_insert(0.0) += p;
                }
                for (t, p) in conditional {
                    *full.entry(t * battery.charge_step_time).or_insert(0.0) += pq * p;
                }
            }
        }
        if q == node.queue_max {
            break;
        }
        let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (busy, &p) in &layer {
            for &(k, pk) in &steps {
                let mut b = busy.clone();
                b[0] += k;
                b.sort_unstable();
                *next.entry(b).or_insert(0.0) += p * pk;
            }
        }
        layer = next;
    }
    full
}

/// The wait distribution by enumeration of every charge-duration vector,
/// capped at [`ENUMERATION_CAP`] vectors.
pub fn queue_wait_distribution(
    node: &Node,
    battery: &BatteryModel,
    charge_dist: &ChargeDurationDist,
    max_wait_ticks: u32,
) -> Result<WaitDistribution> {
    let full = wait_pmf_enumerated(node, battery, charge_dist, ENUMERATION_CAP)?;
    Ok(WaitDistribution::bounded(&node.id, &full, max_wait_ticks))
}

pub fn queue_wait_distribution_dp(
    node: &Node,
    battery: &BatteryModel,
    charge_dist: &ChargeDurationDist,
    max_wait_ticks: u32,
) -> WaitDistribution {
    let full = wait_pmf_dp(node, battery, charge_dist);
    WaitDistribution::bounded(&node.id, &full, max_wait_ticks)
}

/// A categorical distribution over `offset, offset + 1, ..`.
#[derive(Debug, Clone)]
pub struct GridSampler {
    offset: u32,
    index: WeightedIndex<f64>,
}

impl GridSampler {
    pub fn new(offset: u32, pmf: &[f64]) -> Self {
        GridSampler {
            offset,
            index: WeightedIndex::new(pmf).expect("validated pmf has positive mass"),
        }
    }

    pub fn travel(link: &Link) -> Self {
        GridSampler::new(link.x_lower, &link.travel_pmf)
    }

    pub fn queue(node: &Node) -> Self {
        GridSampler::new(node.queue_min, &node.queue_pmf)
    }

    pub fn charge(dist: &ChargeDurationDist) -> Self {
        GridSampler::new(1, &dist.pmf)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.offset + self.index.sample(rng) as u32
    }
}

/// Travel time of a link in ticks.
pub fn sample_travel_time<R: Rng + ?Sized>(link: &Link, rng: &mut R) -> u32 {
    GridSampler::travel(link).sample(rng)
}

pub fn sample_queue_length<R: Rng + ?Sized>(node: &Node, rng: &mut R) -> u32 {
    GridSampler::queue(node).sample(rng)
}

/// Number of charge steps, at least 1.
pub fn sample_charge_duration<R: Rng + ?Sized>(dist: &ChargeDurationDist, rng: &mut R) -> u32 {
    GridSampler::charge(dist).sample(rng)
}
