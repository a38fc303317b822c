#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uam_routing::mdp::{MdpContext, MdpModel};
use uam_routing::model::{load_network_file, BatteryModel, Network, NetworkBuilder, NetworkDocument, RewardParams};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn origin_setting() -> Network {
    load_network_file(data("case_study_origin.json")).unwrap()
}

pub fn comparison_setting() -> Network {
    load_network_file(data("case_study_comparison.json")).unwrap()
}

/// A bundled setting re-discretized at another time step.
pub fn setting_at(name: &str, delta_t: f64) -> Network {
    let text = std::fs::read_to_string(data(name)).unwrap();
    NetworkDocument::from_json(&text)
        .unwrap()
        .with_delta_t(delta_t)
        .load()
        .unwrap()
}

pub fn random_pmf<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub nodes: usize,
    /// Largest extra queue beyond the minimum.
    pub queue_spread: usize,
    pub allow_zero_capacity: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            nodes: 4,
            queue_spread: 2,
            allow_zero_capacity: true,
        }
    }
}

/// A small random DAG `n0 -> .. -> n{k-1}` with the chain always present,
/// stochastic queues and travel times. Demand is from the first to the
/// last node.
pub fn random_network(seed: u64, shape: Shape) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = [4u32, 6, 8][rng.random_range(0..3)];
    let charge_step = if rng.random_bool(0.5) { capacity / 2 } else { capacity };
    let battery = BatteryModel::new(capacity, charge_step, rng.random_range(1..=2));
    let levels = battery.charge_levels() as usize;
    let mut b = NetworkBuilder::new(1.0, battery)
        .charge_dist(random_pmf(&mut rng, levels))
        .rewards(RewardParams {
            r_t: -rng.random_range(0.5..2.0),
            r_d: -rng.random_range(50.0..200.0),
            r_a: rng.random_range(50.0..200.0),
        });
    let k = shape.nodes;
    let names: Vec<String> = (0..k).map(|i| format!("n{i}")).collect();
    for name in &names {
        let cap = if shape.allow_zero_capacity && rng.random_bool(0.1) {
            0
        } else {
            rng.random_range(1..=2)
        };
        let len = rng.random_range(1..=shape.queue_spread + 1);
        b = b.node(name, cap, rng.random_range(0..=1), random_pmf(&mut rng, len));
    }
    for i in 0..k - 1 {
        for j in i + 1..k {
            if j == i + 1 || rng.random_bool(0.35) {
                let len = rng.random_range(1..=3);
                let lo = rng.random_range(1..=capacity / 2);
                b = b.link(
                    &format!("{}->{}", names[i], names[j]),
                    &names[i],
                    &names[j],
                    lo,
                    random_pmf(&mut rng, len),
                );
            }
        }
    }
    b.demand(&names[0], &names[k - 1]).build().unwrap()
}

/// Bellman backups over the explicit transition function, from zero, for
/// a fixed number of stages. Independent of the flat model's rows.
pub fn finite_horizon_values(network: &Network, model: &MdpModel, gamma: f64, horizon: usize) -> Vec<f64> {
    let ctx = MdpContext::new(network, network.require_demand().unwrap()).unwrap();
    let rows: Vec<Vec<Vec<(usize, f64, f64)>>> = model
        .states
        .iter()
        .map(|&s| {
            ctx.available_actions(s)
                .unwrap()
                .into_iter()
                .map(|a| {
                    ctx.transitions(s, a)
                        .unwrap()
                        .into_iter()
                        .map(|o| (model.index_of(&o.next).unwrap(), o.prob, o.reward))
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut v = vec![0.0; model.len()];
    for _ in 0..horizon {
        v = rows
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|row| row.iter().map(|&(n, p, r)| p * (r + gamma * v[n])).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v
}

/// Stages after which the discounted tail of rewards bounded by `r_max`
/// drops below `eps`.
pub fn horizon_for(gamma: f64, r_max: f64, eps: f64) -> usize {
    ((eps * (1.0 - gamma) / r_max).ln() / gamma.ln()).ceil() as usize
}
