mod common;

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uam_routing::mdp::{build_mdp, Action, MdpModel, State};
use uam_routing::model::Network;
use uam_routing::rollout::{EpisodeOutcome, LinkSampling, RolloutConfig, Simulator};
use uam_routing::solver::{exhaustion_probability, policy_evaluation, Policy, SolverConfig};

fn random_policy(m: &MdpModel, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Policy {
        actions: (0..m.len())
            .map(|s| {
                let a = m.actions(s);
                Some(a[rng.random_range(0..a.len())])
            })
            .collect(),
    }
}

fn setup(seed: u64) -> (Network, MdpModel, Policy) {
    let net = common::random_network(seed, common::Shape::default());
    let full = build_mdp(&net, net.require_demand().unwrap()).unwrap();
    let m = full.reachable_subset(full.initial);
    let p = random_policy(&m, seed ^ 0x5eed);
    (net, m, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn returns_and_times_add_up(seed in any::<u64>(), episode in 0u64..50, tick_by_tick in any::<bool>()) {
        let (net, m, p) = setup(seed);
        let config = RolloutConfig {
            gamma: 0.97,
            link_sampling: if tick_by_tick { LinkSampling::TickByTick } else { LinkSampling::SingleDraw },
            ..RolloutConfig::default()
        };
        let sim = Simulator::new(&net, net.require_demand().unwrap(), &m, &p, config).unwrap();
        let t = sim.sample_episode(seed, episode).unwrap();
        let r = *net.rewards();
        let r_b = r.r_b(net.battery());
        let per_index = net.battery().minutes_per_index(net.delta_t());

        let mut ret = 0.0;
        let mut discount = 1.0;
        for s in &t.steps {
            ret += discount * s.reward;
            discount *= config.gamma;
            let charge = matches!(s.state, State::Charging { .. }) && s.action == Action::Charge;
            if charge {
                prop_assert_eq!(s.reward, r_b);
                prop_assert!((s.elapsed_min - per_index).abs() < 1e-12);
            } else if s.reward == r.r_a || s.reward == r.r_d {
                continue;
            } else {
                let k = s.reward / r.r_t;
                prop_assert!((k - k.round()).abs() < 1e-9 && k > -1e-12, "{}", s.reward);
                prop_assert!((s.elapsed_min - k.round() * net.delta_t()).abs() < 1e-9);
            }
        }
        if t.outcome == EpisodeOutcome::Exhausted {
            ret += discount * r.r_d / (1.0 - config.gamma);
        }
        prop_assert!((ret - t.discounted_return).abs() <= 1e-9 * (1.0 + ret.abs()));
        let time: f64 = t.steps.iter().map(|s| s.elapsed_min).sum();
        prop_assert!((time - t.total_time).abs() < 1e-9);
        prop_assert!(t.outcome != EpisodeOutcome::Truncated);
    }
}

/// Sample means of return and exhaustion against the exact values of the
/// same policy.
#[test]
fn estimates_match_policy_evaluation() {
    for seed in [3u64, 17, 101] {
        let (net, m, p) = setup(seed);
        let gamma = 0.95;
        let config = RolloutConfig {
            gamma,
            ..RolloutConfig::default()
        };
        let sim = Simulator::new(&net, net.require_demand().unwrap(), &m, &p, config).unwrap();
        let stats = sim.estimate(20_000, seed).unwrap();
        let exact = policy_evaluation(
            &m,
            &p,
            &SolverConfig {
                gamma,
                tolerance: 1e-12,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let v0 = exact.values[m.initial];
        let gap = (stats.mean_discounted_return - v0).abs();
        assert!(
            gap <= 3.0 * stats.return_std_error + 1e-9,
            "seed {seed}: {} vs {v0} (se {})",
            stats.mean_discounted_return,
            stats.return_std_error
        );
        let pe = exhaustion_probability(&m, &p, m.initial).unwrap();
        let gap = (stats.exhaustion_rate - pe).abs();
        assert!(
            gap <= 3.0 * stats.exhaustion_std_error + 1e-9,
            "seed {seed}: {} vs {pe}",
            stats.exhaustion_rate
        );
    }
}

#[test]
fn reruns_are_identical() {
    let (net, m, p) = setup(9);
    let sim = Simulator::new(&net, net.require_demand().unwrap(), &m, &p, RolloutConfig::default()).unwrap();
    assert_eq!(sim.sample_episode(4, 2).unwrap(), sim.sample_episode(4, 2).unwrap());
    assert_eq!(sim.estimate(500, 1).unwrap(), sim.estimate(500, 1).unwrap());
}
