mod common;

use proptest::prelude::*;

use uam_routing::mdp::{build_mdp, MdpModel};
use uam_routing::model::{Network, NetworkDocument};
use uam_routing::solver::{extract_policy, policy_iteration, value_iteration, SolverConfig, Sweep};

fn q_values(m: &MdpModel, v: &[f64], gamma: f64, s: usize) -> Vec<f64> {
    (0..m.actions(s).len())
        .map(|a| m.row(s, a).iter().map(|t| t.prob * (t.reward + gamma * v[t.next])).sum())
        .collect()
}

/// States whose best action beats the runner-up by more than `gap`.
fn decisive_states(m: &MdpModel, v: &[f64], gamma: f64, gap: f64) -> Vec<usize> {
    (0..m.len())
        .filter(|&s| {
            let mut q = q_values(m, v, gamma, s);
            q.sort_by(|a, b| b.total_cmp(a));
            q.len() > 1 && q[0] - q[1] > gap
        })
        .collect()
}

fn reachable_model(net: &Network) -> MdpModel {
    let full = build_mdp(net, net.require_demand().unwrap()).unwrap();
    full.reachable_subset(full.initial)
}

fn scaled(net: &Network, c: f64) -> Network {
    let mut doc: NetworkDocument = net.to_document();
    let r = net.rewards();
    doc.rewards.r_t = r.r_t * c;
    doc.rewards.r_d = r.r_d * c;
    doc.rewards.r_a = r.r_a * c;
    doc.load().unwrap()
}

fn config(gamma: f64) -> SolverConfig {
    SolverConfig {
        gamma,
        tolerance: 1e-10,
        ..SolverConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residuals_contract(seed in any::<u64>(), gauss_seidel in any::<bool>()) {
        let net = common::random_network(seed, common::Shape::default());
        let m = reachable_model(&net);
        let cfg = SolverConfig {
            sweep: if gauss_seidel { Sweep::GaussSeidel } else { Sweep::Jacobi },
            ..config(0.9)
        };
        let vi = value_iteration(&m, &cfg).unwrap();
        prop_assert!(vi.converged);
        if !gauss_seidel {
            let scale = vi.values.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for w in vi.residuals.windows(2) {
                prop_assert!(w[1] <= cfg.gamma * w[0] + 1e-12 * scale, "{w:?}");
            }
        }
    }

    #[test]
    fn matches_finite_horizon_dp(seed in any::<u64>()) {
        let net = common::random_network(seed, common::Shape::default());
        let m = reachable_model(&net);
        prop_assume!(m.len() <= 200);
        let gamma = 0.9;
        let r = net.rewards();
        let r_max = r.r_a.abs().max(r.r_d.abs()).max(r.r_t.abs() * net.battery().capacity as f64);
        let oracle = common::finite_horizon_values(&net, &m, gamma, common::horizon_for(gamma, r_max, 1e-8));
        let vi = value_iteration(&m, &config(gamma)).unwrap();
        for s in 0..m.len() {
            prop_assert!((vi.values.values[s] - oracle[s]).abs() <= 1e-6, "{:?}", m.states[s]);
        }
    }

    #[test]
    fn argmax_ignores_reward_scale(seed in any::<u64>(), c in 0.1f64..10.0) {
        let net = common::random_network(seed, common::Shape::default());
        let m = reachable_model(&net);
        let cfg = config(0.95);
        let vi = value_iteration(&m, &cfg).unwrap();
        let p = extract_policy(&m, &vi.values, cfg.gamma);
        let net_c = scaled(&net, c);
        let m_c = reachable_model(&net_c);
        prop_assert_eq!(&m_c.states, &m.states);
        let vi_c = value_iteration(&m_c, &cfg).unwrap();
        let p_c = extract_policy(&m_c, &vi_c.values, cfg.gamma);
        for s in decisive_states(&m, &vi.values.values, cfg.gamma, 1e-6) {
            prop_assert_eq!(p.get(s), p_c.get(s), "{:?}", m.states[s]);
        }
    }

    #[test]
    fn policy_iteration_agrees_with_value_iteration(seed in any::<u64>()) {
        let net = common::random_network(seed, common::Shape::default());
        let m = reachable_model(&net);
        let cfg = config(0.95);
        let vi = value_iteration(&m, &cfg).unwrap();
        let p = extract_policy(&m, &vi.values, cfg.gamma);
        let pi = policy_iteration(&m, &cfg).unwrap();
        for s in decisive_states(&m, &vi.values.values, cfg.gamma, 1e-6) {
            prop_assert_eq!(p.get(s), pi.policy.get(s), "{:?}", m.states[s]);
        }
        for s in 0..m.len() {
            prop_assert!((pi.values.values[s] - vi.values.values[s]).abs() <= 1e-6);
        }
    }
}
