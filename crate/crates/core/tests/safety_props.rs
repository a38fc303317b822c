mod common;

use std::collections::VecDeque;

use proptest::prelude::*;

use uam_routing::mdp::build_mdp;
use uam_routing::model::{BatteryModel, Network, NetworkBuilder};
use uam_routing::safety::{conservative_policy, find_safe_route, is_safe_link, is_safe_route, link_verdict};
use uam_routing::solver::{exhaustion_probability, reachable_under};

/// a -> b with the head's queue and spots and the battery as given; the
/// full-charge time is `levels * step_time` throughout.
fn one_link(q: u32, c: u32, levels: u32, per_level: u32, step_time: u32, lo: u32, spread: usize) -> Network {
    NetworkBuilder::new(1.0, BatteryModel::new(levels * per_level, per_level, step_time))
        .fixed_node("a", 1, 0)
        .fixed_node("b", c, q)
        .link("a->b", "a", "b", lo, vec![1.0 / (spread + 1) as f64; spread + 1])
        .demand("a", "b")
        .build_unchecked()
        .unwrap()
}

fn bfs_reaches(net: &Network, from: usize, to: usize) -> bool {
    let mut seen = vec![false; net.nodes().len()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(v) = queue.pop_front() {
        if v == to {
            return true;
        }
        for &e in net.outgoing(v) {
            let h = net.link(e).head;
            if !seen[h] && is_safe_link(e, net) {
                seen[h] = true;
                queue.push_back(h);
            }
        }
    }
    false
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn safety_is_monotone(
        q in 0u32..6,
        c in 1u32..4,
        levels in 1u32..3,
        per_level in 2u32..8,
        step_time in 1u32..3,
        lo in 1u32..10,
        spread in 0usize..4,
    ) {
        let base = is_safe_link(0, &one_link(q, c, levels, per_level, step_time, lo, spread));
        let longer_queue = is_safe_link(0, &one_link(q + 1, c, levels, per_level, step_time, lo, spread));
        let more_spots = is_safe_link(0, &one_link(q, c + 1, levels, per_level, step_time, lo, spread));
        let bigger_battery = is_safe_link(0, &one_link(q, c, levels, per_level + 1, step_time, lo, spread));
        prop_assert!(!longer_queue || base);
        prop_assert!(!base || more_spots);
        prop_assert!(!base || bigger_battery);
    }

    #[test]
    fn route_search_agrees_with_bfs(seed in any::<u64>(), nodes in 2usize..7) {
        let net = common::random_network(seed, common::Shape { nodes, ..Default::default() });
        let d = net.require_demand().unwrap();
        let found = find_safe_route(&net, d);
        prop_assert_eq!(found.is_some(), bfs_reaches(&net, d.origin, d.destination));
        if let Some(r) = found {
            prop_assert!(is_safe_route(&r, &net).safe);
            prop_assert_eq!(r.origin(&net), d.origin);
            prop_assert_eq!(r.destination(&net), d.destination);
        }
    }

    /// Land and charge fully at every stop of a safe route with slack: no
    /// exhaustion state is reachable.
    #[test]
    fn conservative_policy_never_exhausts(seed in any::<u64>(), nodes in 2usize..6) {
        let net = common::random_network(seed, common::Shape { nodes, queue_spread: 1, allow_zero_capacity: false });
        let d = net.require_demand().unwrap();
        let route = find_safe_route(&net, d);
        prop_assume!(route.is_some());
        let route = route.unwrap();
        let report = is_safe_route(&route, &net);
        prop_assume!(report.links.iter().all(|v| v.lhs_ticks.unwrap() < v.bound_ticks));
        let m = build_mdp(&net, d).unwrap();
        let policy = conservative_policy(&route, &net, &m).unwrap();
        let reach = reachable_under(&m, &policy, m.initial).unwrap();
        prop_assert!(reach.iter().all(|&s| !m.states[s].is_exhausted()));
        prop_assert!(reach.contains(&m.target().unwrap()));
        prop_assert_eq!(exhaustion_probability(&m, &policy, m.initial).unwrap(), 0.0);
    }
}

/// With the bound met only with equality the worst case drains the
/// battery exactly on arrival, which the model counts as exhaustion.
#[test]
fn tight_bound_can_exhaust() {
    let net = one_link(0, 1, 2, 2, 1, 3, 1);
    let v = link_verdict(0, &net);
    assert_eq!(v.lhs_ticks, Some(4));
    assert_eq!(v.bound_ticks, 4);
    assert!(v.safe);
    let d = net.require_demand().unwrap();
    let route = find_safe_route(&net, d).unwrap();
    let m = build_mdp(&net, d).unwrap();
    let policy = conservative_policy(&route, &net, &m).unwrap();
    let p = exhaustion_probability(&m, &policy, m.initial).unwrap();
    assert!((p - 0.5).abs() < 1e-12, "{p}");
}
