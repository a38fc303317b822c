use std::collections::BTreeMap;

use proptest::prelude::*;

use uam_routing::model::{BatteryModel, ChargeDurationDist, Node};
use uam_routing::stochastics::{
    hazards_from_pmf, queue_wait_distribution, queue_wait_distribution_dp, reconstruct_pmf, wait_pmf_dp,
    HazardVector,
};

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// A pmf with positive total mass; individual entries may be zero.
fn pmf(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.01f64..1.0], 1..=max_len)
        .prop_filter("some mass", |w| w.iter().sum::<f64>() > 0.0)
        .prop_map(normalize)
}

#[derive(Debug, Clone)]
struct Instance {
    node: Node,
    battery: BatteryModel,
    charge: ChargeDurationDist,
}

/// Nodes with at most five aircraft queued, at most three spots and at
/// most three charge levels.
fn instance() -> impl Strategy<Value = Instance> {
    (0u32..=3, 1u32..=3, 1u32..=3, 0u32..=5)
        .prop_flat_map(|(cap, levels, step_time, qmin)| {
            let spread = 5 - qmin as usize;
            (
                Just((cap, levels, step_time, qmin)),
                pmf(spread + 1),
                pmf(levels as usize),
            )
        })
        .prop_map(|((cap, levels, step_time, qmin), q, c)| Instance {
            node: Node {
                id: "v".into(),
                capacity: cap,
                queue_min: qmin,
                queue_max: qmin + q.len() as u32 - 1,
                queue_pmf: q,
            },
            battery: BatteryModel::new(levels * 4, 4, step_time),
            charge: ChargeDurationDist { pmf: c },
        })
}

fn expected(full: &BTreeMap<u32, f64>) -> f64 {
    full.iter().map(|(&k, &p)| k as f64 * p).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hazard_round_trip(f in pmf(10)) {
        let h = HazardVector { link: "e".into(), p: hazards_from_pmf(&f) };
        prop_assert!(h.p.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert_eq!(*h.p.last().unwrap(), 1.0);
        let back = reconstruct_pmf(&h);
        for (a, b) in f.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12, "{f:?} -> {back:?}");
        }
    }

    #[test]
    fn wait_is_a_sub_pmf(inst in instance(), max_wait in 0u32..30) {
        let w = queue_wait_distribution_dp(&inst.node, &inst.battery, &inst.charge, max_wait);
        prop_assert!(w.pmf.values().all(|&p| p >= 0.0));
        prop_assert!(w.overflow >= 0.0);
        prop_assert!(w.pmf.keys().all(|&k| k < max_wait));
        prop_assert!((w.total() - 1.0).abs() <= 1e-9, "{}", w.total());
    }

    #[test]
    fn enumeration_matches_dp(inst in instance(), max_wait in 0u32..30) {
        let e = queue_wait_distribution(&inst.node, &inst.battery, &inst.charge, max_wait).unwrap();
        let d = queue_wait_distribution_dp(&inst.node, &inst.battery, &inst.charge, max_wait);
        let keys: std::collections::BTreeSet<u32> = e.pmf.keys().chain(d.pmf.keys()).copied().collect();
        for k in keys {
            let (a, b) = (e.pmf.get(&k).copied().unwrap_or(0.0), d.pmf.get(&k).copied().unwrap_or(0.0));
            prop_assert!((a - b).abs() <= 1e-12, "wait {k}: {a} vs {b}");
        }
        prop_assert!((e.overflow - d.overflow).abs() <= 1e-12);
    }

    /// Shifting the queue pmf one aircraft up never shortens the expected
    /// wait.
    #[test]
    fn wait_grows_with_the_queue(inst in instance()) {
        prop_assume!(inst.node.capacity > 0);
        let mut longer = inst.node.clone();
        longer.queue_min += 1;
        longer.queue_max += 1;
        let a = expected(&wait_pmf_dp(&inst.node, &inst.battery, &inst.charge));
        let b = expected(&wait_pmf_dp(&longer, &inst.battery, &inst.charge));
        prop_assert!(b >= a - 1e-12, "{a} -> {b}");
    }

    /// Fewer aircraft than spots: everyone ahead is charging and a spot is
    /// free.
    #[test]
    fn spare_spots_mean_no_wait(inst in instance(), cap in 1u32..=3, seed in 0usize..100) {
        let mut inst = inst;
        let qmax = (seed % cap as usize) as u32;
        let qmin = (seed / 7) as u32 % (qmax + 1);
        inst.node.capacity = cap;
        inst.node.queue_min = qmin;
        inst.node.queue_max = qmax;
        inst.node.queue_pmf = vec![1.0 / (qmax - qmin + 1) as f64; (qmax - qmin + 1) as usize];
        let full = wait_pmf_dp(&inst.node, &inst.battery, &inst.charge);
        prop_assert_eq!(full.len(), 1);
        prop_assert!((full[&0] - 1.0).abs() <= 1e-12);
    }
}

/// As many aircraft as spots already means waiting for the first to
/// finish.
#[test]
fn full_spots_mean_a_wait() {
    let node = Node::with_fixed_queue("v", 2, 2);
    let full = wait_pmf_dp(&node, &BatteryModel::new(30, 15, 3), &ChargeDurationDist::uniform(2));
    assert_eq!(full.get(&0), None);
    // the wait is the shorter of two charges of one or two steps
    assert!((full[&3] - 0.75).abs() < 1e-15);
    assert!((full[&6] - 0.25).abs() < 1e-15);
}
