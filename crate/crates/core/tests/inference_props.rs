//! Consistency properties of partial-view aggregation.

mod support;

use proptest::prelude::*;
use support::random_stack;
use viewalign::alignment::select_assignment;
use viewalign::geometry::{enumerate_candidates, SetupCase, ViewpointSetup};
use viewalign::inference::{predict, SequentialState};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Sequential updates must agree exactly (bitwise) with batch prediction
    /// on every prefix of the observation order.
    #[test]
    fn sequential_equals_batch_on_prefixes(seed in 0u64..10_000, m_choice in 0usize..2) {
        let setup = match m_choice {
            0 => ViewpointSetup::build(SetupCase::UprightRing, 45.0, 30.0).unwrap(),
            _ => ViewpointSetup::build(SetupCase::Dodecahedron, 0.0, 0.0).unwrap(),
        };
        let cands = enumerate_candidates(&setup);
        let m = setup.view_count();
        let n = 3;
        let stacks = random_stack(seed, m, n);
        // a seed-derived observation order over a prefix of the offsets
        let order: Vec<usize> = {
            let mut v: Vec<usize> = (0..m).collect();
            let mut s = seed;
            for i in (1..m).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            v.truncate(1 + (seed as usize) % m.min(8));
            v
        };
        let mut state = SequentialState::new(n, &cands).unwrap();
        for prefix in 1..=order.len() {
            let o = order[prefix - 1];
            state.update(&stacks[o], o, &cands).unwrap();
            let incremental = state.prediction(&cands).unwrap();
            let subset: Vec<_> = order[..prefix].iter().map(|&i| stacks[i].clone()).collect();
            let batch = predict(&subset, &cands, &order[..prefix]).unwrap();
            prop_assert_eq!(incremental, batch);
        }
    }

    /// With all views observed, the joint decision equals per-class training
    /// selection followed by a class argmax.
    #[test]
    fn full_view_prediction_equals_selection_with_class_max(seed in 0u64..10_000) {
        let setup = ViewpointSetup::build(SetupCase::UprightRing, 30.0, 30.0).unwrap();
        let cands = enumerate_candidates(&setup);
        let m = setup.view_count();
        let n = 4;
        let stacks = random_stack(seed, m, n);
        let offsets: Vec<usize> = (0..m).collect();
        let joint = predict(&stacks, &cands, &offsets).unwrap();
        let per_class: Vec<f64> = (0..n)
            .map(|y| select_assignment(&stacks, y, &cands).unwrap().log_score)
            .collect();
        let best = (0..n).max_by(|&a, &b| per_class[a].total_cmp(&per_class[b]).then(b.cmp(&a))).unwrap();
        prop_assert_eq!(joint.class, best);
        prop_assert!((joint.log_score - per_class[best]).abs() < 1e-9);
        for (y, score) in per_class.iter().enumerate() {
            prop_assert!((joint.per_class_scores[y] - score).abs() < 1e-9);
        }
    }
}
