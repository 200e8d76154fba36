//! Property-based invariants for the probability core and the rule catalog.

use std::sync::Arc;

use proptest::prelude::*;

use riskshare::prob_core::{
    cond_expectation, convex_order_leq, convex_order_leq_with_tol, is_comonotonic, is_measurable,
    FiniteSpace, Partition, RandVar, RiskVector,
};
use riskshare::rules::{apply, comonotonic_improvement, RuleSpec};
use riskshare::NUM_TOL;

fn weights(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1u32..10, m).prop_map(|ws| {
        let total: u32 = ws.iter().sum();
        ws.iter().map(|&w| w as f64 / total as f64).collect()
    })
}

fn grid(m: usize, lo: i32) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..=3, m).prop_map(|vs| vs.into_iter().map(f64::from).collect())
}

fn labels(m: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, m)
}

fn space_from(probs: &[f64]) -> Arc<FiniteSpace<f64>> {
    FiniteSpace::new(probs.to_vec()).unwrap()
}

fn partition_from_labels(space: &Arc<FiniteSpace<f64>>, labels: &[usize]) -> Partition<f64> {
    let max = labels.iter().copied().max().unwrap();
    let blocks = (0..=max)
        .map(|l| {
            (0..labels.len())
                .filter(|&i| labels[i] == l)
                .collect::<Vec<_>>()
        })
        .filter(|b| !b.is_empty())
        .collect();
    Partition::new(Arc::clone(space), blocks).unwrap()
}

#[derive(Debug, Clone)]
struct Instance {
    probs: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    labels: Vec<usize>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=8).prop_flat_map(|m| {
        (weights(m), grid(m, -3), grid(m, -3), labels(m, 3)).prop_map(
            |(probs, x, y, labels)| Instance {
                probs,
                x,
                y,
                labels,
            },
        )
    })
}

proptest! {
    // conditional expectation operator laws
    #[test]
    fn cond_fixes_constants(inst in instance(), c in -3.0f64..3.0) {
        let sp = space_from(&inst.probs);
        let g = partition_from_labels(&sp, &inst.labels);
        let x = RandVar::constant(Arc::clone(&sp), c).unwrap();
        let e = cond_expectation(&x, &g).unwrap();
        for &v in e.values() {
            prop_assert!((v - c).abs() <= NUM_TOL);
        }
    }

    #[test]
    fn cond_is_additive(inst in instance()) {
        let sp = space_from(&inst.probs);
        let g = partition_from_labels(&sp, &inst.labels);
        let x = RandVar::new(Arc::clone(&sp), inst.x.clone()).unwrap();
        let y = RandVar::new(Arc::clone(&sp), inst.y.clone()).unwrap();
        let lhs = cond_expectation(&x.checked_add(&y).unwrap(), &g).unwrap();
        let rhs = cond_expectation(&x, &g)
            .unwrap()
            .checked_add(&cond_expectation(&y, &g).unwrap())
            .unwrap();
        for (a, b) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((a - b).abs() <= NUM_TOL);
        }
    }

    #[test]
    fn cond_is_monotone(inst in instance(), bump_raw in prop::collection::vec(0i32..=3, 8)) {
        let sp = space_from(&inst.probs);
        let g = partition_from_labels(&sp, &inst.labels);
        let x = RandVar::new(Arc::clone(&sp), inst.x.clone()).unwrap();
        let bump: Vec<f64> = (0..inst.x.len()).map(|i| f64::from(bump_raw[i % 8])).collect();
        let y = x
            .checked_add(&RandVar::new(Arc::clone(&sp), bump).unwrap())
            .unwrap();
        let ex = cond_expectation(&x, &g).unwrap();
        let ey = cond_expectation(&y, &g).unwrap();
        for (a, b) in ex.values().iter().zip(ey.values()) {
            prop_assert!(*a <= *b + NUM_TOL);
        }
    }

    #[test]
    fn cond_fixes_measurable_inputs(inst in instance(), per_label in grid(3, -3)) {
        let sp = space_from(&inst.probs);
        let g = partition_from_labels(&sp, &inst.labels);
        let vals: Vec<f64> = inst.labels.iter().map(|&l| per_label[l]).collect();
        let x = RandVar::new(Arc::clone(&sp), vals).unwrap();
        prop_assert!(is_measurable(&x, &g).unwrap());
        let e = cond_expectation(&x, &g).unwrap();
        for (a, b) in e.values().iter().zip(x.values()) {
            prop_assert!((a - b).abs() <= NUM_TOL);
        }
    }

    #[test]
    fn cond_preserves_expectation(inst in instance()) {
        let sp = space_from(&inst.probs);
        let g = partition_from_labels(&sp, &inst.labels);
        let x = RandVar::new(Arc::clone(&sp), inst.x.clone()).unwrap();
        let e = cond_expectation(&x, &g).unwrap();
        prop_assert!((e.expectation() - x.expectation()).abs() <= NUM_TOL);
    }

    #[test]
    fn tower_on_nested_partitions(inst in instance()) {
        let sp = space_from(&inst.probs);
        // coarse labels are a function of fine labels, so fine refines coarse
        let fine = partition_from_labels(&sp, &inst.labels);
        let coarse_labels: Vec<usize> = inst.labels.iter().map(|&l| l / 2).collect();
        let coarse = partition_from_labels(&sp, &coarse_labels);
        prop_assert!(fine.is_finer_than(&coarse));
        let x = RandVar::new(Arc::clone(&sp), inst.x.clone()).unwrap();
        let via_fine = cond_expectation(&cond_expectation(&x, &fine).unwrap(), &coarse).unwrap();
        let direct = cond_expectation(&x, &coarse).unwrap();
        for (a, b) in via_fine.values().iter().zip(direct.values()) {
            prop_assert!((a - b).abs() <= NUM_TOL);
        }
    }

    // refinement lattice laws
    #[test]
    fn refine_laws(inst in instance(), more in prop::collection::vec(0usize..3, 8)) {
        let sp = space_from(&inst.probs);
        let m = inst.probs.len();
        let a = partition_from_labels(&sp, &inst.labels);
        let b = partition_from_labels(&sp, &more[..m].to_vec());
        let c = partition_from_labels(
            &sp,
            &inst.labels.iter().map(|&l| (l + 1) % 2).collect::<Vec<_>>(),
        );
        let ab = a.refine(&b).unwrap();
        let ba = b.refine(&a).unwrap();
        prop_assert_eq!(ab.blocks(), ba.blocks());
        let aa = a.refine(&a).unwrap();
        prop_assert_eq!(aa.blocks(), a.blocks());
        let left = ab.refine(&c).unwrap();
        let bc = b.refine(&c).unwrap();
        let right = a.refine(&bc).unwrap();
        prop_assert_eq!(left.blocks(), right.blocks());
    }

    // convex order
    #[test]
    fn convex_order_is_reflexive(inst in instance()) {
        let sp = space_from(&inst.probs);
        let x = RandVar::new(Arc::clone(&sp), inst.x.clone()).unwrap();
        prop_assert!(convex_order_leq(&x, &x).unwrap());
    }

    #[test]
    fn convex_order_chain_is_transitive(inst in instance(), more in prop::collection::vec(0usize..4, 8)) {
        // two successive conditionings produce a ≤cx chain; the ends compare
        let sp = space_from(&inst.probs);
        let m = inst.probs.len();
        let g1 = partition_from_labels(&sp, &inst.labels);
        let g2 = partition_from_labels(&sp, &more[..m].to_vec());
        let z = RandVar::new(Arc::clone(&sp), inst.x.clone()).unwrap();
        let y = cond_expectation(&z, &g1).unwrap();
        let x = cond_expectation(&y, &g2).unwrap();
        prop_assert!(convex_order_leq_with_tol(&x, &y, NUM_TOL).unwrap());
        prop_assert!(convex_order_leq_with_tol(&y, &z, NUM_TOL).unwrap());
        prop_assert!(convex_order_leq_with_tol(&x, &z, NUM_TOL).unwrap());
    }

    #[test]
    fn conditional_jensen(inst in instance()) {
        let sp = space_from(&inst.probs);
        let g = partition_from_labels(&sp, &inst.labels);
        let x = RandVar::new(Arc::clone(&sp), inst.x.clone()).unwrap();
        let e = cond_expectation(&x, &g).unwrap();
        prop_assert!(convex_order_leq_with_tol(&e, &x, NUM_TOL).unwrap());
    }

    // comonotonicity vs a sort-based oracle
    #[test]
    fn comonotonicity_matches_sort_oracle(
        (perm1, perm2) in (2usize..=8).prop_flat_map(|m| {
            let base: Vec<i64> = (0..m as i64).collect();
            (Just(base.clone()).prop_shuffle(), Just(base).prop_shuffle())
        }),
        ws in prop::collection::vec(1u32..10, 8),
    ) {
        let m = perm1.len();
        let total: u32 = ws[..m].iter().sum();
        let probs: Vec<f64> = ws[..m].iter().map(|&w| w as f64 / total as f64).collect();
        let sp = FiniteSpace::new(probs).unwrap();
        let x1 = RandVar::new(Arc::clone(&sp), perm1.iter().map(|&v| v as f64).collect()).unwrap();
        let x2 = RandVar::new(Arc::clone(&sp), perm2.iter().map(|&v| v as f64).collect()).unwrap();
        let fast = is_comonotonic(&[x1.clone(), x2.clone()]).unwrap();
        // oracle: sort outcomes by the first component, require the second
        // to be simultaneously sorted
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| x1.value(a).partial_cmp(&x1.value(b)).unwrap());
        let slow = order.windows(2).all(|w| x2.value(w[0]) <= x2.value(w[1]));
        prop_assert_eq!(fast, slow);
    }

    // comonotonic improvement postconditions
    #[test]
    fn improvement_postconditions(
        (probs, comps) in (2usize..=6).prop_flat_map(|m| {
            (weights(m), prop::collection::vec(grid(m, -3), 2..=4))
        }),
    ) {
        let sp = FiniteSpace::new(probs).unwrap();
        let agents: Vec<RandVar<f64>> = comps
            .iter()
            .map(|vals| RandVar::new(Arc::clone(&sp), vals.clone()).unwrap())
            .collect();
        let x = RiskVector::new(agents).unwrap();
        let improved = comonotonic_improvement(&x).unwrap();
        let total = x.total();
        for w in 0..sp.len() {
            let sum: f64 = improved.agents().iter().map(|a| a.value(w)).sum();
            prop_assert!((sum - total.value(w)).abs() <= NUM_TOL);
        }
        for (yi, xi) in improved.agents().iter().zip(x.agents()) {
            prop_assert!((yi.expectation() - xi.expectation()).abs() <= NUM_TOL);
            prop_assert!(convex_order_leq_with_tol(yi, xi, NUM_TOL).unwrap());
        }
        prop_assert!(is_comonotonic(improved.agents()).unwrap());
    }

    // every catalog rule fully allocates the total
    #[test]
    fn rules_fully_allocate(
        (probs, comps) in (2usize..=8).prop_flat_map(|m| {
            (weights(m), prop::collection::vec(grid(m, -3), 2..=4))
        }),
    ) {
        let sp = FiniteSpace::new(probs).unwrap();
        let agents: Vec<RandVar<f64>> = comps
            .iter()
            .map(|vals| RandVar::new(Arc::clone(&sp), vals.clone()).unwrap())
            .collect();
        let x = RiskVector::new(agents).unwrap();
        let total = x.total();
        let rules: Vec<RuleSpec<f64>> = vec![
            RuleSpec::Identity,
            RuleSpec::AllInOne,
            RuleSpec::MeanAdjusted,
            RuleSpec::Uniform,
            RuleSpec::Cmrs,
            RuleSpec::Covariance,
            RuleSpec::ComonotonicImprovement,
            RuleSpec::Mixture {
                lambda: 0.25,
                a: Box::new(RuleSpec::Identity),
                b: Box::new(RuleSpec::Cmrs),
            },
        ];
        for rule in &rules {
            let alloc = apply(rule, &x).unwrap();
            for w in 0..sp.len() {
                let sum: f64 = alloc.agents().iter().map(|a| a.value(w)).sum();
                prop_assert!(
                    (sum - total.value(w)).abs() <= NUM_TOL,
                    "rule {} broke full allocation",
                    rule.canonical_name()
                );
            }
        }
    }

    #[test]
    fn mean_proportional_fully_allocates_nonneg(
        (probs, comps) in (2usize..=8).prop_flat_map(|m| {
            (weights(m), prop::collection::vec(grid(m, 0), 2..=4))
        }),
    ) {
        let sp = FiniteSpace::new(probs).unwrap();
        let agents: Vec<RandVar<f64>> = comps
            .iter()
            .map(|vals| RandVar::new(Arc::clone(&sp), vals.clone()).unwrap())
            .collect();
        let x = RiskVector::new(agents).unwrap();
        let total = x.total();
        let alloc = apply(&RuleSpec::MeanProportional, &x).unwrap();
        for w in 0..sp.len() {
            let sum: f64 = alloc.agents().iter().map(|a| a.value(w)).sum();
            prop_assert!((sum - total.value(w)).abs() <= NUM_TOL);
        }
    }
}
