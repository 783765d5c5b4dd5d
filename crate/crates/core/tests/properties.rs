use proptest::prelude::*;

use netshift::data::{Column, Frame, SummaryKind, SummarySpec};
use netshift::estimate::{center_by_degree, variance};
use netshift::network::{erdos_renyi, DependencyStructure, Network};
use netshift::nuisance::make_folds;
use netshift::policy::{induced_weight, Policy, Region};

fn policy_strategy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        (-5.0f64..5.0).prop_map(|d| Policy::additive(d).unwrap()),
        (0.1f64..4.0).prop_map(|d| Policy::multiplicative(d).unwrap()),
    ]
}

fn kind_strategy() -> impl Strategy<Value = SummaryKind> {
    prop_oneof![
        Just(SummaryKind::NeighborSum),
        Just(SummaryKind::NeighborWeightedSum),
        Just(SummaryKind::NeighborMean),
    ]
}

proptest! {
    #[test]
    fn policy_inverse_round_trips(policy in policy_strategy(), a in -100.0f64..100.0) {
        let none: [(&str, f64); 0] = [];
        let back = policy.inverse(policy.apply(a, &none[..]), &none[..]);
        prop_assert!((back - a).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn piecewise_policy_round_trips(delta in 0.0f64..3.0, a in -10.0f64..10.0) {
        let none: [(&str, f64); 0] = [];
        let policy = Policy::piecewise_additive(delta, Region::new(Some(0.0), None), None).unwrap();
        let back = policy.inverse(policy.apply(a, &none[..]), &none[..]);
        prop_assert!((back - a).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn induced_weight_is_the_jacobian(
        policy in policy_strategy(),
        kind in kind_strategy(),
        self_term in any::<bool>(),
        n in 2usize..60,
        seed in any::<u64>(),
    ) {
        let net = erdos_renyi(n, 0.08, seed).unwrap();
        let spec = SummarySpec::new(kind).with_self(self_term);
        for i in 0..n {
            let w = induced_weight(&policy, &spec, &net, i).unwrap();
            let empty = net.degree(i).unwrap() == 0 && !self_term;
            let expected = if empty { 1.0 } else { 1.0 / policy.derivative(0.0, &[("x", 0.0)][..]) };
            prop_assert_eq!(w, expected);
        }
    }

    #[test]
    fn summaries_are_linear(
        kind in kind_strategy(),
        self_term in any::<bool>(),
        normalize in any::<bool>(),
        seed in any::<u64>(),
        a in prop::collection::vec(-10.0f64..10.0, 40),
        b in prop::collection::vec(-10.0f64..10.0, 40),
        c in -3.0f64..3.0,
    ) {
        let net = erdos_renyi(40, 0.1, seed).unwrap();
        let mut spec = SummarySpec::new(kind).with_self(self_term);
        spec.normalize = normalize;
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + c * y).collect();
        let sa = spec.apply(&net, &a).unwrap();
        let sb = spec.apply(&net, &b).unwrap();
        let sc = spec.apply(&net, &combo).unwrap();
        for i in 0..40 {
            prop_assert!((sc[i] - (sa[i] + c * sb[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn folds_partition_the_units(n in 10usize..500, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let plan = make_folds(n, k, seed).unwrap();
        let mut seen = vec![0usize; n];
        for f in 0..plan.k() {
            for i in plan.members(f) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn edgeless_variance_is_the_iid_variance(phi in prop::collection::vec(-5.0f64..5.0, 5..200)) {
        let n = phi.len();
        let degrees = vec![0; n];
        let eif = center_by_degree(phi.clone(), &degrees, 1);
        let v = variance(&eif, &Network::edgeless(n).dependency());
        let mean = phi.iter().sum::<f64>() / n as f64;
        let iid = phi.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n * n) as f64;
        prop_assert!((v.var_psi.max(0.0) - iid).abs() <= 1e-9 * iid.max(1e-12) || v.floored);
        let independent = variance(&eif, &DependencyStructure::independent(n));
        prop_assert_eq!(v.var_psi, independent.var_psi);
    }
}

#[test]
fn frame_rejects_ragged_columns() {
    let err = Frame::new(
        vec![Column::new("x", vec![1.0, 2.0])],
        vec![1.0, 2.0, 3.0],
        None,
    );
    assert!(err.is_err());
}
