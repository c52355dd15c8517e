//! Structural invariants of the graph model, checked across every fixture:
//! sampled assignments recompute exactly, reachability is a transitive
//! closure, and unblocked paths coincide with descendance.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scg_core::fixtures::fixtures;
use scg_core::graph::{NodeKind, NodeSet};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Recomputing every functional node from its parents reproduces the
    /// sampled value bit for bit.
    #[test]
    fn sampled_assignments_recompute_exactly(seed in 0u64..10_000) {
        for f in fixtures() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = f.graph.forward_sample(&f.inputs, &mut rng).unwrap();
            for v in f.graph.ids() {
                if let NodeKind::Deterministic(body) | NodeKind::Cost(body) = f.graph.kind(v) {
                    let args: Vec<f64> = f
                        .graph
                        .parents(v)
                        .iter()
                        .map(|p| a.value(*p))
                        .collect();
                    let recomputed = body.eval(&args).unwrap();
                    prop_assert_eq!(recomputed.to_bits(), a.value(v).to_bits());
                }
                if f.graph.kind(v).is_stochastic() {
                    prop_assert!(a.logp(v).is_some());
                } else {
                    prop_assert!(a.logp(v).is_none());
                }
            }
        }
    }
}

#[test]
fn descendants_is_a_transitive_closure() {
    for f in fixtures() {
        let g = &f.graph;
        for v in g.ids() {
            let dv = g.descendants(v);
            for &w in &dv {
                for u in g.descendants(w) {
                    assert!(
                        dv.contains(&u),
                        "{}: {} reaches {} reaches {}, closure misses it",
                        f.name,
                        g.name(v),
                        g.name(w),
                        g.name(u)
                    );
                }
            }
        }
    }
}

#[test]
fn unblocked_paths_coincide_with_descendance() {
    for f in fixtures() {
        let g = &f.graph;
        for u in g.ids() {
            let desc = g.descendants(u);
            for w in g.ids() {
                if u == w {
                    continue;
                }
                let reach = g.exists_unblocked_path(u, w, &NodeSet::new());
                assert_eq!(
                    reach,
                    desc.contains(&w),
                    "{}: path predicate and descendants disagree on {} -> {}",
                    f.name,
                    g.name(u),
                    g.name(w)
                );
            }
        }
    }
}

#[test]
fn core_types_are_shareable_across_threads() {
    fn check<T: Send + Sync>() {}
    check::<scg_core::Graph>();
    check::<scg_core::oracle::TableValueFn>();
    check::<scg_core::oracle::ExprValueFn>();
    check::<scg_core::oracle::SupportTable>();
    check::<scg_core::value_store::LearnedValueFn>();
    check::<scg_core::estimators::EstimatorSpec>();
}

#[test]
fn out_of_domain_probability_fails_at_sample_time() {
    let mut b = scg_core::GraphBuilder::new();
    let t = b.input("t");
    // Probability expression leaves (0,1) when t >= 1.
    let z = b.bernoulli("z", &[t], scg_core::Expr::arg(0));
    b.cost("c", &[z], scg_core::Expr::arg(0));
    let g = b.build().unwrap();
    let theta = g.by_name("t").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(g.forward_sample(&vec![(theta, 0.4)], &mut rng).is_ok());
    let err = g.forward_sample(&vec![(theta, 1.2)], &mut rng);
    assert!(matches!(err, Err(scg_core::graph::SampleError::Numerical { .. })));
}
