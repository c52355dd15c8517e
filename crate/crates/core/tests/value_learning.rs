//! Learned-value convergence against the oracle: regression on return,
//! bootstrap targets (and their variance advantage), and the per-key
//! polynomial critic fits whose derivatives recover the gradient-critic.

use scg_core::analysis::CondSet;
use scg_core::estimators::ValueRef;
use scg_core::fixtures::{chain2, factored};
use scg_core::graph::node_set;
use scg_core::oracle::{
    enumerate_support, exact_conditional_variance, exact_gradient_critic, exact_value,
    EnumerateOpts, TargetSpec,
};
use scg_core::value_store::{
    fit_bootstrap, fit_bootstrap_weighted, fit_gradient_critic, fit_on_return,
    fit_on_return_weighted, BootstrapPart, FitMode, ValueStoreError,
};
use std::sync::Arc;

#[test]
fn regression_on_return_converges_to_the_exact_table() {
    let f = chain2();
    let table = enumerate_support(&f.graph, &f.inputs, EnumerateOpts::default()).unwrap();
    let set = f.cond(&["s0", "a0"]);
    let target = TargetSpec::CostToGo(f.node("a0"));
    let exact = exact_value(&f.graph, &table, &set, target);

    let (store, report) = fit_on_return(&f.graph, &f.inputs, &set, target, 100_000, 11).unwrap();
    assert_eq!(store.keys(), 4);
    for (key, mean, count, stderr) in store.cell_stats() {
        let want = exact.map[&key];
        assert!(count > 1000, "all four cells visited");
        assert!(
            (mean - want).abs() <= 5.0 * stderr,
            "cell {key:?}: {mean} vs {want} (stderr {stderr})"
        );
    }
    assert!(report.steps == 100_000);
}

#[test]
fn weighted_regression_reaches_the_exact_fixed_point() {
    let f = chain2();
    let table = enumerate_support(&f.graph, &f.inputs, EnumerateOpts::default()).unwrap();
    for set in [f.cond(&["s0", "a0"]), f.cond(&["s1", "a1"]), f.cond(&["s0"])] {
        let target = TargetSpec::CostToGo(f.node("s0"));
        let exact = exact_value(&f.graph, &table, &set, target);
        let (store, _) = fit_on_return_weighted(&f.graph, &table, &set, target);
        for atom in &table.atoms {
            let got = store.predict(&atom.assignment);
            let want = exact.eval(&atom.assignment).unwrap();
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }
}

#[test]
fn bootstrap_fit_converges_and_its_target_has_lower_variance() {
    let f = chain2();
    let table = enumerate_support(&f.graph, &f.inputs, EnumerateOpts::default()).unwrap();
    let s0 = f.node("s0");
    let set_v = f.cond(&["s0"]);

    // Downstream part table is exact (test mode).
    let v_s1 = Arc::new(exact_value(
        &f.graph,
        &table,
        &f.cond(&["s1"]),
        TargetSpec::CostToGo(f.node("s1")),
    ));
    let parts = vec![
        BootstrapPart {
            part: node_set(&[f.node("r0")]),
            set: f.cond(&["s0", "a0"]),
            source: None,
        },
        BootstrapPart {
            part: node_set(&[f.node("s1")]),
            set: f.cond(&["s1"]),
            source: Some(ValueRef::Table(v_s1.clone())),
        },
    ];

    let exact_v = exact_value(&f.graph, &table, &set_v, TargetSpec::CostToGo(s0));
    let (store, _) =
        fit_bootstrap(&f.graph, &f.inputs, s0, &set_v, &parts, 100_000, 21).unwrap();
    for (key, mean, _, stderr) in store.cell_stats() {
        let want = exact_v.map[&key];
        assert!(
            (mean - want).abs() <= 5.0 * stderr,
            "cell {key:?}: {mean} vs {want} (stderr {stderr})"
        );
    }

    // Full-enumeration weighting lands exactly on the value table.
    let (wstore, _) =
        fit_bootstrap_weighted(&f.graph, &table, s0, &set_v, &parts).unwrap();
    for atom in &table.atoms {
        let got = wstore.predict(&atom.assignment);
        let want = exact_v.eval(&atom.assignment).unwrap();
        assert!((got - want).abs() < 1e-8);
    }

    // The bootstrap target averages out downstream draws: per key of the
    // conditioning set its variance never exceeds the raw return's.
    let return_var = exact_conditional_variance(&table, &set_v, |a| {
        f.graph.cost_to_go(s0, a)
    });
    let boot_var = exact_conditional_variance(&table, &set_v, |a| {
        a.value(f.node("r0")) + v_s1.eval(a).unwrap()
    });
    for (key, vb) in &boot_var {
        let vr = return_var[key];
        assert!(
            *vb <= vr + 1e-12,
            "key {key:?}: bootstrap target variance {vb} vs return variance {vr}"
        );
    }
}

#[test]
fn bootstrap_fit_rejects_invalid_decompositions() {
    let f = chain2();
    let parts = vec![BootstrapPart {
        part: node_set(&[f.node("s1")]),
        set: f.cond(&["s1"]),
        source: None,
    }];
    // Misses r0 entirely.
    let got = fit_bootstrap(&f.graph, &f.inputs, f.node("s0"), &f.cond(&["s0"]), &parts, 10, 1);
    assert!(matches!(got, Err(ValueStoreError::BootstrapInvalid(_))));
}

#[test]
fn polynomial_critic_fits_recover_value_and_gradient() {
    let f = factored();
    let opts = EnumerateOpts { gh_order: f.gh_order, cap: 1 << 20 };
    let table = enumerate_support(&f.graph, &f.inputs, opts).unwrap();
    let a1 = f.node("a1");
    let cond = f.cond(&["s", "a1"]);

    // The exact critic is quadratic in the action per state, so a cubic
    // table can represent it exactly. The grouped gradient-critic and the
    // derivative of the symbolic conditional expectation must agree, and the
    // fits must land on them within the data-dense band (two-sigma probes;
    // quadrature tails carry negligible sample mass).
    let gc = exact_gradient_critic(&f.graph, &table, a1, &cond).unwrap();
    let gh = scg_core::quadrature::GaussHermite::new(f.gh_order);
    let q_sym = scg_core::oracle::forward_value_expr(&f.graph, a1, &cond.members, &gh).unwrap();
    for atom in table.atoms.iter().step_by(7) {
        let grouped = gc.table.eval(&atom.assignment).unwrap();
        let sym = q_sym.grad_in(&atom.assignment.values, a1).unwrap();
        assert!((grouped - sym).abs() < 1e-9, "{grouped} vs {sym}");
    }

    let theta_val = f.inputs[0].1;
    let sigma = (-0.5f64).exp();
    let probes = |s_val: f64| -> Vec<Vec<f64>> {
        let mu = theta_val - 0.4 + 0.8 * s_val;
        [-2.0f64, -1.0, -0.3, 0.0, 0.6, 1.3, 2.0]
            .iter()
            .map(|z| {
                let mut vals = vec![0.0; f.graph.node_count()];
                vals[f.node("s").idx()] = s_val;
                vals[a1.idx()] = mu + z * sigma;
                vals[f.node("t").idx()] = theta_val;
                vals
            })
            .collect()
    };

    for (label, mode) in [
        ("sobolev", FitMode::Sobolev { alpha: 1.0, beta: 1.0 }),
        ("value-only", FitMode::ValueOnly),
        ("grad-only", FitMode::GradOnly),
    ] {
        let (store, report) =
            fit_gradient_critic(&f.graph, &f.inputs, a1, &cond, mode, 3, 200_000, 31).unwrap();
        let mut max_err: f64 = 0.0;
        for s_val in [0.0, 1.0] {
            for vals in probes(s_val) {
                let probe = scg_core::Assignment {
                    values: vals.clone(),
                    logp: vec![None; vals.len()],
                };
                let got = store.predict_grad(&probe);
                let want = q_sym.grad_in(&vals, a1).unwrap();
                max_err = max_err.max((got - want).abs());
            }
        }
        assert!(
            max_err < 0.05,
            "{label}: fitted derivative off by {max_err} (final loss {})",
            report.final_loss
        );
        assert!(store.misses() == 0);
    }

    // Value-only mode also recovers the critic values themselves.
    let q = exact_value(&f.graph, &table, &cond, TargetSpec::CostToGo(a1));
    let (store, _) =
        fit_gradient_critic(&f.graph, &f.inputs, a1, &cond, FitMode::ValueOnly, 3, 200_000, 33)
            .unwrap();
    let mut max_err: f64 = 0.0;
    for s_val in [0.0, 1.0] {
        for vals in probes(s_val) {
            let probe = scg_core::Assignment {
                values: vals.clone(),
                logp: vec![None; vals.len()],
            };
            let got = store.predict(&probe);
            // The symbolic conditional expectation at the probe.
            let want = q_sym.eval_values(&vals).unwrap();
            max_err = max_err.max((got - want).abs());
        }
    }
    let _ = q;
    assert!(max_err < 0.05, "value fit off by {max_err}");
}

#[test]
fn value_mode_requires_markov_sets_and_live_anchor_noise() {
    let f = factored();
    // {a1} alone is not Markov: the other action dimension reaches the cost
    // while its own descendants stay outside the set... but a1's descendants
    // include the cost; the offending mediator is the state.
    let bad = CondSet::of(&[f.node("a1")]);
    let got = fit_gradient_critic(
        &f.graph,
        &f.inputs,
        f.node("a1"),
        &bad,
        FitMode::ValueOnly,
        3,
        100,
        1,
    );
    assert!(matches!(got, Err(ValueStoreError::NotMarkov)));

    // A deterministic policy leaves no conditional spread in the action
    // given the state: the fit must refuse rather than describe a slice.
    let mut b = scg_core::GraphBuilder::new();
    let t = b.input("t");
    let s = b.categorical("s", &[], vec![
        scg_core::Expr::constant(0.0),
        scg_core::Expr::constant(0.1),
    ]);
    let a = b.deterministic(
        "a",
        &[t, s],
        scg_core::Expr::affine(0.0, vec![(1.0, scg_core::Expr::arg(0)), (0.4, scg_core::Expr::arg(1))]),
    );
    b.cost("c", &[s, a], scg_core::Expr::powi(scg_core::Expr::arg(1), 2));
    let g = b.build().unwrap();
    let _ = s;
    let a_node = g.by_name("a").unwrap();
    let s_node = g.by_name("s").unwrap();
    let got = fit_gradient_critic(
        &g,
        &vec![(g.by_name("t").unwrap(), 0.2)],
        a_node,
        &CondSet::of(&[s_node, a_node]),
        FitMode::GradOnly,
        3,
        5000,
        2,
    );
    assert!(matches!(got, Err(ValueStoreError::AnchorDegenerate)));
}

#[test]
fn learned_tables_serialize_for_replay() {
    let f = chain2();
    let set = f.cond(&["s0", "a0"]);
    let (store, _) = fit_on_return(
        &f.graph,
        &f.inputs,
        &set,
        TargetSpec::CostToGo(f.node("a0")),
        2000,
        5,
    )
    .unwrap();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let sample = f.graph.forward_sample(&f.inputs, &mut rng).unwrap();
    let _ = store.predict(&sample);
    let doc = store.to_doc(&f.graph);
    assert_eq!(doc.set, vec!["s0", "a0"]);
    assert_eq!(doc.keys.len(), 4);
    assert_eq!(doc.params.len(), 4);
    assert_eq!(doc.misses, 0);
    let json = serde_json::to_string(&doc).unwrap();
    let back: scg_core::value_store::LearnedValueDoc = serde_json::from_str(&json).unwrap();
    assert_eq!(back.keys, doc.keys);
    assert_eq!(back.params, doc.params);
}

#[test]
fn constant_loss_fits_zero_gradient_critic() {
    let mut b = scg_core::GraphBuilder::new();
    let t = b.input("t");
    let s = b.categorical("s", &[], vec![scg_core::Expr::constant(0.0), scg_core::Expr::constant(0.0)]);
    let a = b.gaussian("a", &[t, s], scg_core::Expr::arg(0), scg_core::Expr::constant(-0.3));
    b.cost("c", &[a], scg_core::Expr::constant(1.75));
    let g = b.build().unwrap();
    let _ = s;
    let a_node = g.by_name("a").unwrap();
    let s_node = g.by_name("s").unwrap();
    let cond = CondSet::new(node_set(&[s_node, a_node]));
    let (store, _) = fit_gradient_critic(
        &g,
        &vec![(g.by_name("t").unwrap(), 0.1)],
        a_node,
        &cond,
        FitMode::GradOnly,
        2,
        20_000,
        3,
    )
    .unwrap();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let smp = g
            .forward_sample(&vec![(g.by_name("t").unwrap(), 0.1)], &mut rng)
            .unwrap();
        assert!(store.predict_grad(&smp).abs() < 1e-6);
    }
}
