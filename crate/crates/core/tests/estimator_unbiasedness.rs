//! Exact (enumeration-level) checks of every estimator family against the
//! independently computed parameter gradient, plus the variance-ordering
//! claims that motivate the set choices.

use std::sync::Arc;

use scg_core::analysis::CondSet;
use scg_core::estimators::{
    compile, debiased_spec, gradient_critic_bootstrap_check, kstep_critic, lambda_critic,
    BaselineChoice, BootstrapMember, CriticChoice, EstimatorError, EstimatorSpec, GradRef,
    NodeSpec, QHatRef, QuantizedGradTable, ValueRef,
};
use scg_core::fixtures::{blackbox, chain2, chain2g, factored, noise, noncong, tree4, Fixture};
use scg_core::graph::Graph;
use scg_core::oracle::{
    enumerate_support, exact_gradient_critic, exact_parameter_gradient, exact_value,
    exact_value_fn, forward_value_expr, optimal_baseline, score_at, EnumerateOpts, ExprValueFn,
    SupportTable, TargetSpec,
};
use scg_core::quadrature::GaussHermite;
use scg_core::{Expr, NodeId};

fn opts(f: &Fixture) -> EnumerateOpts {
    EnumerateOpts { gh_order: f.gh_order, cap: 1 << 20 }
}

fn support(f: &Fixture) -> SupportTable {
    enumerate_support(&f.graph, &f.inputs, opts(f)).unwrap()
}

fn exact_grad(f: &Fixture) -> f64 {
    exact_parameter_gradient(&f.graph, &f.inputs, f.theta.unwrap(), opts(f)).unwrap()
}

fn exact_mean_of(f: &Fixture, spec: &EstimatorSpec) -> (f64, f64) {
    compile(&f.graph, f.theta.unwrap(), spec, true)
        .unwrap()
        .exact_moments(&f.inputs, opts(f))
        .unwrap()
}

fn assert_unbiased(f: &Fixture, label: &str, spec: &EstimatorSpec, tol: f64) {
    let want = exact_grad(f);
    let (mean, _) = exact_mean_of(f, spec);
    assert!(
        (mean - want).abs() < tol,
        "{} / {label}: estimator mean {mean} vs exact {want}",
        f.name
    );
}

fn q_table(f: &Fixture, table: &SupportTable, v: &str, set: &[&str]) -> ValueRef {
    ValueRef::Table(Arc::new(exact_value(
        &f.graph,
        table,
        &f.cond(set),
        TargetSpec::CostToGo(f.node(v)),
    )))
}

// ---------------------------------------------------------------------------
// Discrete chain menu
// ---------------------------------------------------------------------------

#[test]
fn chain_menu_is_exactly_unbiased() {
    let f = chain2();
    let table = support(&f);
    let (a0, a1) = (f.node("a0"), f.node("a1"));

    // Plain empirical score estimator.
    assert_unbiased(&f, "empirical", &EstimatorSpec::empirical(), 1e-10);

    // Empirical critics with state value baselines.
    let spec = EstimatorSpec::of(vec![
        NodeSpec::empirical(a0).with_baseline(BaselineChoice::Value {
            set: f.cond(&["s0"]),
            source: q_table(&f, &table, "a0", &["s0"]),
        }),
        NodeSpec::empirical(a1).with_baseline(BaselineChoice::Value {
            set: f.cond(&["s1"]),
            source: q_table(&f, &table, "a1", &["s1"]),
        }),
    ]);
    assert_unbiased(&f, "empirical+V", &spec, 1e-10);

    // Exact state-action critics, no baseline.
    let spec = EstimatorSpec::of(vec![
        NodeSpec::empirical(a0).with_critic(CriticChoice::Value {
            set: f.cond(&["s0", "a0"]),
            source: q_table(&f, &table, "a0", &["s0", "a0"]),
        }),
        NodeSpec::empirical(a1).with_critic(CriticChoice::Value {
            set: f.cond(&["s1", "a1"]),
            source: q_table(&f, &table, "a1", &["s1", "a1"]),
        }),
    ]);
    assert_unbiased(&f, "Q", &spec, 1e-10);

    // Advantage: exact critic minus exact state baseline.
    let adv = EstimatorSpec::of(vec![
        NodeSpec::empirical(a0)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s0", "a0"]),
                source: q_table(&f, &table, "a0", &["s0", "a0"]),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s0"]),
                source: q_table(&f, &table, "a0", &["s0"]),
            }),
        NodeSpec::empirical(a1)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s1", "a1"]),
                source: q_table(&f, &table, "a1", &["s1", "a1"]),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s1"]),
                source: q_table(&f, &table, "a1", &["s1"]),
            }),
    ]);
    assert_unbiased(&f, "Q-V", &adv, 1e-10);

    // Variance reduction is real: the advantage estimator beats empirical.
    let (_, var_emp) = exact_mean_of(&f, &EstimatorSpec::empirical());
    let (_, var_adv) = exact_mean_of(&f, &adv);
    assert!(var_adv < var_emp, "advantage {var_adv} vs empirical {var_emp}");
}

#[test]
fn kstep_and_lambda_critics_are_exactly_unbiased() {
    let f = chain2();
    let table = support(&f);
    let layout = f.chain.clone().unwrap();
    let value_of = |state: NodeId| -> ValueRef {
        ValueRef::Table(Arc::new(exact_value(
            &f.graph,
            &table,
            &CondSet::of(&[state]),
            TargetSpec::CostToGo(state),
        )))
    };
    // One-step lookahead critic for the first action, empirical tail for the
    // second (the chain ends there).
    let k0 = kstep_critic(&f.graph, &layout, 0, 0, &value_of).unwrap();
    let spec = EstimatorSpec::of(vec![
        NodeSpec::empirical(f.node("a0")).with_critic(k0.clone()),
        NodeSpec::empirical(f.node("a1"))
            .with_critic(kstep_critic(&f.graph, &layout, 1, 0, &value_of).unwrap()),
    ]);
    assert_unbiased(&f, "kstep0", &spec, 1e-10);

    // Lookahead past the horizon is the empirical critic.
    let ke = kstep_critic(&f.graph, &layout, 0, 1, &value_of).unwrap();
    assert!(matches!(ke, CriticChoice::Empirical));

    // Geometric mixture of lookaheads.
    let lam = lambda_critic(&f.graph, &layout, 0, 0.5, &value_of).unwrap();
    let spec = EstimatorSpec::of(vec![NodeSpec::empirical(f.node("a0")).with_critic(lam)]);
    assert_unbiased(&f, "lambda0.5", &spec, 1e-10);

    // At lambda = 0 the mixture is exactly the zero-step lookahead.
    let lam0 = lambda_critic(&f.graph, &layout, 0, 0.0, &value_of).unwrap();
    let spec_a = EstimatorSpec::of(vec![NodeSpec::empirical(f.node("a0")).with_critic(lam0)]);
    let spec_b = EstimatorSpec::of(vec![NodeSpec::empirical(f.node("a0")).with_critic(k0)]);
    let (ma, va) = exact_mean_of(&f, &spec_a);
    let (mb, vb) = exact_mean_of(&f, &spec_b);
    assert!((ma - mb).abs() < 1e-12 && (va - vb).abs() < 1e-12);
}

#[test]
fn kstep_zero_equals_state_action_critic_in_conditional_mean() {
    let f = chain2();
    let table = support(&f);
    let q = exact_value(&f.graph, &table, &f.cond(&["s0", "a0"]), TargetSpec::CostToGo(f.node("a0")));
    let v_next = exact_value(&f.graph, &table, &f.cond(&["s1"]), TargetSpec::CostToGo(f.node("s1")));
    // E[r0 + V(s1) | s0, a0] must equal Q(s0, a0) per key.
    let lhs = exact_value_fn(&table, &f.cond(&["s0", "a0"]), |a| {
        a.value(f.node("r0")) + v_next.eval(a).unwrap()
    });
    for atom in &table.atoms {
        let l = lhs.eval(&atom.assignment).unwrap();
        let r = q.eval(&atom.assignment).unwrap();
        assert!((l - r).abs() < 1e-12, "{l} vs {r}");
    }
}

#[test]
fn baseline_terms_have_exactly_zero_mean() {
    let f = chain2();
    let table = support(&f);
    for (v, bset) in [("a0", vec!["s0"]), ("a1", vec!["s0", "a0", "s1"]), ("a0", vec![])] {
        let node = f.node(v);
        let bnames: Vec<&str> = bset.clone();
        let bvf = exact_value(&f.graph, &table, &f.cond(&bnames), TargetSpec::CostToGo(node));
        let (mean, _) = scg_core::oracle::estimator_moments(&table, |a| {
            let s = score_at(&f.graph, a, node, f.theta.unwrap()).unwrap();
            let b = bvf.eval(a).unwrap();
            s * b
        });
        assert!(mean.abs() < 1e-10, "score x baseline mean {mean} for {v} given {bset:?}");
    }
}

#[test]
fn optimal_baseline_reduces_variance_and_orders_by_set() {
    let f = chain2();
    let table = support(&f);
    let theta = f.theta.unwrap();
    let a0 = f.node("a0");
    let cset = f.cond(&["s0", "a0"]);
    let q = exact_value(&f.graph, &table, &cset, TargetSpec::CostToGo(a0));

    let b_star_empty = optimal_baseline(&f.graph, &table, theta, a0, &cset, &CondSet::empty()).unwrap();
    let b_star_s0 = optimal_baseline(&f.graph, &table, theta, a0, &cset, &f.cond(&["s0"])).unwrap();
    let v_s0 = exact_value(&f.graph, &table, &f.cond(&["s0"]), TargetSpec::CostToGo(a0));

    let var_of = |baseline: &dyn Fn(&scg_core::Assignment) -> f64| -> f64 {
        scg_core::oracle::estimator_moments(&table, |a| {
            let s = score_at(&f.graph, a, a0, theta).unwrap();
            s * (q.eval(a).unwrap() - baseline(a))
        })
        .1
    };
    let var_none = var_of(&|_| 0.0);
    let var_opt_empty = var_of(&|a| b_star_empty.eval(a).unwrap());
    let var_opt_s0 = var_of(&|a| b_star_s0.eval(a).unwrap());
    let var_val_s0 = var_of(&|a| v_s0.eval(a).unwrap());

    assert!(var_opt_empty <= var_none + 1e-12);
    // Larger congruent set: lower or equal variance.
    assert!(var_opt_s0 <= var_opt_empty + 1e-12);
    // Optimal beats the plain value baseline on the same set.
    assert!(var_opt_s0 <= var_val_s0 + 1e-12);

    // Non-congruent sets are refused.
    assert!(matches!(
        optimal_baseline(&f.graph, &table, theta, a0, &cset, &f.cond(&["s1"])),
        Err(scg_core::oracle::OracleError::NotCongruent)
    ));

    // The estimator with the optimal baseline stays unbiased.
    let spec = EstimatorSpec::of(vec![NodeSpec::empirical(a0)
        .with_critic(CriticChoice::Value {
            set: cset.clone(),
            source: ValueRef::Table(Arc::new(q.clone())),
        })
        .with_baseline(BaselineChoice::Optimal {
            set: f.cond(&["s0"]),
            source: ValueRef::Table(Arc::new(b_star_s0.clone())),
        })]);
    assert_unbiased(&f, "optimal-baseline", &spec, 1e-10);
}

#[test]
fn nested_congruent_baselines_order_advantage_second_moments() {
    let f = chain2();
    let table = support(&f);
    for (v, cset, b2) in [("a0", vec!["s0", "a0"], vec!["s0"]), ("a1", vec!["s1", "a1"], vec!["s1"])] {
        let node = f.node(v);
        let q = exact_value(&f.graph, &table, &f.cond(&cset), TargetSpec::CostToGo(node));
        let v1 = exact_value(&f.graph, &table, &CondSet::empty(), TargetSpec::CostToGo(node));
        let v2 = exact_value(&f.graph, &table, &f.cond(&b2), TargetSpec::CostToGo(node));
        let m1 = scg_core::oracle::exact_expectation(&table, |a| {
            let d = q.eval(a).unwrap() - v1.eval(a).unwrap();
            d * d
        });
        let m2 = scg_core::oracle::exact_expectation(&table, |a| {
            let d = q.eval(a).unwrap() - v2.eval(a).unwrap();
            d * d
        });
        assert!(m2 <= m1 + 1e-12, "{v}: E[(Q-V(B2))^2]={m2} vs E[(Q-V(B1))^2]={m1}");
    }
}

#[test]
fn parameter_space_critic_row_is_exactly_unbiased() {
    let f = chain2();
    let table = support(&f);
    let theta = f.theta.unwrap();
    let (a0, a1, pi1, s1) = (f.node("a0"), f.node("a1"), f.node("pi1"), f.node("s1"));

    // Gradient-critic at the logit node, keyed by state and bucketed logit.
    let g_table = QuantizedGradTable::build(vec![(s1, 0.0), (pi1, 0.25)], &table, |a| {
        let mut t = scg_core::autodiff::record(&f.graph, a).unwrap();
        let ls = scg_core::oracle::empirical_surrogate_slot(&f.graph, a, &mut t);
        scg_core::autodiff::backward(&t, ls).node(&t, pi1)
    });
    let spec = EstimatorSpec::of(vec![
        NodeSpec::empirical(a0)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s0", "a0"]),
                source: q_table(&f, &table, "a0", &["s0", "a0"]),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s0"]),
                source: q_table(&f, &table, "a0", &["s0"]),
            }),
        NodeSpec::empirical(a1).with_param_critic(scg_core::estimators::ParamCriticSpec {
            param: pi1,
            set: f.cond(&["s1"]),
            source: GradRef::Quantized(Arc::new(g_table)),
        }),
    ]);
    assert_unbiased(&f, "param-critic", &spec, 1e-10);
    let _ = theta;
}

#[test]
fn blackbox_parameter_distribution_row_is_exactly_unbiased() {
    let f = blackbox();
    let table = support(&f);
    let idx = f.node("idx");
    let spec = EstimatorSpec::of(vec![NodeSpec::empirical(idx).with_critic(
        CriticChoice::Value {
            set: f.cond(&["idx"]),
            source: q_table(&f, &table, "idx", &["idx"]),
        },
    )]);
    assert_unbiased(&f, "blackbox-critic", &spec, 1e-10);
    assert_unbiased(&f, "blackbox-empirical", &EstimatorSpec::empirical(), 1e-10);
}

// ---------------------------------------------------------------------------
// Conditioning-set variance regimes
// ---------------------------------------------------------------------------

#[test]
fn noise_fixture_reproduces_the_three_variance_regimes() {
    let f = noise();
    let table = support(&f);
    let z = f.node("z");

    let spec_of = |cset: Vec<&str>, bset: Option<Vec<&str>>| -> EstimatorSpec {
        let mut node = NodeSpec::empirical(z).with_critic(CriticChoice::Value {
            set: f.cond(&cset),
            source: q_table(&f, &table, "z", &cset),
        });
        if let Some(b) = bset {
            node = node.with_baseline(BaselineChoice::Value {
                set: f.cond(&b),
                source: q_table(&f, &table, "z", &b),
            });
        }
        EstimatorSpec::of(vec![node])
    };

    // Every regime subtracts a baseline; the empty-set baseline is the
    // constant expected loss.
    let naive = spec_of(vec!["z", "zp"], Some(vec![]));
    let small = spec_of(vec!["z"], Some(vec![]));
    let congruent = spec_of(vec!["z", "zp"], Some(vec!["zp"]));
    let noncongruent = spec_of(vec!["z"], Some(vec!["zp"]));

    for (label, spec) in [
        ("naive", &naive),
        ("small", &small),
        ("congruent", &congruent),
        ("noncongruent", &noncongruent),
    ] {
        assert_unbiased(&f, label, spec, 1e-10);
    }

    let var = |spec: &EstimatorSpec| exact_mean_of(&f, spec).1;
    let (v_naive, v_small, v_cong, v_noncong) =
        (var(&naive), var(&small), var(&congruent), var(&noncongruent));
    // Marginalizing the uncontrollable coin, by set choice or by congruent
    // baseline, removes its variance; the two routes coincide exactly.
    assert!(v_naive > v_small + 1e-8 * 10.0, "{v_naive} vs {v_small}");
    assert!((v_small - v_cong).abs() < 1e-12);
    // A non-congruent baseline reintroduces the noise.
    assert!(v_noncong > v_small + 1e-8 * 10.0, "{v_noncong} vs {v_small}");
}

#[test]
fn noncongruent_baseline_helps_on_the_shared_parent_graph() {
    let f = noncong();
    let table = support(&f);
    let z = f.node("z");
    let q = exact_value(&f.graph, &table, &f.cond(&["z", "v1"]), TargetSpec::CostToGo(z));
    let v_empty = exact_value(&f.graph, &table, &CondSet::empty(), TargetSpec::CostToGo(z));
    let v_branch = exact_value(&f.graph, &table, &f.cond(&["v1p"]), TargetSpec::CostToGo(z));
    let m_empty = scg_core::oracle::exact_expectation(&table, |a| {
        let d = q.eval(a).unwrap() - v_empty.eval(a).unwrap();
        d * d
    });
    let m_branch = scg_core::oracle::exact_expectation(&table, |a| {
        let d = q.eval(a).unwrap() - v_branch.eval(a).unwrap();
        d * d
    });
    assert!(
        m_branch + 1e-8 * 10.0 < m_empty,
        "second moments: non-congruent {m_branch} vs empty {m_empty}"
    );
    // Both remain unbiased estimators.
    let spec = EstimatorSpec::of(vec![NodeSpec::empirical(z)
        .with_critic(CriticChoice::Value {
            set: f.cond(&["z", "v1"]),
            source: ValueRef::Table(Arc::new(q)),
        })
        .with_baseline(BaselineChoice::Value {
            set: f.cond(&["v1p"]),
            source: ValueRef::Table(Arc::new(v_branch)),
        })]);
    assert_unbiased(&f, "noncong-baseline", &spec, 1e-10);
}

// ---------------------------------------------------------------------------
// Invalid sets are load-bearing
// ---------------------------------------------------------------------------

#[test]
fn invalid_critic_set_biases_the_estimator_and_is_refused() {
    let f = tree4();
    let table = support(&f);
    let v1 = f.node("v1");
    let bad_set = f.cond(&["v1"]);
    assert!(!scg_core::analysis::is_valid_critic_set(&f.graph, v1, &bad_set));

    let bad = EstimatorSpec::of(vec![NodeSpec::empirical(v1).with_critic(
        CriticChoice::Value {
            set: bad_set.clone(),
            source: ValueRef::Table(Arc::new(exact_value(
                &f.graph,
                &table,
                &bad_set,
                TargetSpec::CostToGo(v1),
            ))),
        },
    )]);

    // With checks enabled construction is refused, naming node and check.
    match compile(&f.graph, f.theta.unwrap(), &bad, true) {
        Err(EstimatorError::InvalidSpec { node, check }) => {
            assert_eq!(node, "v1");
            assert!(check.contains("critic"), "{check}");
        }
        other => panic!("expected refusal, got {:?}", other.err()),
    }

    // With checks disabled the estimator exists and is measurably wrong.
    let compiled = compile(&f.graph, f.theta.unwrap(), &bad, false).unwrap();
    let (mean, _) = compiled.exact_moments(&f.inputs, opts(&f)).unwrap();
    let want = exact_grad(&f);
    assert!(
        (mean - want).abs() > 1e-8,
        "invalid critic set should bias the mean: {mean} vs {want}"
    );
}

// ---------------------------------------------------------------------------
// Gaussian chain: pathwise, gradient-critic, debiased
// ---------------------------------------------------------------------------

fn chain2g_sources(f: &Fixture) -> (Arc<ExprValueFn>, Arc<ExprValueFn>, Arc<ExprValueFn>, Arc<ExprValueFn>) {
    let gh = GaussHermite::new(f.gh_order);
    let q_a0 = Arc::new(forward_value_expr(&f.graph, f.node("a0"), &f.set(&["s0", "a0"]), &gh).unwrap());
    let q_a1 = Arc::new(forward_value_expr(&f.graph, f.node("a1"), &f.set(&["s1", "a1"]), &gh).unwrap());
    let v_s0 = Arc::new(forward_value_expr(&f.graph, f.node("a0"), &f.set(&["s0"]), &gh).unwrap());
    let v_s1 = Arc::new(forward_value_expr(&f.graph, f.node("a1"), &f.set(&["s1"]), &gh).unwrap());
    (q_a0, q_a1, v_s0, v_s1)
}

#[test]
fn gaussian_chain_score_function_with_exact_critics_is_unbiased() {
    let f = chain2g();
    let (q_a0, q_a1, v_s0, v_s1) = chain2g_sources(&f);
    let spec = EstimatorSpec::of(vec![
        NodeSpec::empirical(f.node("a0"))
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s0", "a0"]),
                source: ValueRef::Expr(q_a0),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s0"]),
                source: ValueRef::Expr(v_s0),
            }),
        NodeSpec::empirical(f.node("a1"))
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s1", "a1"]),
                source: ValueRef::Expr(q_a1),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s1"]),
                source: ValueRef::Expr(v_s1),
            }),
    ]);
    assert_unbiased(&f, "gauss-QV", &spec, 1e-9);
    assert_unbiased(&f, "gauss-empirical", &EstimatorSpec::empirical(), 1e-9);
}

#[test]
fn fully_reparameterized_pathwise_estimate_is_unbiased_with_zero_score_noise() {
    let f = chain2g();
    let spec = EstimatorSpec::of(vec![
        NodeSpec::reparameterized(f.node("s0")),
        NodeSpec::reparameterized(f.node("a0")),
        NodeSpec::reparameterized(f.node("s1")),
        NodeSpec::reparameterized(f.node("a1")),
    ]);
    assert_unbiased(&f, "pathwise-full", &spec, 1e-9);

    // A fully deterministic graph estimates with zero variance.
    let g = scg_core::fixtures::ladder_b();
    let compiled = compile(&g.graph, g.theta.unwrap(), &EstimatorSpec::empirical(), true).unwrap();
    let (mean, var) = compiled.exact_moments(&g.inputs, opts(&g)).unwrap();
    assert!((mean - 32.0).abs() < 1e-12);
    assert!(var.abs() < 1e-12);
}

#[test]
fn gradient_critic_injection_matches_exact_gradient() {
    let f = chain2g();
    let (q_a0, q_a1, ..) = chain2g_sources(&f);
    let spec = EstimatorSpec {
        nodes: vec![
            NodeSpec::reparameterized(f.node("s0")),
            NodeSpec::reparameterized(f.node("a0")),
            NodeSpec::reparameterized(f.node("s1")),
            NodeSpec::reparameterized(f.node("a1")),
        ],
        injection: Some(scg_core::estimators::InjectionSpec {
            at: f.theta.unwrap(),
            separator: vec![f.node("a0"), f.node("a1")],
            sources: vec![
                GradRef::ExprGrad { q: q_a0, wrt: f.node("a0") },
                GradRef::ExprGrad { q: q_a1, wrt: f.node("a1") },
            ],
        }),
    };
    assert_unbiased(&f, "gradient-critic", &spec, 1e-8);

    // With the same members (theta's children), the injected estimate agrees
    // with plain pathwise in expectation.
    let plain = EstimatorSpec::of(vec![
        NodeSpec::reparameterized(f.node("s0")),
        NodeSpec::reparameterized(f.node("a0")),
        NodeSpec::reparameterized(f.node("s1")),
        NodeSpec::reparameterized(f.node("a1")),
    ]);
    let (m_inj, _) = exact_mean_of(&f, &spec);
    let (m_path, _) = exact_mean_of(&f, &plain);
    assert!((m_inj - m_path).abs() < 1e-8);
}

#[test]
fn injection_on_deterministic_ladder_reproduces_full_gradient_pointwise() {
    let f = scg_core::fixtures::ladder_b();
    let spec = EstimatorSpec {
        nodes: vec![],
        injection: Some(scg_core::estimators::InjectionSpec {
            at: f.node("x"),
            separator: vec![f.node("v3"), f.node("v4")],
            sources: vec![GradRef::Const(10.0), GradRef::Const(4.0)],
        }),
    };
    let compiled = compile(&f.graph, f.node("x"), &spec, true).unwrap();
    let (mean, var) = compiled.exact_moments(&f.inputs, opts(&f)).unwrap();
    assert!((mean - 32.0).abs() < 1e-12);
    assert!(var.abs() < 1e-12);
}

#[test]
fn convenience_entry_points_agree_with_spec_compilation() {
    // The deterministic ladder through the one-call horizon estimator.
    let f = scg_core::fixtures::ladder_b();
    let est = scg_core::estimators::gradient_critic_estimate(
        &f.graph,
        f.node("x"),
        vec![f.node("v3"), f.node("v4")],
        vec![GradRef::Const(10.0), GradRef::Const(4.0)],
        &[],
        &f.inputs,
        1,
        0,
    )
    .unwrap();
    assert!((est.mean - 32.0).abs() < 1e-12);

    // The one-call debiased estimator on the Gaussian chain's last action.
    let f = chain2g();
    let (_, q_a1, ..) = chain2g_sources(&f);
    let est = scg_core::estimators::debiased_estimate(
        &f.graph,
        f.theta.unwrap(),
        f.node("a1"),
        &f.cond(&["s1", "a1"]),
        scg_core::estimators::QHatRef::Expr(q_a1),
        &f.inputs,
        40_000,
        5,
    )
    .unwrap();
    let want = exact_grad(&f);
    assert!(
        (est.mean - want).abs() <= 4.0 * est.stderr,
        "{} vs {want} (stderr {})",
        est.mean,
        est.stderr
    );

    // Score-function and pathwise wrappers route through the same machinery.
    let sf = scg_core::estimators::score_function_estimate(
        &f.graph,
        f.theta.unwrap(),
        &EstimatorSpec::empirical(),
        &f.inputs,
        40_000,
        5,
    )
    .unwrap();
    assert!((sf.mean - want).abs() <= 4.0 * sf.stderr);
    let pw = scg_core::estimators::pathwise_estimate(
        &f.graph,
        f.theta.unwrap(),
        &EstimatorSpec::of(vec![
            NodeSpec::reparameterized(f.node("s0")),
            NodeSpec::reparameterized(f.node("a0")),
            NodeSpec::reparameterized(f.node("s1")),
            NodeSpec::reparameterized(f.node("a1")),
        ]),
        &f.inputs,
        40_000,
        5,
    )
    .unwrap();
    assert!((pw.mean - want).abs() <= 4.0 * pw.stderr);
    // The reparameterized estimator earns its keep on this graph.
    assert!(pw.stderr < sf.stderr);
}

#[test]
fn injection_refuses_non_separators() {
    let f = chain2g();
    let spec = EstimatorSpec {
        nodes: vec![
            NodeSpec::reparameterized(f.node("s0")),
            NodeSpec::reparameterized(f.node("a0")),
            NodeSpec::reparameterized(f.node("s1")),
            NodeSpec::reparameterized(f.node("a1")),
        ],
        injection: Some(scg_core::estimators::InjectionSpec {
            at: f.theta.unwrap(),
            // a1 alone misses the a0 channel.
            separator: vec![f.node("a1")],
            sources: vec![GradRef::Const(0.0)],
        }),
    };
    assert!(matches!(
        compile(&f.graph, f.theta.unwrap(), &spec, true),
        Err(EstimatorError::NotSeparator)
    ));
}

#[test]
fn debiased_estimator_is_unbiased_for_exact_zero_and_scaled_critics() {
    let f = chain2g();
    let (q_a0, q_a1, ..) = chain2g_sources(&f);
    let want = exact_grad(&f);

    let scaled = |q: &Arc<ExprValueFn>, c: f64| -> Arc<ExprValueFn> {
        Arc::new(ExprValueFn {
            expr: Expr::scale(c, q.expr.clone()),
            arity: q.arity,
        })
    };

    for (label, factor) in [("exact", 1.0), ("zero", 0.0), ("scaled-1.5", 1.5)] {
        let spec = EstimatorSpec::of(vec![
            NodeSpec::empirical(f.node("a0"))
                .with_critic(CriticChoice::Value {
                    set: f.cond(&["s0", "a0"]),
                    source: ValueRef::Const(0.0),
                })
                .with_debias(QHatRef::Expr(scaled(&q_a0, factor))),
            NodeSpec::empirical(f.node("a1"))
                .with_critic(CriticChoice::Value {
                    set: f.cond(&["s1", "a1"]),
                    source: ValueRef::Const(0.0),
                })
                .with_debias(QHatRef::Expr(scaled(&q_a1, factor))),
        ]);
        let (mean, _) = exact_mean_of(&f, &spec);
        assert!(
            (mean - want).abs() < 1e-9,
            "debiased/{label}: {mean} vs {want}"
        );
    }

    // With the exact critic the residual score term has zero expectation:
    // the debiased estimator's mean equals the pure reparameterized part.
    let spec_exact = debiased_spec(f.node("a1"), &f.cond(&["s1", "a1"]), QHatRef::Expr(q_a1.clone()));
    let compiled = compile(&f.graph, f.theta.unwrap(), &spec_exact, true).unwrap();
    let table = compiled.support(&f.inputs, opts(&f)).unwrap();
    let (mean_score_term, _) = scg_core::oracle::estimator_moments(&table, |a| {
        let s = score_at(&compiled.work, a, compiled.work.by_name("a1").unwrap(), compiled.work.by_name("t").unwrap()).unwrap();
        let q = q_a1.eval(a).unwrap();
        s * (compiled.work.cost_to_go(compiled.work.by_name("a1").unwrap(), a) - q)
    });
    assert!(mean_score_term.abs() < 1e-9, "residual score term mean {mean_score_term}");
}

#[test]
fn debias_requires_markov_critic_set_and_gaussian_family() {
    let f = chain2g();
    let (q_a0, ..) = chain2g_sources(&f);
    // {a0} alone contains the node but is not Markov (s0 mediates upstream).
    let spec = EstimatorSpec::of(vec![NodeSpec::empirical(f.node("a0"))
        .with_critic(CriticChoice::Value {
            set: f.cond(&["a0"]),
            source: ValueRef::Const(0.0),
        })
        .with_debias(QHatRef::Expr(q_a0))]);
    assert!(compile(&f.graph, f.theta.unwrap(), &spec, true).is_err());

    let fc = chain2();
    let spec = debiased_spec(
        fc.node("a0"),
        &fc.cond(&["s0", "a0"]),
        QHatRef::Expr(Arc::new(ExprValueFn { expr: Expr::Const(0.0), arity: 1 })),
    );
    assert!(matches!(
        compile(&fc.graph, fc.theta.unwrap(), &spec, true),
        Err(EstimatorError::UnsupportedFamily(_))
    ));
}

// ---------------------------------------------------------------------------
// Gradient-critic bootstrap
// ---------------------------------------------------------------------------

fn fully_reparameterized(f: &Fixture) -> Graph {
    let mut work = f.graph.clone();
    for name in ["s0", "a0", "s1", "a1"] {
        let v = work.by_name(name).unwrap();
        work = scg_core::estimators::reparameterize(&work, v).unwrap();
    }
    work
}

#[test]
fn gradient_critic_bootstrap_holds_on_certified_sets() {
    let f = chain2g();
    let work = fully_reparameterized(&f);
    let gh = GaussHermite::new(f.gh_order);
    let inputs = vec![(work.by_name("t").unwrap(), 0.3)];
    let table = enumerate_support(&work, &inputs, opts(&f)).unwrap();

    let (s0, a0, s1, a1) = (
        work.by_name("s0").unwrap(),
        work.by_name("a0").unwrap(),
        work.by_name("s1").unwrap(),
        work.by_name("a1").unwrap(),
    );
    let (r0, r1) = (work.by_name("r0").unwrap(), work.by_name("r1").unwrap());

    // g(a0 | s0,a0) decomposes over the separator {r0, s1}.
    let q_s1 = Arc::new(forward_value_expr(&work, s1, &[s0, a0, s1].into_iter().collect(), &gh).unwrap());
    let members = vec![
        BootstrapMember {
            node: r0,
            set: CondSet::of(&[s0, a0]),
            source: GradRef::Const(1.0),
        },
        BootstrapMember {
            node: s1,
            set: CondSet::of(&[s0, a0, s1]),
            source: GradRef::ExprGrad { q: q_s1.clone(), wrt: s1 },
        },
    ];
    let ok = gradient_critic_bootstrap_check(&work, &table, a0, &CondSet::of(&[s0, a0]), &members, 1e-8)
        .unwrap();
    assert!(ok, "two-member bootstrap failed");

    // Iterated-expectation collapse: a1's unique child with matching sets.
    let members = vec![BootstrapMember {
        node: r1,
        set: CondSet::of(&[s1, a1]),
        source: GradRef::Const(1.0),
    }];
    let ok = gradient_critic_bootstrap_check(&work, &table, a1, &CondSet::of(&[s1, a1]), &members, 1e-8)
        .unwrap();
    assert!(ok, "single-child bootstrap failed");
}

#[test]
fn gradient_critic_bootstrap_requires_a_separator() {
    let f = chain2g();
    let work = fully_reparameterized(&f);
    let inputs = vec![(work.by_name("t").unwrap(), 0.3)];
    let table = enumerate_support(&work, &inputs, opts(&f)).unwrap();
    let (s0, a0) = (work.by_name("s0").unwrap(), work.by_name("a0").unwrap());
    let r0 = work.by_name("r0").unwrap();
    // r0 alone leaves a0's path through the next state unblocked.
    let members = vec![BootstrapMember {
        node: r0,
        set: CondSet::of(&[s0, a0]),
        source: GradRef::Const(1.0),
    }];
    assert!(matches!(
        gradient_critic_bootstrap_check(&work, &table, a0, &CondSet::of(&[s0, a0]), &members, 1e-8),
        Err(EstimatorError::NotSeparator)
    ));
}

#[test]
fn gradient_critic_bootstrap_names_precondition_failures() {
    let f = chain2g();
    let work = fully_reparameterized(&f);
    let gh = GaussHermite::new(f.gh_order);
    let inputs = vec![(work.by_name("t").unwrap(), 0.3)];
    let table = enumerate_support(&work, &inputs, opts(&f)).unwrap();
    let (s0, a0, s1, a1) = (
        work.by_name("s0").unwrap(),
        work.by_name("a0").unwrap(),
        work.by_name("s1").unwrap(),
        work.by_name("a1").unwrap(),
    );
    let r0 = work.by_name("r0").unwrap();
    let q_s1 = Arc::new(forward_value_expr(&work, s1, &[s1].into_iter().collect(), &gh).unwrap());

    // {a1} is not Markov for s1's cost-to-go: the check reports the
    // precondition instead of comparing values.
    let members = vec![
        BootstrapMember { node: r0, set: CondSet::of(&[s0, a0]), source: GradRef::Const(1.0) },
        BootstrapMember {
            node: s1,
            set: CondSet::of(&[a1]),
            source: GradRef::ExprGrad { q: q_s1, wrt: s1 },
        },
    ];
    match gradient_critic_bootstrap_check(&work, &table, a0, &CondSet::empty(), &members, 1e-8) {
        Err(EstimatorError::InvalidSpec { node, check }) => {
            assert_eq!(node, "s1");
            assert!(check.contains("Markov"), "{check}");
        }
        other => panic!("expected precondition failure, got {other:?}"),
    }
}

// ---------------------------------------------------------------------------
// Factored actions
// ---------------------------------------------------------------------------

#[test]
fn action_conditioned_baselines_on_factored_policy_are_unbiased() {
    let f = factored();
    let gh = GaussHermite::new(f.gh_order);
    let (a1, a2) = (f.node("a1"), f.node("a2"));
    let q_full_1 = Arc::new(forward_value_expr(&f.graph, a1, &f.set(&["s", "a1", "a2"]), &gh).unwrap());
    let q_full_2 = Arc::new(forward_value_expr(&f.graph, a2, &f.set(&["s", "a1", "a2"]), &gh).unwrap());
    let b_1 = Arc::new(forward_value_expr(&f.graph, a1, &f.set(&["s", "a2"]), &gh).unwrap());
    let b_2 = Arc::new(forward_value_expr(&f.graph, a2, &f.set(&["s", "a1"]), &gh).unwrap());

    let spec = EstimatorSpec::of(vec![
        NodeSpec::empirical(a1)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s", "a1", "a2"]),
                source: ValueRef::Expr(q_full_1),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s", "a2"]),
                source: ValueRef::Expr(b_1),
            }),
        NodeSpec::empirical(a2)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s", "a1", "a2"]),
                source: ValueRef::Expr(q_full_2),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s", "a1"]),
                source: ValueRef::Expr(b_2),
            }),
    ]);
    assert_unbiased(&f, "action-conditioned", &spec, 1e-9);
}
