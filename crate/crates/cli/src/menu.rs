//! The registered estimator menu: one row per (fixture, estimator) pair with
//! exact oracle-backed sources. `verify` checks every row for exact and
//! Monte-Carlo unbiasedness; `estimate` runs whichever rows a config selects.

use std::sync::Arc;

use scg_core::analysis::CondSet;
use scg_core::estimators::{
    kstep_critic, lambda_critic, BaselineChoice, CriticChoice, EstimatorSpec, GradRef,
    InjectionSpec, NodeSpec, ParamCriticSpec, QHatRef, QuantizedGradTable, ValueRef,
};
use scg_core::fixtures::{self, Fixture};
use scg_core::oracle::{
    enumerate_support, exact_value, forward_value_expr, optimal_baseline, EnumerateOpts,
    ExprValueFn, SupportTable, TargetSpec,
};
use scg_core::quadrature::GaussHermite;
use scg_core::Expr;

/// One runnable estimator with everything bound: the fixture, the spec, and
/// exact sources.
pub struct MenuRow {
    pub id: String,
    pub fixture: Fixture,
    pub spec: EstimatorSpec,
}

pub fn enumerate_opts(f: &Fixture) -> EnumerateOpts {
    EnumerateOpts {
        gh_order: f.gh_order,
        cap: scg_core::oracle::support_cap_from_env(),
    }
}

fn table_of(f: &Fixture) -> SupportTable {
    enumerate_support(&f.graph, &f.inputs, enumerate_opts(f)).expect("fixture enumerates")
}

fn q_of(f: &Fixture, table: &SupportTable, v: &str, set: &[&str]) -> ValueRef {
    ValueRef::Table(Arc::new(exact_value(
        &f.graph,
        table,
        &f.cond(set),
        TargetSpec::CostToGo(f.node(v)),
    )))
}

fn sym(f: &Fixture, gh: &GaussHermite, v: &str, set: &[&str]) -> Arc<ExprValueFn> {
    Arc::new(forward_value_expr(&f.graph, f.node(v), &f.set(set), gh).expect("forward set"))
}

fn chain2_rows() -> Vec<MenuRow> {
    let f = fixtures::chain2();
    let table = table_of(&f);
    let (a0, a1) = (f.node("a0"), f.node("a1"));
    let layout = f.chain.clone().unwrap();
    let mut rows = Vec::new();
    let mut push = |id: &str, spec: EstimatorSpec| {
        rows.push(MenuRow { id: format!("chain2/{id}"), fixture: f.clone(), spec });
    };

    push("empirical", EstimatorSpec::empirical());

    push(
        "empirical_vbaseline",
        EstimatorSpec::of(vec![
            NodeSpec::empirical(a0).with_baseline(BaselineChoice::Value {
                set: f.cond(&["s0"]),
                source: q_of(&f, &table, "a0", &["s0"]),
            }),
            NodeSpec::empirical(a1).with_baseline(BaselineChoice::Value {
                set: f.cond(&["s1"]),
                source: q_of(&f, &table, "a1", &["s1"]),
            }),
        ]),
    );

    push(
        "q_critic",
        EstimatorSpec::of(vec![
            NodeSpec::empirical(a0).with_critic(CriticChoice::Value {
                set: f.cond(&["s0", "a0"]),
                source: q_of(&f, &table, "a0", &["s0", "a0"]),
            }),
            NodeSpec::empirical(a1).with_critic(CriticChoice::Value {
                set: f.cond(&["s1", "a1"]),
                source: q_of(&f, &table, "a1", &["s1", "a1"]),
            }),
        ]),
    );

    push(
        "advantage",
        EstimatorSpec::of(vec![
            NodeSpec::empirical(a0)
                .with_critic(CriticChoice::Value {
                    set: f.cond(&["s0", "a0"]),
                    source: q_of(&f, &table, "a0", &["s0", "a0"]),
                })
                .with_baseline(BaselineChoice::Value {
                    set: f.cond(&["s0"]),
                    source: q_of(&f, &table, "a0", &["s0"]),
                }),
            NodeSpec::empirical(a1)
                .with_critic(CriticChoice::Value {
                    set: f.cond(&["s1", "a1"]),
                    source: q_of(&f, &table, "a1", &["s1", "a1"]),
                })
                .with_baseline(BaselineChoice::Value {
                    set: f.cond(&["s1"]),
                    source: q_of(&f, &table, "a1", &["s1"]),
                }),
        ]),
    );

    // Value source shared by the k-step and lambda rows.
    let state_value = |state: scg_core::NodeId| -> ValueRef {
        ValueRef::Table(Arc::new(exact_value(
            &f.graph,
            &table,
            &CondSet::of(&[state]),
            TargetSpec::CostToGo(state),
        )))
    };
    push(
        "kstep0",
        EstimatorSpec::of(vec![
            NodeSpec::empirical(a0)
                .with_critic(kstep_critic(&f.graph, &layout, 0, 0, &state_value).unwrap()),
            NodeSpec::empirical(a1)
                .with_critic(kstep_critic(&f.graph, &layout, 1, 0, &state_value).unwrap()),
        ]),
    );
    push(
        "lambda_half",
        EstimatorSpec::of(vec![NodeSpec::empirical(a0)
            .with_critic(lambda_critic(&f.graph, &layout, 0, 0.5, &state_value).unwrap())]),
    );

    let cset = f.cond(&["s0", "a0"]);
    let bstar = optimal_baseline(&f.graph, &table, f.theta.unwrap(), a0, &cset, &f.cond(&["s0"]))
        .expect("congruent");
    push(
        "optimal_baseline",
        EstimatorSpec::of(vec![NodeSpec::empirical(a0)
            .with_critic(CriticChoice::Value {
                set: cset.clone(),
                source: q_of(&f, &table, "a0", &["s0", "a0"]),
            })
            .with_baseline(BaselineChoice::Optimal {
                set: f.cond(&["s0"]),
                source: ValueRef::Table(Arc::new(bstar)),
            })]),
    );

    // Gradient-critic at the explicit logit node, keyed by (state, bucketed
    // logit value).
    let pi1 = f.node("pi1");
    let s1 = f.node("s1");
    let g_table = QuantizedGradTable::build(vec![(s1, 0.0), (pi1, 0.25)], &table, |a| {
        let mut t = scg_core::autodiff::record(&f.graph, a).unwrap();
        let ls = scg_core::oracle::empirical_surrogate_slot(&f.graph, a, &mut t);
        scg_core::autodiff::backward(&t, ls).node(&t, pi1)
    });
    push(
        "param_critic",
        EstimatorSpec::of(vec![
            NodeSpec::empirical(a0)
                .with_critic(CriticChoice::Value {
                    set: f.cond(&["s0", "a0"]),
                    source: q_of(&f, &table, "a0", &["s0", "a0"]),
                })
                .with_baseline(BaselineChoice::Value {
                    set: f.cond(&["s0"]),
                    source: q_of(&f, &table, "a0", &["s0"]),
                }),
            NodeSpec::empirical(a1).with_param_critic(ParamCriticSpec {
                param: pi1,
                set: f.cond(&["s1"]),
                source: GradRef::Quantized(Arc::new(g_table)),
            }),
        ]),
    );

    rows
}

fn noise_rows() -> Vec<MenuRow> {
    let f = fixtures::noise();
    let table = table_of(&f);
    let z = f.node("z");
    let mut rows = Vec::new();
    let mut push = |id: &str, cset: Vec<&str>, bset: Vec<&str>| {
        let spec = EstimatorSpec::of(vec![NodeSpec::empirical(z)
            .with_critic(CriticChoice::Value {
                set: f.cond(&cset),
                source: q_of(&f, &table, "z", &cset),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&bset),
                source: q_of(&f, &table, "z", &bset),
            })]);
        rows.push(MenuRow { id: format!("noise/{id}"), fixture: f.clone(), spec });
    };
    push("naive", vec!["z", "zp"], vec![]);
    push("marginalized", vec!["z"], vec![]);
    push("congruent_baseline", vec!["z", "zp"], vec!["zp"]);
    push("noncongruent_baseline", vec!["z"], vec!["zp"]);
    rows
}

fn noncong_rows() -> Vec<MenuRow> {
    let f = fixtures::noncong();
    let table = table_of(&f);
    let z = f.node("z");
    let mut rows = Vec::new();
    let mut push = |id: &str, bset: Vec<&str>| {
        let spec = EstimatorSpec::of(vec![NodeSpec::empirical(z)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["z", "v1"]),
                source: q_of(&f, &table, "z", &["z", "v1"]),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&bset),
                source: q_of(&f, &table, "z", &bset),
            })]);
        rows.push(MenuRow { id: format!("noncong/{id}"), fixture: f.clone(), spec });
    };
    push("branch_critic", vec![]);
    push("noncongruent_baseline", vec!["v1p"]);
    rows
}

fn tree4_rows() -> Vec<MenuRow> {
    let f = fixtures::tree4();
    let table = table_of(&f);
    let v1 = f.node("v1");
    let spec = EstimatorSpec::of(vec![NodeSpec::empirical(v1)
        .with_critic(CriticChoice::Value {
            set: f.cond(&["v0", "v1"]),
            source: q_of(&f, &table, "v1", &["v0", "v1"]),
        })
        .with_baseline(BaselineChoice::Value {
            set: f.cond(&["v0"]),
            source: q_of(&f, &table, "v1", &["v0"]),
        })]);
    vec![MenuRow { id: "tree4/valid_critic".into(), fixture: f, spec }]
}

fn chain2g_rows() -> Vec<MenuRow> {
    let f = fixtures::chain2g();
    let gh = GaussHermite::new(f.gh_order);
    let (a0, a1) = (f.node("a0"), f.node("a1"));
    let q_a0 = sym(&f, &gh, "a0", &["s0", "a0"]);
    let q_a1 = sym(&f, &gh, "a1", &["s1", "a1"]);
    let v_s0 = sym(&f, &gh, "a0", &["s0"]);
    let v_s1 = sym(&f, &gh, "a1", &["s1"]);
    let mut rows = Vec::new();
    let mut push = |id: &str, spec: EstimatorSpec| {
        rows.push(MenuRow { id: format!("chain2g/{id}"), fixture: f.clone(), spec });
    };

    push(
        "score_qv",
        EstimatorSpec::of(vec![
            NodeSpec::empirical(a0)
                .with_critic(CriticChoice::Value {
                    set: f.cond(&["s0", "a0"]),
                    source: ValueRef::Expr(q_a0.clone()),
                })
                .with_baseline(BaselineChoice::Value {
                    set: f.cond(&["s0"]),
                    source: ValueRef::Expr(v_s0.clone()),
                }),
            NodeSpec::empirical(a1)
                .with_critic(CriticChoice::Value {
                    set: f.cond(&["s1", "a1"]),
                    source: ValueRef::Expr(q_a1.clone()),
                })
                .with_baseline(BaselineChoice::Value {
                    set: f.cond(&["s1"]),
                    source: ValueRef::Expr(v_s1.clone()),
                }),
        ]),
    );

    let all_reparam = || {
        vec![
            NodeSpec::reparameterized(f.node("s0")),
            NodeSpec::reparameterized(a0),
            NodeSpec::reparameterized(f.node("s1")),
            NodeSpec::reparameterized(a1),
        ]
    };
    push("pathwise_full", EstimatorSpec::of(all_reparam()));

    push(
        "gradient_critic",
        EstimatorSpec {
            nodes: all_reparam(),
            injection: Some(InjectionSpec {
                at: f.theta.unwrap(),
                separator: vec![a0, a1],
                sources: vec![
                    GradRef::ExprGrad { q: q_a0.clone(), wrt: a0 },
                    GradRef::ExprGrad { q: q_a1.clone(), wrt: a1 },
                ],
            }),
        },
    );

    let scaled = |q: &Arc<ExprValueFn>, c: f64| -> Arc<ExprValueFn> {
        Arc::new(ExprValueFn { expr: Expr::scale(c, q.expr.clone()), arity: q.arity })
    };
    for (label, factor) in [("debiased_exact", 1.0), ("debiased_zero", 0.0), ("debiased_scaled", 1.5)] {
        push(
            label,
            EstimatorSpec::of(vec![
                NodeSpec::empirical(a0)
                    .with_critic(CriticChoice::Value {
                        set: f.cond(&["s0", "a0"]),
                        source: ValueRef::Const(0.0),
                    })
                    .with_debias(QHatRef::Expr(scaled(&q_a0, factor))),
                NodeSpec::empirical(a1)
                    .with_critic(CriticChoice::Value {
                        set: f.cond(&["s1", "a1"]),
                        source: ValueRef::Const(0.0),
                    })
                    .with_debias(QHatRef::Expr(scaled(&q_a1, factor))),
            ]),
        );
    }

    rows
}

fn factored_rows() -> Vec<MenuRow> {
    let f = fixtures::factored();
    let gh = GaussHermite::new(f.gh_order);
    let (a1, a2) = (f.node("a1"), f.node("a2"));
    let spec = EstimatorSpec::of(vec![
        NodeSpec::empirical(a1)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s", "a1", "a2"]),
                source: ValueRef::Expr(sym(&f, &gh, "a1", &["s", "a1", "a2"])),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s", "a2"]),
                source: ValueRef::Expr(sym(&f, &gh, "a1", &["s", "a2"])),
            }),
        NodeSpec::empirical(a2)
            .with_critic(CriticChoice::Value {
                set: f.cond(&["s", "a1", "a2"]),
                source: ValueRef::Expr(sym(&f, &gh, "a2", &["s", "a1", "a2"])),
            })
            .with_baseline(BaselineChoice::Value {
                set: f.cond(&["s", "a1"]),
                source: ValueRef::Expr(sym(&f, &gh, "a2", &["s", "a1"])),
            }),
    ]);
    vec![MenuRow { id: "factored/action_conditional".into(), fixture: f, spec }]
}

fn blackbox_rows() -> Vec<MenuRow> {
    let f = fixtures::blackbox();
    let table = table_of(&f);
    let idx = f.node("idx");
    let spec = EstimatorSpec::of(vec![NodeSpec::empirical(idx).with_critic(
        CriticChoice::Value {
            set: f.cond(&["idx"]),
            source: q_of(&f, &table, "idx", &["idx"]),
        },
    )]);
    vec![MenuRow { id: "blackbox/parameter_critic".into(), fixture: f, spec }]
}

/// Every registered estimator row, in a stable order.
pub fn full_menu() -> Vec<MenuRow> {
    let mut rows = Vec::new();
    rows.extend(chain2_rows());
    rows.extend(noise_rows());
    rows.extend(noncong_rows());
    rows.extend(tree4_rows());
    rows.extend(chain2g_rows());
    rows.extend(factored_rows());
    rows.extend(blackbox_rows());
    rows
}

/// Rows for one fixture.
pub fn menu_for(fixture: &str) -> Vec<MenuRow> {
    full_menu()
        .into_iter()
        .filter(|r| r.fixture.name == fixture)
        .collect()
}
