//! The acceptance gate: ten criteria, each pinned to its tolerance, each
//! reporting one pass/fail line. `scg verify` and the acceptance test suite
//! run the same functions.

use std::sync::Arc;
use std::time::Instant;

use scg_core::analysis::{
    ancestors_closure, d_separated, is_markov, is_markov_for_costs, validate_bootstrap, CondSet,
};
use scg_core::autodiff::{backward, horizon_backprop, horizon_backprop_unheld, record};
use scg_core::estimators::{
    compile, gradient_critic_bootstrap_check, BootstrapMember, CriticChoice, EstimatorSpec,
    GradRef, NodeSpec, ValueRef,
};
use scg_core::fixtures::{self, Fixture};
use scg_core::graph::{node_set, NodeSet};
use scg_core::oracle::{
    check_ci_numeric, enumerate_support, exact_conditional_variance, exact_gradient_critic,
    exact_parameter_gradient, exact_value, exact_value_fn, forward_value_expr, optimal_baseline,
    score_at, TargetSpec,
};
use scg_core::quadrature::GaussHermite;
use scg_core::value_store::{fit_bootstrap, fit_on_return, BootstrapPart};

use crate::menu::{enumerate_opts, full_menu};

/// Exactness tolerance for enumeration-level identities.
const TOL_EXACT: f64 = 1e-9;
/// Pointwise differentiation identities on one tape.
const TOL_TAPE: f64 = 1e-12;
/// Relative tolerance for finite-difference agreement of critic gradients.
const TOL_FD_REL: f64 = 1e-5;
/// Numeric conditional-independence factorization tolerance.
const TOL_CI: f64 = 1e-9;
/// Conditional-expectation identities (values, bootstraps).
const TOL_VALUE_ID: f64 = 1e-8;
/// Strict-inequality margins must clear ten times the base tolerance.
const MARGIN_FACTOR: f64 = 10.0;
/// Monte-Carlo gates allow four standard errors.
const MC_SIGMA: f64 = 4.0;
/// Monte-Carlo sample count for criterion 2 and criterion 10.
const MC_SAMPLES: usize = 100_000;
/// Learned tables must land within five standard errors per key.
const LEARNED_SIGMA: f64 = 5.0;

pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub outcome: Result<String, String>,
    pub seconds: f64,
}

pub fn criterion_names() -> Vec<(usize, &'static str)> {
    vec![
        (1, "exact unbiasedness of the estimator menu"),
        (2, "monte-carlo unbiasedness of the estimator menu"),
        (3, "horizon backprop double-counting accounting"),
        (4, "critic gradient matches value-function gradient"),
        (5, "variance orderings of baselines and conditioning sets"),
        (6, "d-separation soundness against numeric independence"),
        (7, "value nesting, Bellman, and bootstrap identities"),
        (8, "debiased estimator unbiasedness for perturbed critics"),
        (9, "invalid-set rejection is load-bearing"),
        (10, "learned value convergence and bootstrap target variance"),
    ]
}

pub fn run_criterion(id: usize) -> CriterionResult {
    let name = criterion_names()
        .into_iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| n)
        .unwrap_or("unknown");
    let start = Instant::now();
    let outcome = match id {
        1 => criterion_exact_unbiasedness(),
        2 => criterion_mc_unbiasedness(),
        3 => criterion_horizon_double_counting(),
        4 => criterion_critic_gradient(),
        5 => criterion_variance_orderings(),
        6 => criterion_dsep_soundness(),
        7 => criterion_value_identities(),
        8 => criterion_debiased(),
        9 => criterion_invalid_set_rejection(),
        10 => criterion_learned_values(),
        _ => Err(format!("no criterion {id}")),
    };
    CriterionResult { id, name, outcome, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=10).map(run_criterion).collect()
}

fn exact_grad(f: &Fixture) -> Result<f64, String> {
    exact_parameter_gradient(&f.graph, &f.inputs, f.theta.unwrap(), enumerate_opts(f))
        .map_err(|e| e.to_string())
}

// --- 1 -----------------------------------------------------------------

fn criterion_exact_unbiasedness() -> Result<String, String> {
    let menu = full_menu();
    if menu.len() < 12 {
        return Err(format!("menu has only {} specs", menu.len()));
    }
    let mut worst: f64 = 0.0;
    for row in &menu {
        let f = &row.fixture;
        let want = exact_grad(f)?;
        let compiled = compile(&f.graph, f.theta.unwrap(), &row.spec, true)
            .map_err(|e| format!("{}: {e}", row.id))?;
        let (mean, _) = compiled
            .exact_moments(&f.inputs, enumerate_opts(f))
            .map_err(|e| format!("{}: {e}", row.id))?;
        let err = (mean - want).abs();
        worst = worst.max(err);
        if err > TOL_EXACT {
            return Err(format!("{}: |{mean} - {want}| = {err} > {TOL_EXACT}", row.id));
        }
    }
    Ok(format!("{} specs, worst |bias| {worst:.2e} <= {TOL_EXACT}", menu.len()))
}

// --- 2 -----------------------------------------------------------------

fn criterion_mc_unbiasedness() -> Result<String, String> {
    let menu = full_menu();
    let mut worst: f64 = 0.0;
    for row in &menu {
        let f = &row.fixture;
        let want = exact_grad(f)?;
        let compiled = compile(&f.graph, f.theta.unwrap(), &row.spec, true)
            .map_err(|e| format!("{}: {e}", row.id))?;
        let est = compiled
            .mc_estimate(&f.inputs, MC_SAMPLES, 1)
            .map_err(|e| format!("{}: {e}", row.id))?;
        let sigmas = (est.mean - want).abs() / est.stderr.max(f64::MIN_POSITIVE);
        // Zero-variance rows (fully deterministic estimates) must be exact.
        if est.stderr == 0.0 {
            if (est.mean - want).abs() > TOL_EXACT {
                return Err(format!("{}: deterministic estimate off: {} vs {want}", row.id, est.mean));
            }
            continue;
        }
        worst = worst.max(sigmas);
        if sigmas > MC_SIGMA {
            return Err(format!(
                "{}: {} vs {want} is {sigmas:.2} stderr at n={MC_SAMPLES}",
                row.id, est.mean
            ));
        }
    }
    Ok(format!("{} specs at n={MC_SAMPLES}, worst deviation {worst:.2} stderr <= {MC_SIGMA}", menu.len()))
}

// --- 3 -----------------------------------------------------------------

fn criterion_horizon_double_counting() -> Result<String, String> {
    let f = fixtures::ladder_b();
    use rand::SeedableRng;
    let a = f
        .graph
        .forward_sample(&f.inputs, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| e.to_string())?;
    let t = record(&f.graph, &a).map_err(|e| e.to_string())?;
    let l = f.graph.by_name("l").unwrap();
    let x = f.node("x");
    let (v3, v4) = (f.node("v3"), f.node("v4"));

    let full = backward(&t, t.node(l));
    let grad_x = full.node(&t, x);
    if (grad_x - 32.0).abs() > TOL_TAPE {
        return Err(format!("full backprop {grad_x} != 32"));
    }
    let injected = [full.at(t.node(v3)), full.at(t.node(v4))];
    let members = [t.node(v3), t.node(v4)];
    let held = horizon_backprop(&t, t.node(x), &members, &injected).map_err(|e| e.to_string())?;
    if (held - 32.0).abs() > TOL_TAPE {
        return Err(format!("held horizon {held} != 32"));
    }
    let naive =
        horizon_backprop_unheld(&t, t.node(x), &members, &injected).map_err(|e| e.to_string())?;
    if (naive - 40.0).abs() > TOL_TAPE {
        return Err(format!("naive horizon {naive} != 40"));
    }
    let dv4_dv3 = backward(&t, t.node(v4)).at(t.node(v3));
    let dv3_dx = backward(&t, t.node(v3)).node(&t, x);
    let double_counted = injected[1] * dv4_dv3 * dv3_dx;
    if ((naive - held) - double_counted).abs() > TOL_TAPE || (double_counted - 8.0).abs() > TOL_TAPE
    {
        return Err(format!(
            "discrepancy {} does not match the double-counted path term {double_counted}",
            naive - held
        ));
    }
    Ok(format!(
        "full=32, held horizon=32, naive={naive}, double-counted path term={double_counted}"
    ))
}

// --- 4 -----------------------------------------------------------------

fn criterion_critic_gradient() -> Result<String, String> {
    let f = fixtures::chain2g();
    let table = enumerate_support(&f.graph, &f.inputs, enumerate_opts(&f)).map_err(|e| e.to_string())?;
    let gh = GaussHermite::new(f.gh_order);
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for (state, action) in [("s0", "a0"), ("s1", "a1")] {
        let v = f.node(action);
        let set = f.cond(&[state, action]);
        if !is_markov(&f.graph, &set, v) {
            return Err(format!("{{{state},{action}}} unexpectedly not Markov"));
        }
        let q = forward_value_expr(&f.graph, v, &set.members, &gh).map_err(|e| e.to_string())?;
        let gc = exact_gradient_critic(&f.graph, &table, v, &set).map_err(|e| e.to_string())?;
        let h = 1e-4;
        for atom in &table.atoms {
            let g_table = gc.table.eval(&atom.assignment).unwrap();
            let mut lo = atom.assignment.values.clone();
            let mut hi = lo.clone();
            lo[v.idx()] -= h;
            hi[v.idx()] += h;
            let fd = (q.eval_values(&hi).unwrap() - q.eval_values(&lo).unwrap()) / (2.0 * h);
            let rel = (fd - g_table).abs() / fd.abs().max(1.0);
            worst = worst.max(rel);
            if rel > TOL_FD_REL {
                return Err(format!(
                    "{action}: finite difference {fd} vs critic gradient {g_table} (rel {rel:.2e})"
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} keys, worst relative gap {worst:.2e} <= {TOL_FD_REL}"))
}

// --- 5 -----------------------------------------------------------------

fn criterion_variance_orderings() -> Result<String, String> {
    let margin = MARGIN_FACTOR * TOL_EXACT;

    // Nested congruent baselines on the chain (advantage second moments).
    let f = fixtures::chain2();
    let table = enumerate_support(&f.graph, &f.inputs, enumerate_opts(&f)).map_err(|e| e.to_string())?;
    for (v, cset, b2) in [
        ("a0", vec!["s0", "a0"], vec!["s0"]),
        ("a1", vec!["s1", "a1"], vec!["s1"]),
    ] {
        let node = f.node(v);
        let q = exact_value(&f.graph, &table, &f.cond(&cset), TargetSpec::CostToGo(node));
        let v_small = exact_value(&f.graph, &table, &CondSet::empty(), TargetSpec::CostToGo(node));
        let v_big = exact_value(&f.graph, &table, &f.cond(&b2), TargetSpec::CostToGo(node));
        let m = |vf: &scg_core::oracle::TableValueFn| {
            scg_core::oracle::exact_expectation(&table, |a| {
                let d = q.eval(a).unwrap() - vf.eval(a).unwrap();
                d * d
            })
        };
        if m(&v_big) > m(&v_small) + TOL_EXACT {
            return Err(format!("{v}: nested baseline ordering violated"));
        }
    }

    // Optimal-baseline orderings.
    let theta = f.theta.unwrap();
    let a0 = f.node("a0");
    let cset = f.cond(&["s0", "a0"]);
    let q = exact_value(&f.graph, &table, &cset, TargetSpec::CostToGo(a0));
    let b_small = optimal_baseline(&f.graph, &table, theta, a0, &cset, &CondSet::empty())
        .map_err(|e| e.to_string())?;
    let b_big = optimal_baseline(&f.graph, &table, theta, a0, &cset, &f.cond(&["s0"]))
        .map_err(|e| e.to_string())?;
    let v_s0 = exact_value(&f.graph, &table, &f.cond(&["s0"]), TargetSpec::CostToGo(a0));
    let var_with = |b: &dyn Fn(&scg_core::Assignment) -> f64| {
        scg_core::oracle::estimator_moments(&table, |a| {
            let s = score_at(&f.graph, a, a0, theta).unwrap();
            s * (q.eval(a).unwrap() - b(a))
        })
        .1
    };
    let var_small = var_with(&|a| b_small.eval(a).unwrap());
    let var_big = var_with(&|a| b_big.eval(a).unwrap());
    let var_value = var_with(&|a| v_s0.eval(a).unwrap());
    if var_big > var_small + TOL_EXACT || var_big > var_value + TOL_EXACT {
        return Err("optimal-baseline variance ordering violated".into());
    }

    // The uncontrollable-noise regimes.
    let fz = fixtures::noise();
    let ztable = enumerate_support(&fz.graph, &fz.inputs, enumerate_opts(&fz)).map_err(|e| e.to_string())?;
    let z = fz.node("z");
    let ztheta = fz.theta.unwrap();
    let q_of = |set: &[&str]| exact_value(&fz.graph, &ztable, &fz.cond(set), TargetSpec::CostToGo(z));
    let var_regime = |cset: &[&str], bset: &[&str]| {
        let qc = q_of(cset);
        let bb = q_of(bset);
        scg_core::oracle::estimator_moments(&ztable, |a| {
            let s = score_at(&fz.graph, a, z, ztheta).unwrap();
            s * (qc.eval(a).unwrap() - bb.eval(a).unwrap())
        })
        .1
    };
    let v_naive = var_regime(&["z", "zp"], &[]);
    let v_small = var_regime(&["z"], &[]);
    let v_cong = var_regime(&["z", "zp"], &["zp"]);
    let v_noncong = var_regime(&["z"], &["zp"]);
    if !(v_naive > v_small + margin) {
        return Err(format!("regimes: naive {v_naive} not above marginalized {v_small}"));
    }
    if (v_small - v_cong).abs() > TOL_EXACT {
        return Err(format!("regimes: {v_small} vs congruent {v_cong} should coincide"));
    }
    if !(v_noncong > v_small + margin) {
        return Err(format!("regimes: non-congruent {v_noncong} not high again"));
    }

    // The shared-parent example where a non-congruent baseline helps.
    let fn2 = fixtures::noncong();
    let ntable = enumerate_support(&fn2.graph, &fn2.inputs, enumerate_opts(&fn2)).map_err(|e| e.to_string())?;
    let zn = fn2.node("z");
    let qn = exact_value(&fn2.graph, &ntable, &fn2.cond(&["z", "v1"]), TargetSpec::CostToGo(zn));
    let v0 = exact_value(&fn2.graph, &ntable, &CondSet::empty(), TargetSpec::CostToGo(zn));
    let vb = exact_value(&fn2.graph, &ntable, &fn2.cond(&["v1p"]), TargetSpec::CostToGo(zn));
    let m_empty = scg_core::oracle::exact_expectation(&ntable, |a| {
        let d = qn.eval(a).unwrap() - v0.eval(a).unwrap();
        d * d
    });
    let m_branch = scg_core::oracle::exact_expectation(&ntable, |a| {
        let d = qn.eval(a).unwrap() - vb.eval(a).unwrap();
        d * d
    });
    if !(m_branch + margin < m_empty) {
        return Err(format!("non-congruent improvement missing: {m_branch} vs {m_empty}"));
    }
    Ok(format!(
        "orderings hold; regimes {v_naive:.2} > {v_small:.4} = {v_cong:.4} < {v_noncong:.2}, improvement {m_empty:.2} -> {m_branch:.4}"
    ))
}

// --- 6 -----------------------------------------------------------------

fn criterion_dsep_soundness() -> Result<String, String> {
    let mut scanned = 0usize;
    let mut claimed = 0usize;
    for f in fixtures::fixtures() {
        if f.graph.node_count() > 7 {
            continue;
        }
        if f.graph.ids().any(|v| {
            matches!(
                f.graph.kind(v),
                scg_core::graph::NodeKind::Stochastic(scg_core::graph::DistFamily::Gaussian { .. })
            )
        }) {
            continue;
        }
        let table = enumerate_support(&f.graph, &f.inputs, enumerate_opts(&f)).map_err(|e| e.to_string())?;
        let ids: Vec<_> = f.graph.ids().collect();
        for &a in &ids {
            for &b in &ids {
                if a >= b {
                    continue;
                }
                let rest: Vec<_> = ids.iter().copied().filter(|v| *v != a && *v != b).collect();
                for mask in 0..(1usize << rest.len()) {
                    let zset: NodeSet = rest
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, v)| *v)
                        .collect();
                    scanned += 1;
                    if d_separated(&f.graph, &node_set(&[a]), &node_set(&[b]), &zset) {
                        claimed += 1;
                        if !check_ci_numeric(&table, &node_set(&[a]), &node_set(&[b]), &zset, TOL_CI)
                        {
                            return Err(format!(
                                "{}: false independence of {} and {} given {:?}",
                                f.name,
                                f.graph.name(a),
                                f.graph.name(b),
                                f.graph.names(&zset)
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{scanned} triples scanned, {claimed} independence claims, zero false"))
}

// --- 7 -----------------------------------------------------------------

fn criterion_value_identities() -> Result<String, String> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut checks = 0usize;

    // Nesting: E[V(big)|small] = V(small) over random nested pairs.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for f in [fixtures::noise(), fixtures::noncong(), fixtures::tree4(), fixtures::chain2()] {
        let table = enumerate_support(&f.graph, &f.inputs, enumerate_opts(&f)).map_err(|e| e.to_string())?;
        let ids: Vec<_> = f.graph.ids().collect();
        for _ in 0..50 {
            let mut small = NodeSet::new();
            let mut big = NodeSet::new();
            for &v in &ids {
                match rng.gen_range(0..3) {
                    0 => {
                        small.insert(v);
                        big.insert(v);
                    }
                    1 => {
                        big.insert(v);
                    }
                    _ => {}
                }
            }
            let target = TargetSpec::TotalCost;
            let v_big = exact_value(&f.graph, &table, &CondSet::new(big), target);
            let v_small = exact_value(&f.graph, &table, &CondSet::new(small.clone()), target);
            let avg = exact_value_fn(&table, &CondSet::new(small), |a| v_big.eval(a).unwrap());
            for atom in &table.atoms {
                let l = avg.eval(&atom.assignment).unwrap();
                let r = v_small.eval(&atom.assignment).unwrap();
                if (l - r).abs() > TOL_VALUE_ID {
                    return Err(format!("{}: nesting identity off by {}", f.name, (l - r).abs()));
                }
            }
            checks += 1;
        }
    }

    // Generalized Bellman on the chain: E[V({s1})|{s0}] = V({s0}) for the
    // shared downstream target.
    let f = fixtures::chain2();
    let table = enumerate_support(&f.graph, &f.inputs, enumerate_opts(&f)).map_err(|e| e.to_string())?;
    let target = TargetSpec::CostToGo(f.node("s1"));
    let x2 = f.cond(&["s1"]);
    if !is_markov_for_costs(&f.graph, &x2, &f.graph.cost_to_go_set(f.node("s1"))) {
        return Err("{s1} should be Markov for its cost".into());
    }
    let x1 = f.cond(&["s0"]);
    if !x1.members.is_subset(&ancestors_closure(&f.graph, &x2)) {
        return Err("{s0} should sit in the ancestor closure of {s1}".into());
    }
    let v2 = exact_value(&f.graph, &table, &x2, target);
    let v1 = exact_value(&f.graph, &table, &x1, target);
    let avg = exact_value_fn(&table, &x1, |a| v2.eval(a).unwrap());
    for atom in &table.atoms {
        let l = avg.eval(&atom.assignment).unwrap();
        let r = v1.eval(&atom.assignment).unwrap();
        if (l - r).abs() > TOL_VALUE_ID {
            return Err(format!("Bellman identity off by {}", (l - r).abs()));
        }
    }
    checks += 1;

    // Bootstrap equality on the certified decomposition.
    let v = f.node("s0");
    let set_v = f.cond(&["s0"]);
    let parts = vec![
        (node_set(&[f.node("r0")]), f.cond(&["s0", "a0"])),
        (node_set(&[f.node("s1")]), f.cond(&["s1"])),
    ];
    match validate_bootstrap(&f.graph, v, &set_v, &parts) {
        Ok(true) => {}
        other => return Err(format!("bootstrap certification failed: {other:?}")),
    }
    let vp0 = exact_value_fn(&table, &parts[0].1, |a| a.value(f.node("r0")));
    let vp1 = exact_value(&f.graph, &table, &parts[1].1, TargetSpec::CostToGo(f.node("s1")));
    let combined = exact_value_fn(&table, &set_v, |a| vp0.eval(a).unwrap() + vp1.eval(a).unwrap());
    let direct = exact_value(&f.graph, &table, &set_v, TargetSpec::CostToGo(v));
    for atom in &table.atoms {
        let l = combined.eval(&atom.assignment).unwrap();
        let r = direct.eval(&atom.assignment).unwrap();
        if (l - r).abs() > TOL_VALUE_ID {
            return Err(format!("bootstrap identity off by {}", (l - r).abs()));
        }
    }
    checks += 1;

    // Gradient-critic bootstrap on the fully reparameterized Gaussian chain.
    let fg = fixtures::chain2g();
    let mut work = fg.graph.clone();
    for name in ["s0", "a0", "s1", "a1"] {
        let node = work.by_name(name).unwrap();
        work = scg_core::estimators::reparameterize(&work, node).map_err(|e| e.to_string())?;
    }
    let gh = GaussHermite::new(fg.gh_order);
    let inputs = vec![(work.by_name("t").unwrap(), fg.inputs[0].1)];
    let wtable = enumerate_support(&work, &inputs, enumerate_opts(&fg)).map_err(|e| e.to_string())?;
    let (s0, a0, s1, a1) = (
        work.by_name("s0").unwrap(),
        work.by_name("a0").unwrap(),
        work.by_name("s1").unwrap(),
        work.by_name("a1").unwrap(),
    );
    let (r0, r1) = (work.by_name("r0").unwrap(), work.by_name("r1").unwrap());
    let q_s1 = Arc::new(
        forward_value_expr(&work, s1, &[s0, a0, s1].into_iter().collect(), &gh)
            .map_err(|e| e.to_string())?,
    );
    let members = vec![
        BootstrapMember { node: r0, set: CondSet::of(&[s0, a0]), source: GradRef::Const(1.0) },
        BootstrapMember {
            node: s1,
            set: CondSet::of(&[s0, a0, s1]),
            source: GradRef::ExprGrad { q: q_s1, wrt: s1 },
        },
    ];
    match gradient_critic_bootstrap_check(&work, &wtable, a0, &CondSet::of(&[s0, a0]), &members, TOL_VALUE_ID)
    {
        Ok(true) => checks += 1,
        Ok(false) => return Err("gradient-critic bootstrap equality failed".into()),
        Err(e) => return Err(format!("gradient-critic bootstrap: {e}")),
    }
    let members = vec![BootstrapMember {
        node: r1,
        set: CondSet::of(&[s1, a1]),
        source: GradRef::Const(1.0),
    }];
    match gradient_critic_bootstrap_check(&work, &wtable, a1, &CondSet::of(&[s1, a1]), &members, TOL_VALUE_ID)
    {
        Ok(true) => checks += 1,
        Ok(false) => return Err("single-child gradient bootstrap failed".into()),
        Err(e) => return Err(format!("single-child gradient bootstrap: {e}")),
    }

    Ok(format!("{checks} identity families verified at {TOL_VALUE_ID}"))
}

// --- 8 -----------------------------------------------------------------

fn criterion_debiased() -> Result<String, String> {
    let f = fixtures::chain2g();
    let want = exact_grad(&f)?;
    let mut details = Vec::new();
    for label in ["debiased_exact", "debiased_zero", "debiased_scaled"] {
        let row = full_menu()
            .into_iter()
            .find(|r| r.id == format!("chain2g/{label}"))
            .ok_or_else(|| format!("menu row {label} missing"))?;
        let compiled = compile(&f.graph, f.theta.unwrap(), &row.spec, true)
            .map_err(|e| format!("{label}: {e}"))?;
        let (mean, _) = compiled
            .exact_moments(&f.inputs, enumerate_opts(&f))
            .map_err(|e| format!("{label}: {e}"))?;
        if (mean - want).abs() > TOL_EXACT {
            return Err(format!("{label}: {mean} vs {want}"));
        }
        details.push(format!("{label} |bias| {:.1e}", (mean - want).abs()));
    }
    Ok(details.join(", "))
}

// --- 9 -----------------------------------------------------------------

fn criterion_invalid_set_rejection() -> Result<String, String> {
    let f = fixtures::tree4();
    let table = enumerate_support(&f.graph, &f.inputs, enumerate_opts(&f)).map_err(|e| e.to_string())?;
    let v1 = f.node("v1");
    let bad_set = f.cond(&["v1"]);
    if scg_core::analysis::is_valid_critic_set(&f.graph, v1, &bad_set) {
        return Err("{v1} should not be a valid critic set for v1".into());
    }
    let bad = EstimatorSpec::of(vec![NodeSpec::empirical(v1).with_critic(CriticChoice::Value {
        set: bad_set.clone(),
        source: ValueRef::Table(Arc::new(exact_value(
            &f.graph,
            &table,
            &bad_set,
            TargetSpec::CostToGo(v1),
        ))),
    })]);
    match compile(&f.graph, f.theta.unwrap(), &bad, true) {
        Err(scg_core::estimators::EstimatorError::InvalidSpec { node, .. }) if node == "v1" => {}
        other => return Err(format!("expected refusal naming v1, got {:?}", other.err())),
    }
    let compiled = compile(&f.graph, f.theta.unwrap(), &bad, false).map_err(|e| e.to_string())?;
    let (mean, _) = compiled
        .exact_moments(&f.inputs, enumerate_opts(&f))
        .map_err(|e| e.to_string())?;
    let want = exact_grad(&f)?;
    let bias = (mean - want).abs();
    if bias <= MARGIN_FACTOR * TOL_EXACT {
        return Err(format!("bias {bias} not measurably large"));
    }
    Ok(format!("refused when checked; with checks off the bias is {bias:.3e}"))
}

// --- 10 ----------------------------------------------------------------

fn criterion_learned_values() -> Result<String, String> {
    let f = fixtures::chain2();
    let table = enumerate_support(&f.graph, &f.inputs, enumerate_opts(&f)).map_err(|e| e.to_string())?;

    // Regression on return.
    let set = f.cond(&["s0", "a0"]);
    let target = TargetSpec::CostToGo(f.node("a0"));
    let exact = exact_value(&f.graph, &table, &set, target);
    let (store, _) = fit_on_return(&f.graph, &f.inputs, &set, target, MC_SAMPLES, 11)
        .map_err(|e| e.to_string())?;
    for (key, mean, _, stderr) in store.cell_stats() {
        let want = exact.map[&key];
        if (mean - want).abs() > LEARNED_SIGMA * stderr {
            return Err(format!("return regression: cell {key:?} {mean} vs {want}"));
        }
    }

    // Bootstrap regression toward exact downstream values.
    let s0 = f.node("s0");
    let set_v = f.cond(&["s0"]);
    let v_s1 = Arc::new(exact_value(
        &f.graph,
        &table,
        &f.cond(&["s1"]),
        TargetSpec::CostToGo(f.node("s1")),
    ));
    let parts = vec![
        BootstrapPart { part: node_set(&[f.node("r0")]), set: f.cond(&["s0", "a0"]), source: None },
        BootstrapPart {
            part: node_set(&[f.node("s1")]),
            set: f.cond(&["s1"]),
            source: Some(ValueRef::Table(v_s1.clone())),
        },
    ];
    let exact_v = exact_value(&f.graph, &table, &set_v, TargetSpec::CostToGo(s0));
    let (bstore, _) = fit_bootstrap(&f.graph, &f.inputs, s0, &set_v, &parts, MC_SAMPLES, 21)
        .map_err(|e| e.to_string())?;
    for (key, mean, _, stderr) in bstore.cell_stats() {
        let want = exact_v.map[&key];
        if (mean - want).abs() > LEARNED_SIGMA * stderr {
            return Err(format!("bootstrap regression: cell {key:?} {mean} vs {want}"));
        }
    }

    // The bootstrap target's conditional variance never exceeds the raw
    // return's, per key, exactly.
    let return_var = exact_conditional_variance(&table, &set_v, |a| f.graph.cost_to_go(s0, a));
    let boot_var = exact_conditional_variance(&table, &set_v, |a| {
        a.value(f.node("r0")) + v_s1.eval(a).unwrap()
    });
    for (key, vb) in &boot_var {
        let vr = return_var[key];
        if *vb > vr + TOL_TAPE {
            return Err(format!("key {key:?}: bootstrap target variance {vb} > return {vr}"));
        }
    }
    Ok(format!(
        "tables within {LEARNED_SIGMA} stderr at n={MC_SAMPLES}; bootstrap target variance dominated per key"
    ))
}
