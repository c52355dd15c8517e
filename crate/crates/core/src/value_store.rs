//! Learned approximations to values, critics, and gradient-critics: tabular
//! over discrete conditioning keys, or per-key polynomial in one continuous
//! anchor node. Trained by regression on return, bootstrap targets, or the
//! combined value+gradient (Sobolev) loss.
//!
//! Tabular fits use exact running means (count-based steps), so the
//! full-enumeration weighted fit lands on the exact conditional expectation.
//! Unseen keys predict the declared default of zero and are counted, never
//! silently extrapolated.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{is_markov, validate_bootstrap, AnalysisError, CondSet};
use crate::autodiff::{backward, record, TapeError};
use crate::estimators::{EstimatorError, ValueRef};
use crate::graph::{Assignment, Graph, InputValues, NodeId, NodeSet, SampleError};
use crate::oracle::{node_rooted_surrogate_slot, SupportTable, TargetSpec};

#[derive(Debug, Error)]
pub enum ValueStoreError {
    #[error("bootstrap preconditions fail: {0}")]
    BootstrapInvalid(AnalysisError),
    #[error("conditioning set is not Markov for the anchor node, required by value-mode gradient fitting")]
    NotMarkov,
    #[error("anchor node has (numerically) zero conditional variance given the rest of the set; fit would see a degenerate slice")]
    AnchorDegenerate,
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, Default)]
struct Cell {
    params: Vec<f64>,
    count: u64,
    weight: f64,
    m2: f64,
    last_residual: f64,
}

/// Tabular or per-key-polynomial learned value function.
#[derive(Debug)]
pub struct LearnedValueFn {
    pub cond: CondSet,
    pub key_set: NodeSet,
    pub anchor: Option<NodeId>,
    pub degree: usize,
    cells: HashMap<Vec<u64>, Cell>,
    misses: AtomicU64,
}

impl Clone for LearnedValueFn {
    fn clone(&self) -> Self {
        LearnedValueFn {
            cond: self.cond.clone(),
            key_set: self.key_set.clone(),
            anchor: self.anchor,
            degree: self.degree,
            cells: self.cells.clone(),
            misses: AtomicU64::new(self.misses.load(Ordering::Relaxed)),
        }
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn poly_deriv_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut out = 0.0;
    for j in (1..coeffs.len()).rev() {
        out = out * x + (j as f64) * coeffs[j];
    }
    out
}

impl LearnedValueFn {
    pub fn new(cond: CondSet, anchor: Option<NodeId>, degree: usize) -> LearnedValueFn {
        let mut key_set = cond.members.clone();
        if let Some(v) = anchor {
            key_set.remove(&v);
        }
        LearnedValueFn {
            cond,
            key_set,
            anchor,
            degree,
            cells: HashMap::new(),
            misses: AtomicU64::new(0),
        }
    }

    pub fn params_per_cell(&self) -> usize {
        if self.anchor.is_some() {
            self.degree + 1
        } else {
            1
        }
    }

    /// Prediction at an assignment; unseen keys return 0 and bump the miss
    /// counter.
    pub fn predict(&self, a: &Assignment) -> f64 {
        let key = a.key_of(&self.key_set);
        match self.cells.get(&key) {
            Some(cell) => match self.anchor {
                None => cell.params[0],
                Some(v) => poly_eval(&cell.params, a.value(v)),
            },
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                0.0
            }
        }
    }

    /// Derivative of the per-key polynomial at the anchor value.
    pub fn predict_grad(&self, a: &Assignment) -> f64 {
        let v = self.anchor.expect("gradient prediction needs an anchor");
        let key = a.key_of(&self.key_set);
        match self.cells.get(&key) {
            Some(cell) => poly_deriv_eval(&cell.params, a.value(v)),
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                0.0
            }
        }
    }

    /// Raw polynomial coefficients for the key of `a` (zeros when unseen).
    pub fn coeffs_for(&self, a: &Assignment) -> Vec<f64> {
        let key = a.key_of(&self.key_set);
        match self.cells.get(&key) {
            Some(cell) => cell.params.clone(),
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                vec![0.0; self.params_per_cell()]
            }
        }
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn keys(&self) -> usize {
        self.cells.len()
    }

    /// Per-key observation count and standard error of the running mean
    /// (tabular cells only).
    pub fn cell_stats(&self) -> Vec<(Vec<u64>, f64, u64, f64)> {
        self.cells
            .iter()
            .map(|(k, c)| {
                let stderr = if c.count >= 2 {
                    (c.m2 / (c.count - 1) as f64 / c.count as f64).sqrt()
                } else {
                    0.0
                };
                (k.clone(), c.params[0], c.count, stderr)
            })
            .collect()
    }

    pub fn scale_params(&mut self, factor: f64) {
        for cell in self.cells.values_mut() {
            for p in &mut cell.params {
                *p *= factor;
            }
        }
    }

    fn update_mean(&mut self, key: Vec<u64>, target: f64) {
        let cell = self.cells.entry(key).or_insert_with(|| Cell {
            params: vec![0.0],
            ..Cell::default()
        });
        cell.count += 1;
        let delta = target - cell.params[0];
        cell.params[0] += delta / cell.count as f64;
        cell.m2 += delta * (target - cell.params[0]);
        cell.last_residual = target - cell.params[0];
    }

    fn update_mean_weighted(&mut self, key: Vec<u64>, target: f64, w: f64) {
        let cell = self.cells.entry(key).or_insert_with(|| Cell {
            params: vec![0.0],
            ..Cell::default()
        });
        cell.count += 1;
        cell.weight += w;
        cell.params[0] += (target - cell.params[0]) * (w / cell.weight);
        cell.last_residual = target - cell.params[0];
    }

    /// JSON snapshot: {set, anchor, degree, keys, params, misses}. Keys are
    /// rendered as the actual conditioning values.
    pub fn to_doc(&self, g: &Graph) -> LearnedValueDoc {
        let mut keys = Vec::new();
        let mut params = Vec::new();
        let mut rows: Vec<(&Vec<u64>, &Cell)> = self.cells.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        for (k, cell) in rows {
            keys.push(k.iter().map(|bits| f64::from_bits(*bits)).collect());
            params.push(cell.params.clone());
        }
        LearnedValueDoc {
            set: self.key_set.iter().map(|v| g.name(*v).to_string()).collect(),
            anchor: self.anchor.map(|v| g.name(v).to_string()),
            degree: self.degree,
            keys,
            params,
            misses: self.misses(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LearnedValueDoc {
    pub set: Vec<String>,
    pub anchor: Option<String>,
    pub degree: usize,
    pub keys: Vec<Vec<f64>>,
    pub params: Vec<Vec<f64>>,
    pub misses: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    pub final_loss: f64,
    pub max_key_residual: f64,
}

fn report_from(store: &LearnedValueFn, steps: usize, final_loss: f64) -> TrainReport {
    let max_key_residual = store
        .cells
        .values()
        .map(|c| c.last_residual.abs())
        .fold(0.0, f64::max);
    TrainReport { steps, final_loss, max_key_residual }
}

// ---------------------------------------------------------------------------
// Regression on return
// ---------------------------------------------------------------------------

/// Fit the conditional mean of a target by streaming forward samples:
/// count-based running means per key (the exact stochastic-approximation
/// schedule for a tabular mean).
pub fn fit_on_return(
    g: &Graph,
    inputs: &InputValues,
    set: &CondSet,
    target: TargetSpec,
    n: usize,
    seed: u64,
) -> Result<(LearnedValueFn, TrainReport), ValueStoreError> {
    let mut store = LearnedValueFn::new(set.clone(), None, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loss = 0.0;
    for _ in 0..n {
        let a = g.forward_sample(inputs, &mut rng)?;
        let y = target.eval(g, &a);
        let key = a.key_of(&store.key_set);
        store.update_mean(key, y);
        let err = store.predict(&a) - y;
        loss = err * err;
    }
    let report = report_from(&store, n, loss);
    Ok((store, report))
}

/// Same regression under full-enumeration weighting: the fixed point is the
/// exact conditional expectation per key.
pub fn fit_on_return_weighted(
    g: &Graph,
    table: &SupportTable,
    set: &CondSet,
    target: TargetSpec,
) -> (LearnedValueFn, TrainReport) {
    let mut store = LearnedValueFn::new(set.clone(), None, 0);
    for atom in &table.atoms {
        let y = target.eval(g, &atom.assignment);
        let key = atom.assignment.key_of(&store.key_set);
        store.update_mean_weighted(key, y, atom.prob);
    }
    let report = report_from(&store, table.atoms.len(), 0.0);
    (store, report)
}

// ---------------------------------------------------------------------------
// Bootstrap regression
// ---------------------------------------------------------------------------

/// One term of a bootstrap target: a part of the cost decomposition together
/// with its conditioning set; `source == None` sums the part's cost nodes
/// empirically, otherwise the part contributes its value function.
#[derive(Debug, Clone)]
pub struct BootstrapPart {
    pub part: NodeSet,
    pub set: CondSet,
    pub source: Option<ValueRef>,
}

fn bootstrap_target(
    g: &Graph,
    parts: &[BootstrapPart],
    a: &Assignment,
) -> Result<f64, ValueStoreError> {
    let mut total = 0.0;
    for p in parts {
        match &p.source {
            None => {
                total += g.cost_set_of(&p.part).iter().map(|c| a.value(*c)).sum::<f64>();
            }
            Some(src) => {
                total += src.eval(a, "bootstrap part")?;
            }
        }
    }
    Ok(total)
}

fn check_bootstrap(
    g: &Graph,
    v: NodeId,
    set_v: &CondSet,
    parts: &[BootstrapPart],
) -> Result<(), ValueStoreError> {
    let as_pairs: Vec<(NodeSet, CondSet)> =
        parts.iter().map(|p| (p.part.clone(), p.set.clone())).collect();
    match validate_bootstrap(g, v, set_v, &as_pairs) {
        Ok(true) => Ok(()),
        Ok(false) => Err(ValueStoreError::BootstrapInvalid(
            AnalysisError::DecompositionInvalid,
        )),
        Err(e) => Err(ValueStoreError::BootstrapInvalid(e)),
    }
}

/// Regress the value of `set_v` toward the bootstrap target built from the
/// parts' value functions instead of the raw return.
pub fn fit_bootstrap(
    g: &Graph,
    inputs: &InputValues,
    v: NodeId,
    set_v: &CondSet,
    parts: &[BootstrapPart],
    n: usize,
    seed: u64,
) -> Result<(LearnedValueFn, TrainReport), ValueStoreError> {
    check_bootstrap(g, v, set_v, parts)?;
    let mut store = LearnedValueFn::new(set_v.clone(), None, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loss = 0.0;
    for _ in 0..n {
        let a = g.forward_sample(inputs, &mut rng)?;
        let y = bootstrap_target(g, parts, &a)?;
        let key = a.key_of(&store.key_set);
        store.update_mean(key, y);
        let err = store.predict(&a) - y;
        loss = err * err;
    }
    let report = report_from(&store, n, loss);
    Ok((store, report))
}

/// Bootstrap regression under full-enumeration weighting.
pub fn fit_bootstrap_weighted(
    g: &Graph,
    table: &SupportTable,
    v: NodeId,
    set_v: &CondSet,
    parts: &[BootstrapPart],
) -> Result<(LearnedValueFn, TrainReport), ValueStoreError> {
    check_bootstrap(g, v, set_v, parts)?;
    let mut store = LearnedValueFn::new(set_v.clone(), None, 0);
    for atom in &table.atoms {
        let y = bootstrap_target(g, parts, &atom.assignment)?;
        let key = atom.assignment.key_of(&store.key_set);
        store.update_mean_weighted(key, y, atom.prob);
    }
    let report = report_from(&store, table.atoms.len(), 0.0);
    Ok((store, report))
}

// ---------------------------------------------------------------------------
// Gradient-critic fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMode {
    /// Match the critic value only (alpha=1, beta=0).
    ValueOnly,
    /// Match the surrogate-loss gradient only (alpha=0, beta=1).
    GradOnly,
    /// Weighted combination of both losses.
    Sobolev { alpha: f64, beta: f64 },
}

const POLY_LR: f64 = 1e-2;
const PLATEAU_BLOCK: usize = 4000;
const LR_DECAY: f64 = 0.1;
const MIN_LR: f64 = 1e-5;
/// A block must beat the previous one by this margin or it counts toward a
/// plateau; two consecutive plateau blocks trigger the decay. Block losses
/// are stochastic, so a single flat block is not evidence.
const PLATEAU_MARGIN: f64 = 0.995;

/// Fit a per-key polynomial critic in the anchor node `v` so that its value
/// and/or derivative matches the sampled cost-to-go and surrogate gradient.
/// Value-involving modes require a Markov conditioning set, and the anchor
/// must keep conditional spread given the rest of the set (training on a
/// deterministic slice would fit a different graph).
pub fn fit_gradient_critic(
    g: &Graph,
    inputs: &InputValues,
    v: NodeId,
    cond: &CondSet,
    mode: FitMode,
    degree: usize,
    n: usize,
    seed: u64,
) -> Result<(LearnedValueFn, TrainReport), ValueStoreError> {
    if matches!(mode, FitMode::ValueOnly | FitMode::Sobolev { .. }) && !is_markov(g, cond, v) {
        return Err(ValueStoreError::NotMarkov);
    }
    let mut store = LearnedValueFn::new(cond.clone(), Some(v), degree);

    // A deterministic slice: if the rest of the set already determines the
    // anchor (the deterministic-policy situation), every conditional is
    // degenerate and the fit would describe a different graph.
    if g.deterministically_computable(v, &store.key_set) {
        return Err(ValueStoreError::AnchorDegenerate);
    }

    // Anchor-variance validation on a deterministic pre-pass.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut spread: HashMap<Vec<u64>, (f64, f64, u32)> = HashMap::new();
        for _ in 0..n.min(2048) {
            let a = g.forward_sample(inputs, &mut rng)?;
            let key = a.key_of(&store.key_set);
            let x = a.value(v);
            let e = spread.entry(key).or_insert((x, x, 0));
            e.0 = e.0.min(x);
            e.1 = e.1.max(x);
            e.2 += 1;
        }
        if spread.values().any(|(lo, hi, cnt)| *cnt >= 8 && (hi - lo).abs() < 1e-9) {
            return Err(ValueStoreError::AnchorDegenerate);
        }
    }

    let (alpha, beta) = match mode {
        FitMode::ValueOnly => (1.0, 0.0),
        FitMode::GradOnly => (0.0, 1.0),
        FitMode::Sobolev { alpha, beta } => (alpha, beta),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lr = POLY_LR;
    let mut block_loss = 0.0;
    let mut prev_block_loss = f64::INFINITY;
    let mut flat_blocks = 0u32;
    let mut last_loss = 0.0;
    for i in 0..n {
        let a = g.forward_sample(inputs, &mut rng)?;
        let value_target = g.cost_to_go(v, &a);
        let grad_target = if beta != 0.0 {
            let mut t = record(g, &a)?;
            let ls = node_rooted_surrogate_slot(g, &a, &mut t, v, cond);
            backward(&t, ls).node(&t, v)
        } else {
            0.0
        };
        let x = a.value(v);
        let key = a.key_of(&store.key_set);
        let cell = store.cells.entry(key).or_insert_with(|| Cell {
            params: vec![0.0; degree + 1],
            ..Cell::default()
        });
        cell.count += 1;
        let pred_v = poly_eval(&cell.params, x);
        let pred_g = poly_deriv_eval(&cell.params, x);
        let err_v = pred_v - value_target;
        let err_g = pred_g - grad_target;
        let mut xp = 1.0;
        for j in 0..=degree {
            let dv = err_v * xp;
            let dg = if j >= 1 {
                err_g * (j as f64) * x.powi(j as i32 - 1)
            } else {
                0.0
            };
            cell.params[j] -= lr * (alpha * dv + beta * dg);
            xp *= x;
        }
        last_loss = alpha * err_v * err_v + beta * err_g * err_g;
        cell.last_residual = if beta > 0.0 { err_g } else { err_v };
        block_loss += last_loss;
        if (i + 1) % PLATEAU_BLOCK == 0 {
            if block_loss >= PLATEAU_MARGIN * prev_block_loss {
                flat_blocks += 1;
            } else {
                flat_blocks = 0;
            }
            if flat_blocks >= 2 && lr > MIN_LR {
                lr = (lr * LR_DECAY).max(MIN_LR);
                flat_blocks = 0;
            }
            prev_block_loss = block_loss;
            block_loss = 0.0;
        }
    }
    let report = report_from(&store, n, last_loss);
    Ok((store, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::graph::GraphBuilder;
    use crate::oracle::{enumerate_support, exact_value, EnumerateOpts};

    fn coin() -> (Graph, InputValues) {
        let mut b = GraphBuilder::new();
        let t = b.input("t");
        let z = b.categorical("z", &[t], vec![Expr::constant(0.0), Expr::arg(0)]);
        b.cost(
            "l",
            &[z],
            Expr::select(Expr::arg(0), vec![Expr::constant(0.4), Expr::constant(2.1)]),
        );
        let g = b.build().unwrap();
        let t = g.by_name("t").unwrap();
        (g, vec![(t, 0.3)])
    }

    #[test]
    fn identical_stream_fits_the_observed_return() {
        let (g, inputs) = coin();
        let z = g.by_name("z").unwrap();
        // Conditioning on z: every sample with the same key carries the same
        // return, so the mean is that return.
        let (store, report) =
            fit_on_return(&g, &inputs, &CondSet::of(&[z]), TargetSpec::TotalCost, 500, 1).unwrap();
        assert!(report.max_key_residual < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = g.forward_sample(&inputs, &mut rng).unwrap();
        let expect = if a.value(z) == 0.0 { 0.4 } else { 2.1 };
        assert!((store.predict(&a) - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_set_converges_to_expected_loss() {
        let (g, inputs) = coin();
        let (store, _) =
            fit_on_return(&g, &inputs, &CondSet::empty(), TargetSpec::TotalCost, 60_000, 2)
                .unwrap();
        let table = enumerate_support(&g, &inputs, EnumerateOpts::default()).unwrap();
        let exact = crate::oracle::exact_expectation(&table, |a| g.total_cost(a));
        let stats = store.cell_stats();
        assert_eq!(stats.len(), 1);
        let (_, mean, count, stderr) = &stats[0];
        assert_eq!(*count, 60_000);
        assert!((mean - exact).abs() <= 5.0 * stderr, "{mean} vs {exact}");
    }

    #[test]
    fn weighted_fit_equals_exact_value() {
        let (g, inputs) = coin();
        let z = g.by_name("z").unwrap();
        let table = enumerate_support(&g, &inputs, EnumerateOpts::default()).unwrap();
        let set = CondSet::of(&[z]);
        let (store, _) = fit_on_return_weighted(&g, &table, &set, TargetSpec::TotalCost);
        let exact = exact_value(&g, &table, &set, TargetSpec::TotalCost);
        for atom in &table.atoms {
            let got = store.predict(&atom.assignment);
            let want = exact.eval(&atom.assignment).unwrap();
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn miss_counter_counts_each_unseen_key_exactly_once_per_call() {
        let (g, inputs) = coin();
        let z = g.by_name("z").unwrap();
        let store = LearnedValueFn::new(CondSet::of(&[z]), None, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 1..=5u64 {
            let a = g.forward_sample(&inputs, &mut rng).unwrap();
            assert_eq!(store.predict(&a), 0.0);
            assert_eq!(store.misses(), i);
        }
    }

    #[test]
    fn zero_cost_graph_fits_zero_table() {
        let mut b = GraphBuilder::new();
        let z = b.categorical("z", &[], vec![Expr::constant(0.0), Expr::constant(0.0)]);
        let g = b.build().unwrap();
        let (store, _) =
            fit_on_return(&g, &vec![], &CondSet::of(&[z]), TargetSpec::TotalCost, 100, 3).unwrap();
        for (_, mean, _, _) in store.cell_stats() {
            assert_eq!(mean, 0.0);
        }
    }
}
