//! Scalar reverse-mode differentiation over one recorded forward pass.
//!
//! A tape captures every deterministic computation of an assignment,
//! including the log-probability expressions of stochastic nodes as
//! differentiable sub-traces. Sampled values and input values are leaves; the
//! gradient of a sampling operation is zero by construction, so adjoints
//! never flow from a stochastic node's value into its distribution
//! parameters.

use std::collections::HashSet;

use thiserror::Error;

use crate::expr::{select_index, Expr};
use crate::graph::{Assignment, DistFamily, Graph, NodeId, NodeKind};

/// Index of a record on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot(pub u32);

impl Slot {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy)]
enum Rec {
    Leaf,
    Const,
    Add(Slot, Slot),
    Mul(Slot, Slot),
    Neg(Slot),
    Recip(Slot),
    Exp(Slot),
    Log(Slot),
    Tanh(Slot),
    Powi(Slot, i32),
    /// Identity in value, zero in gradient; the source value is captured
    /// at push time.
    StopGrad,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TapeError {
    #[error("numerical domain error on tape: {op} of {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("node `{0}` is not materialized on this tape")]
    NotOnTape(String),
    #[error("separator member list is empty")]
    EmptySeparator,
}

/// Evaluation trace of the elementary ops for one assignment.
#[derive(Debug, Clone)]
pub struct Tape {
    recs: Vec<Rec>,
    vals: Vec<f64>,
    node_slot: Vec<Option<Slot>>,
    logp_slot: Vec<Option<Slot>>,
}

impl Tape {
    /// A tape with no graph attached, for free-standing expressions.
    pub fn empty_tape() -> Tape {
        Tape {
            recs: Vec::new(),
            vals: Vec::new(),
            node_slot: Vec::new(),
            logp_slot: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.recs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recs.is_empty()
    }

    pub fn value(&self, s: Slot) -> f64 {
        self.vals[s.idx()]
    }

    /// Slot holding the value of a graph node.
    pub fn node(&self, v: NodeId) -> Slot {
        self.node_slot[v.idx()].expect("node recorded on tape")
    }

    /// Slot holding the log-probability of a stochastic node's draw.
    pub fn logp(&self, v: NodeId) -> Option<Slot> {
        self.logp_slot[v.idx()]
    }

    fn push(&mut self, r: Rec, val: f64) -> Result<Slot, TapeError> {
        if !val.is_finite() {
            return Err(TapeError::Domain { op: "non-finite result", value: val });
        }
        let s = Slot(self.recs.len() as u32);
        self.recs.push(r);
        self.vals.push(val);
        Ok(s)
    }

    pub fn leaf(&mut self, val: f64) -> Slot {
        self.push(Rec::Leaf, val).expect("finite leaf")
    }

    pub fn constant(&mut self, val: f64) -> Slot {
        self.push(Rec::Const, val).expect("finite constant")
    }

    pub fn add(&mut self, a: Slot, b: Slot) -> Slot {
        let v = self.vals[a.idx()] + self.vals[b.idx()];
        self.push(Rec::Add(a, b), v).expect("finite add")
    }

    pub fn mul(&mut self, a: Slot, b: Slot) -> Slot {
        let v = self.vals[a.idx()] * self.vals[b.idx()];
        self.push(Rec::Mul(a, b), v).expect("finite mul")
    }

    pub fn neg(&mut self, a: Slot) -> Slot {
        let v = -self.vals[a.idx()];
        self.push(Rec::Neg(a), v).expect("finite neg")
    }

    pub fn stop_grad(&mut self, a: Slot) -> Slot {
        let v = self.vals[a.idx()];
        self.push(Rec::StopGrad, v).expect("finite stop-grad")
    }

    pub fn exp_slot(&mut self, a: Slot) -> Result<Slot, TapeError> {
        let v = self.vals[a.idx()].exp();
        self.push(Rec::Exp(a), v)
    }

    pub fn sum(&mut self, slots: &[Slot]) -> Slot {
        match slots.len() {
            0 => self.constant(0.0),
            1 => slots[0],
            _ => {
                let mut acc = self.add(slots[0], slots[1]);
                for s in &slots[2..] {
                    acc = self.add(acc, *s);
                }
                acc
            }
        }
    }

    /// Splice an expression onto the tape; `args[i]` supplies `Arg(i)`.
    pub fn eval_expr(&mut self, e: &Expr, args: &[Slot]) -> Result<Slot, TapeError> {
        Ok(match e {
            Expr::Const(c) => self.constant(*c),
            Expr::Arg(i) => args[*i],
            Expr::Add(terms) => {
                let slots: Result<Vec<Slot>, TapeError> =
                    terms.iter().map(|t| self.eval_expr(t, args)).collect();
                self.sum(&slots?)
            }
            Expr::Mul(factors) => {
                let mut acc = self.eval_expr(&factors[0], args)?;
                for f in &factors[1..] {
                    let s = self.eval_expr(f, args)?;
                    acc = self.mul(acc, s);
                }
                acc
            }
            Expr::Neg(a) => {
                let s = self.eval_expr(a, args)?;
                self.neg(s)
            }
            Expr::Recip(a) => {
                let s = self.eval_expr(a, args)?;
                let x = self.vals[s.idx()];
                if x == 0.0 {
                    return Err(TapeError::Domain { op: "recip", value: x });
                }
                self.push(Rec::Recip(s), 1.0 / x)?
            }
            Expr::Exp(a) => {
                let s = self.eval_expr(a, args)?;
                let v = self.vals[s.idx()].exp();
                self.push(Rec::Exp(s), v)?
            }
            Expr::Log(a) => {
                let s = self.eval_expr(a, args)?;
                let x = self.vals[s.idx()];
                if x <= 0.0 {
                    return Err(TapeError::Domain { op: "log", value: x });
                }
                self.push(Rec::Log(s), x.ln())?
            }
            Expr::Tanh(a) => {
                let s = self.eval_expr(a, args)?;
                let v = self.vals[s.idx()].tanh();
                self.push(Rec::Tanh(s), v)?
            }
            Expr::Powi(a, k) => {
                let s = self.eval_expr(a, args)?;
                let v = self.vals[s.idx()].powi(*k);
                self.push(Rec::Powi(s, *k), v)?
            }
            Expr::Affine { bias, terms } => {
                let mut acc = self.constant(*bias);
                for (c, t) in terms {
                    let s = self.eval_expr(t, args)?;
                    let cs = self.constant(*c);
                    let prod = self.mul(cs, s);
                    acc = self.add(acc, prod);
                }
                acc
            }
            Expr::Select { index, branches } => {
                let is = self.eval_expr(index, args)?;
                let k = select_index(self.vals[is.idx()], branches.len())
                    .map_err(|_| TapeError::Domain { op: "select", value: self.vals[is.idx()] })?;
                // Only the chosen branch is materialized; the selector carries
                // no gradient.
                self.eval_expr(&branches[k], args)?
            }
        })
    }

    /// Log-probability of a categorical draw as a differentiable function of
    /// the logit slots. The max-shift inside logsumexp is a constant, which
    /// leaves the gradient untouched.
    pub fn categorical_logp(&mut self, logits: &[Slot], outcome: usize) -> Result<Slot, TapeError> {
        let m = logits
            .iter()
            .map(|s| self.vals[s.idx()])
            .fold(f64::NEG_INFINITY, f64::max);
        let mc = self.constant(-m);
        let mut exps = Vec::with_capacity(logits.len());
        for &l in logits {
            let shifted = self.add(l, mc);
            let v = self.vals[shifted.idx()].exp();
            exps.push(self.push(Rec::Exp(shifted), v)?);
        }
        let total = self.sum(&exps);
        let x = self.vals[total.idx()];
        let log_total = self.push(Rec::Log(total), x.ln())?;
        let mpos = self.constant(m);
        let lse = self.add(log_total, mpos);
        let neg_lse = self.neg(lse);
        Ok(self.add(logits[outcome], neg_lse))
    }

    /// Gaussian log-density of `x` with differentiable mean and log-std.
    pub fn gaussian_logp(&mut self, x: Slot, mean: Slot, logstd: Slot) -> Result<Slot, TapeError> {
        let sv = self.vals[logstd.idx()].exp();
        let sigma = self.push(Rec::Exp(logstd), sv)?;
        let inv_sigma = self.push(Rec::Recip(sigma), 1.0 / sv)?;
        let neg_mean = self.neg(mean);
        let centered = self.add(x, neg_mean);
        let z = self.mul(centered, inv_sigma);
        let z2 = self.mul(z, z);
        let half = self.constant(-0.5);
        let quad = self.mul(half, z2);
        let neg_logstd = self.neg(logstd);
        let c = self.constant(-0.5 * (2.0 * std::f64::consts::PI).ln());
        let t = self.add(quad, neg_logstd);
        Ok(self.add(t, c))
    }
}

/// Total derivatives of one target with respect to every tape slot; nodes off
/// every path to the target have gradient zero.
#[derive(Debug, Clone)]
pub struct GradMap {
    adjoints: Vec<f64>,
}

impl GradMap {
    pub fn at(&self, s: Slot) -> f64 {
        self.adjoints[s.idx()]
    }

    pub fn node(&self, t: &Tape, v: NodeId) -> f64 {
        self.at(t.node(v))
    }
}

/// Capture all deterministic computations of `a` on a fresh tape, including
/// the log-probability sub-trace of every stochastic node. Input and
/// stochastic values are leaves.
pub fn record(g: &Graph, a: &Assignment) -> Result<Tape, TapeError> {
    let n = g.node_count();
    let mut t = Tape {
        recs: Vec::new(),
        vals: Vec::new(),
        node_slot: vec![None; n],
        logp_slot: vec![None; n],
    };
    for &v in g.order() {
        let parent_slots: Vec<Slot> = g.parents(v).iter().map(|p| t.node(*p)).collect();
        let slot = match g.kind(v) {
            NodeKind::Input => t.leaf(a.value(v)),
            NodeKind::Deterministic(body) | NodeKind::Cost(body) => {
                t.eval_expr(body, &parent_slots)?
            }
            NodeKind::Stochastic(fam) => {
                let value_slot = t.leaf(a.value(v));
                let logp = match fam {
                    DistFamily::Categorical { logits } => {
                        let logit_slots: Result<Vec<Slot>, TapeError> = logits
                            .iter()
                            .map(|l| t.eval_expr(l, &parent_slots))
                            .collect();
                        let outcome = a.value(v).round() as usize;
                        t.categorical_logp(&logit_slots?, outcome)?
                    }
                    DistFamily::Gaussian { mean, logstd } => {
                        let m = t.eval_expr(mean, &parent_slots)?;
                        let s = t.eval_expr(logstd, &parent_slots)?;
                        t.gaussian_logp(value_slot, m, s)?
                    }
                };
                t.logp_slot[v.idx()] = Some(logp);
                value_slot
            }
        };
        t.node_slot[v.idx()] = Some(slot);
    }
    Ok(t)
}

fn sweep(t: &Tape, seeds: &[(Slot, f64)], holds: &HashSet<Slot>) -> GradMap {
    let mut adj = vec![0.0; t.len()];
    for (s, g) in seeds {
        adj[s.idx()] += g;
    }
    for i in (0..t.len()).rev() {
        let a = adj[i];
        if a == 0.0 || holds.contains(&Slot(i as u32)) {
            continue;
        }
        match t.recs[i] {
            Rec::Leaf | Rec::Const | Rec::StopGrad => {}
            Rec::Add(x, y) => {
                adj[x.idx()] += a;
                adj[y.idx()] += a;
            }
            Rec::Mul(x, y) => {
                adj[x.idx()] += a * t.vals[y.idx()];
                adj[y.idx()] += a * t.vals[x.idx()];
            }
            Rec::Neg(x) => adj[x.idx()] -= a,
            Rec::Recip(x) => {
                let xv = t.vals[x.idx()];
                adj[x.idx()] += -a / (xv * xv);
            }
            Rec::Exp(x) => adj[x.idx()] += a * t.vals[i],
            Rec::Log(x) => adj[x.idx()] += a / t.vals[x.idx()],
            Rec::Tanh(x) => {
                let y = t.vals[i];
                adj[x.idx()] += a * (1.0 - y * y);
            }
            Rec::Powi(x, k) => {
                let xv = t.vals[x.idx()];
                adj[x.idx()] += a * (k as f64) * xv.powi(k - 1);
            }
        }
    }
    GradMap { adjoints: adj }
}

/// Total derivatives of `target` with respect to every slot.
pub fn backward(t: &Tape, target: Slot) -> GradMap {
    sweep(t, &[(target, 1.0)], &HashSet::new())
}

/// Same as [`backward`] but every slot in `holds` is treated as a constant:
/// its accumulated adjoint is reported but not propagated to its inputs.
pub fn backward_with_holds(t: &Tape, target: Slot, holds: &HashSet<Slot>) -> GradMap {
    sweep(t, &[(target, 1.0)], holds)
}

/// Chain-rule regrouped at a separator: sum over members of
/// `injected_i * d(member_i)/d(u)` where each member's total derivative holds
/// the earlier members constant. Members must be listed in topological order
/// (any order works for unordered separators).
pub fn horizon_backprop(
    t: &Tape,
    u: Slot,
    members: &[Slot],
    injected: &[f64],
) -> Result<f64, TapeError> {
    if members.is_empty() {
        return Err(TapeError::EmptySeparator);
    }
    assert_eq!(members.len(), injected.len());
    let mut total = 0.0;
    let mut holds: HashSet<Slot> = HashSet::new();
    for (i, &m) in members.iter().enumerate() {
        let grads = backward_with_holds(t, m, &holds);
        total += injected[i] * grads.at(u);
        holds.insert(m);
    }
    Ok(total)
}

/// Diagnostic variant without hold-sets. For ordered separators this
/// double-counts paths between members; it exists so the discrepancy can be
/// measured.
pub fn horizon_backprop_unheld(
    t: &Tape,
    u: Slot,
    members: &[Slot],
    injected: &[f64],
) -> Result<f64, TapeError> {
    if members.is_empty() {
        return Err(TapeError::EmptySeparator);
    }
    let mut total = 0.0;
    for (i, &m) in members.iter().enumerate() {
        let grads = backward(t, m);
        total += injected[i] * grads.at(u);
    }
    Ok(total)
}

/// Backward pass from `root` in which each separator member's accumulated
/// adjoint is replaced by its injected value at the moment it is processed.
/// Reading the result at `u` gives the same sum as [`horizon_backprop`]; the
/// replacement discards exactly the flows between members that the hold-sets
/// suppress. The two implementations cross-check each other in tests.
pub fn backward_with_replacements(
    t: &Tape,
    root: Slot,
    replacements: &[(Slot, f64)],
) -> GradMap {
    let mut adj = vec![0.0; t.len()];
    adj[root.idx()] = 1.0;
    for i in (0..t.len()).rev() {
        if let Some((_, g)) = replacements.iter().find(|(s, _)| s.idx() == i) {
            adj[i] = *g;
        }
        let a = adj[i];
        if a == 0.0 {
            continue;
        }
        match t.recs[i] {
            Rec::Leaf | Rec::Const | Rec::StopGrad => {}
            Rec::Add(x, y) => {
                adj[x.idx()] += a;
                adj[y.idx()] += a;
            }
            Rec::Mul(x, y) => {
                adj[x.idx()] += a * t.vals[y.idx()];
                adj[y.idx()] += a * t.vals[x.idx()];
            }
            Rec::Neg(x) => adj[x.idx()] -= a,
            Rec::Recip(x) => {
                let xv = t.vals[x.idx()];
                adj[x.idx()] += -a / (xv * xv);
            }
            Rec::Exp(x) => adj[x.idx()] += a * t.vals[i],
            Rec::Log(x) => adj[x.idx()] += a / t.vals[x.idx()],
            Rec::Tanh(x) => {
                let y = t.vals[i];
                adj[x.idx()] += a * (1.0 - y * y);
            }
            Rec::Powi(x, k) => {
                let xv = t.vals[x.idx()];
                adj[x.idx()] += a * (k as f64) * xv.powi(k - 1);
            }
        }
    }
    GradMap { adjoints: adj }
}

/// Central finite difference of a scalar function, the independent oracle
/// for reverse-mode results.
pub fn finite_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
