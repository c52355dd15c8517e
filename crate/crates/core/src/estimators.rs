//! Construction and execution of gradient estimators: surrogate losses,
//! score-function and pathwise estimators, critic/baseline plug-ins, partial
//! averages and k-step / lambda returns, optimal baselines, gradient-critic
//! horizon estimators, and the debiased combined estimator.
//!
//! Every estimator reduces to one recipe: sample (or enumerate) the working
//! graph, record a tape, assemble a differentiable per-sample scalar whose
//! gradient at the designated input is the estimate, and run one reverse
//! sweep. Set-validity checks run at compile time against the original graph
//! and name the failing node and check.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{
    ancestors_closure, det_closure, is_congruent, is_markov, is_valid_baseline_set,
    is_valid_critic_set, separator_verdict, CondSet, SeparatorVerdict,
};
use crate::autodiff::{backward, backward_with_replacements, record, Slot, Tape, TapeError};
use crate::expr::Expr;
use crate::graph::{
    build_graph, Assignment, DistFamily, Graph, InputValues, NodeDecl, NodeId, NodeKind, NodeSet,
    SampleError,
};
use crate::oracle::{
    enumerate_support, EnumerateOpts, ExprValueFn, GradCriticTable, OracleError, SupportTable,
    TableValueFn,
};
use crate::value_store::LearnedValueFn;

#[derive(Debug, Clone, Error)]
pub enum EstimatorError {
    #[error("invalid estimator spec at node `{node}`: {check}")]
    InvalidSpec { node: String, check: String },
    #[error("critic/baseline source has no key for node `{node}` at this sample")]
    MissingCriticKey { node: String },
    #[error("members do not form a separator for the requested node")]
    NotSeparator,
    #[error("not a recognized chain layout: {0}")]
    NotAChain(String),
    #[error("baseline set is not congruent with the critic set")]
    NotCongruent,
    #[error("node `{0}` does not admit the location-scale transform")]
    UnsupportedFamily(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("graph rewrite failed: {0}")]
    Rewrite(String),
}

// ---------------------------------------------------------------------------
// Sources
// ---------------------------------------------------------------------------

/// Where a critic/baseline value comes from at estimation time. Estimator
/// code is source-agnostic: exact oracle tables, symbolic conditional
/// expectations, and learned stores all evaluate per sample.
#[derive(Clone)]
pub enum ValueRef {
    Const(f64),
    Table(Arc<TableValueFn>),
    Expr(Arc<ExprValueFn>),
    Learned(Arc<LearnedValueFn>),
}

impl std::fmt::Debug for ValueRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValueRef::Const(c) => write!(f, "Const({c})"),
            ValueRef::Table(t) => write!(f, "Table({} keys)", t.keys()),
            ValueRef::Expr(_) => write!(f, "Expr"),
            ValueRef::Learned(_) => write!(f, "Learned"),
        }
    }
}

impl ValueRef {
    pub fn eval(&self, a: &Assignment, node: &str) -> Result<f64, EstimatorError> {
        let got = match self {
            ValueRef::Const(c) => Some(*c),
            ValueRef::Table(t) => t.eval(a),
            ValueRef::Expr(e) => e.eval(a),
            ValueRef::Learned(l) => Some(l.predict(a)),
        };
        got.ok_or_else(|| EstimatorError::MissingCriticKey { node: node.to_string() })
    }
}

/// Source of gradient-critic values g(set) used for separator injection.
#[derive(Clone)]
pub enum GradRef {
    Const(f64),
    Table(Arc<GradCriticTable>),
    /// Symbolic g directly.
    Expr(Arc<ExprValueFn>),
    /// Gradient of a symbolic critic in its anchor node.
    ExprGrad { q: Arc<ExprValueFn>, wrt: NodeId },
    /// Table over quantized member values (bucketed conditioning).
    Quantized(Arc<QuantizedGradTable>),
}

impl std::fmt::Debug for GradRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GradRef::Const(c) => write!(f, "Const({c})"),
            GradRef::Table(_) => write!(f, "Table"),
            GradRef::Expr(_) => write!(f, "Expr"),
            GradRef::ExprGrad { wrt, .. } => write!(f, "ExprGrad(d/d{})", wrt.0),
            GradRef::Quantized(_) => write!(f, "Quantized"),
        }
    }
}

impl GradRef {
    pub fn eval(&self, a: &Assignment, node: &str) -> Result<f64, EstimatorError> {
        let got = match self {
            GradRef::Const(c) => Some(*c),
            GradRef::Table(t) => t.table.eval(a),
            GradRef::Expr(e) => e.eval(a),
            GradRef::ExprGrad { q, wrt } => q.grad_in(&a.values, *wrt),
            GradRef::Quantized(t) => t.eval(a),
        };
        got.ok_or_else(|| EstimatorError::MissingCriticKey { node: node.to_string() })
    }
}

/// Conditional-mean table keyed by per-member bucketed values: each member
/// value is floored to a multiple of its bucket width (width 0 keys on the
/// exact bit pattern). Realizes critics conditioned on discretized
/// continuous quantities, such as distribution-parameter nodes.
#[derive(Debug, Clone)]
pub struct QuantizedGradTable {
    pub members: Vec<(NodeId, f64)>,
    pub map: std::collections::HashMap<Vec<i64>, f64>,
}

impl QuantizedGradTable {
    pub fn key_of(&self, a: &Assignment) -> Vec<i64> {
        self.members
            .iter()
            .map(|(v, width)| {
                let x = a.value(*v);
                if *width > 0.0 {
                    (x / width).floor() as i64
                } else {
                    x.to_bits() as i64
                }
            })
            .collect()
    }

    pub fn eval(&self, a: &Assignment) -> Option<f64> {
        self.map.get(&self.key_of(a)).copied()
    }

    /// Bucket-conditional mean of a per-atom scalar over an enumerated
    /// support.
    pub fn build<F: FnMut(&Assignment) -> f64>(
        members: Vec<(NodeId, f64)>,
        table: &SupportTable,
        mut scalar: F,
    ) -> QuantizedGradTable {
        let mut out = QuantizedGradTable {
            members,
            map: std::collections::HashMap::new(),
        };
        let mut acc: std::collections::HashMap<Vec<i64>, (f64, f64)> =
            std::collections::HashMap::new();
        for atom in &table.atoms {
            let key = out.key_of(&atom.assignment);
            let e = acc.entry(key).or_insert((0.0, 0.0));
            e.0 += atom.prob * scalar(&atom.assignment);
            e.1 += atom.prob;
        }
        out.map = acc.into_iter().map(|(k, (num, den))| (k, num / den)).collect();
        out
    }
}

/// Differentiable critic approximation for the debiased estimator: a
/// symbolic expression over node values, or a per-key polynomial store whose
/// anchor is the node itself.
#[derive(Clone, Debug)]
pub enum QHatRef {
    Expr(Arc<ExprValueFn>),
    Learned(Arc<LearnedValueFn>),
}

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum CriticChoice {
    /// Use the sampled cost-to-go of the node.
    Empirical,
    Value {
        set: CondSet,
        source: ValueRef,
    },
    /// Empirical costs plus value functions of downstream parts, conditioned
    /// on `cond`.
    PartialAverage {
        cond: CondSet,
        empirical_costs: NodeSet,
        parts: Vec<(NodeSet, CondSet, ValueRef)>,
    },
    /// Convex combination of critics (weights must sum to one).
    Convex(Vec<(f64, CriticChoice)>),
}

#[derive(Clone, Debug)]
pub enum BaselineChoice {
    None,
    Value { set: CondSet, source: ValueRef },
    /// Variance-minimizing baseline (exact-oracle tables only); the set must
    /// be congruent with the critic set.
    Optimal { set: CondSet, source: ValueRef },
}

/// Replaces a node's score term by an injected gradient-critic at one of the
/// distribution-parameter nodes feeding it.
#[derive(Clone, Debug)]
pub struct ParamCriticSpec {
    pub param: NodeId,
    pub set: CondSet,
    pub source: GradRef,
}

#[derive(Clone, Debug)]
pub struct NodeSpec {
    pub node: NodeId,
    pub critic: CriticChoice,
    pub baseline: BaselineChoice,
    /// Combined estimator: score term on the critic residual plus the
    /// reparameterized gradient of the critic approximation.
    pub debias: Option<QHatRef>,
    /// Rewrite the node as a deterministic location-scale transform of fresh
    /// standard noise before estimating.
    pub reparameterized: bool,
    pub param_critic: Option<ParamCriticSpec>,
}

impl NodeSpec {
    pub fn empirical(node: NodeId) -> NodeSpec {
        NodeSpec {
            node,
            critic: CriticChoice::Empirical,
            baseline: BaselineChoice::None,
            debias: None,
            reparameterized: false,
            param_critic: None,
        }
    }

    pub fn reparameterized(node: NodeId) -> NodeSpec {
        NodeSpec {
            reparameterized: true,
            ..NodeSpec::empirical(node)
        }
    }

    pub fn with_critic(mut self, critic: CriticChoice) -> NodeSpec {
        self.critic = critic;
        self
    }

    pub fn with_baseline(mut self, baseline: BaselineChoice) -> NodeSpec {
        self.baseline = baseline;
        self
    }

    pub fn with_debias(mut self, qhat: QHatRef) -> NodeSpec {
        self.debias = Some(qhat);
        self
    }

    pub fn with_param_critic(mut self, pc: ParamCriticSpec) -> NodeSpec {
        self.param_critic = Some(pc);
        self
    }
}

/// Gradient-critic injection over a separator of the (reparameterized)
/// working graph: the backward pass replaces each member's adjoint by the
/// sourced value.
#[derive(Clone, Debug)]
pub struct InjectionSpec {
    pub at: NodeId,
    pub separator: Vec<NodeId>,
    pub sources: Vec<GradRef>,
}

/// Per-stochastic-node estimator choices; unmentioned nodes default to the
/// empirical critic with no baseline.
#[derive(Clone, Debug, Default)]
pub struct EstimatorSpec {
    pub nodes: Vec<NodeSpec>,
    pub injection: Option<InjectionSpec>,
}

impl EstimatorSpec {
    pub fn empirical() -> EstimatorSpec {
        EstimatorSpec::default()
    }

    pub fn of(nodes: Vec<NodeSpec>) -> EstimatorSpec {
        EstimatorSpec { nodes, injection: None }
    }

    pub fn uses_reparameterization(&self) -> bool {
        self.nodes.iter().any(|n| n.reparameterized) || self.injection.is_some()
    }
}

/// Monte-Carlo estimate with its standard error. `stderr` is zero (and
/// flagged undefined) when fewer than two samples back it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl GradientEstimate {
    pub fn stderr_defined(&self) -> bool {
        self.n >= 2
    }
}

// ---------------------------------------------------------------------------
// Reparameterization
// ---------------------------------------------------------------------------

/// Rewrite a Gaussian node as `mean + exp(logstd) * eps` with a fresh
/// standard-normal root `eps`. Everything else, including node names, is
/// unchanged; node ids may shift, so callers re-resolve by name.
pub fn reparameterize(g: &Graph, v: NodeId) -> Result<Graph, EstimatorError> {
    let (mean, logstd) = match g.kind(v) {
        NodeKind::Stochastic(DistFamily::Gaussian { mean, logstd }) => {
            (mean.clone(), logstd.clone())
        }
        NodeKind::Stochastic(_) => {
            return Err(EstimatorError::UnsupportedFamily(g.name(v).to_string()))
        }
        _ => {
            return Err(EstimatorError::InvalidSpec {
                node: g.name(v).to_string(),
                check: "reparameterize target must be a stochastic node".into(),
            })
        }
    };
    let eps_name = format!("{}_eps", g.name(v));
    let arity = g.parents(v).len();
    // value = mean(parents) + exp(logstd(parents)) * eps, eps appended last.
    let body = Expr::add(vec![
        mean,
        Expr::mul(vec![Expr::exp(logstd), Expr::Arg(arity)]),
    ]);
    let mut decls = Vec::new();
    for u in g.ids() {
        if u == v {
            decls.push(NodeDecl {
                name: eps_name.clone(),
                kind: NodeKind::Stochastic(DistFamily::Gaussian {
                    mean: Expr::Const(0.0),
                    logstd: Expr::Const(0.0),
                }),
                parents: vec![],
            });
            let mut parents: Vec<String> =
                g.parents(u).iter().map(|p| g.name(*p).to_string()).collect();
            parents.push(eps_name.clone());
            decls.push(NodeDecl {
                name: g.name(u).to_string(),
                kind: NodeKind::Deterministic(body.clone()),
                parents,
            });
        } else {
            let info = g.info(u);
            decls.push(NodeDecl {
                name: info.name.clone(),
                kind: info.kind.clone(),
                parents: info.parents.iter().map(|p| g.name(*p).to_string()).collect(),
            });
        }
    }
    build_graph(decls).map_err(|e| EstimatorError::Rewrite(e.to_string()))
}

// ---------------------------------------------------------------------------
// Compilation
// ---------------------------------------------------------------------------

enum RowMode {
    Score {
        critic: CriticChoice,
        baseline: BaselineChoice,
    },
    Debias {
        qhat: QHatRef,
        critic: CriticChoice,
        baseline: BaselineChoice,
    },
    ParamCritic {
        param: NodeId,
        source: GradRef,
    },
}

struct Row {
    /// Node in the working graph (stochastic there unless reparameterized).
    node: NodeId,
    /// The same node in the original graph, where sources and sets live;
    /// absent for noise roots introduced by a rewrite.
    node_orig: Option<NodeId>,
    mode: RowMode,
}

/// A validated estimator bound to its working graph. All sources and sets in
/// the spec are expressed against the original graph; rewrites may shift
/// node indices, so sources are evaluated through an original-index view of
/// each working-graph sample.
pub struct CompiledEstimator {
    pub orig: Graph,
    pub work: Graph,
    theta: NodeId,
    rows: Vec<Row>,
    injection: Option<CompiledInjection>,
    /// original node index -> working node index
    orig_to_work: Vec<usize>,
    /// Nodes whose value is a pure function of the inputs; their parent
    /// slots stay live inside debias transforms.
    input_closure: NodeSet,
}

struct CompiledInjection {
    at: NodeId,
    members: Vec<NodeId>,
    sources: Vec<GradRef>,
}

fn invalid(g: &Graph, node: NodeId, check: impl Into<String>) -> EstimatorError {
    EstimatorError::InvalidSpec {
        node: g.name(node).to_string(),
        check: check.into(),
    }
}

fn validate_critic(g: &Graph, v: NodeId, critic: &CriticChoice) -> Result<(), EstimatorError> {
    match critic {
        CriticChoice::Empirical => Ok(()),
        CriticChoice::Value { set, .. } => {
            if !is_valid_critic_set(g, v, set) {
                return Err(invalid(
                    g,
                    v,
                    format!(
                        "critic set {{{}}} fails the critic validity check (membership + conditional independence of the score and the cost-to-go)",
                        g.names(&set.members).join(",")
                    ),
                ));
            }
            Ok(())
        }
        CriticChoice::PartialAverage { cond, empirical_costs, parts } => {
            if !is_valid_critic_set(g, v, cond) {
                return Err(invalid(g, v, "partial-average conditioning set is not a valid critic set"));
            }
            let closure = det_closure(g, cond);
            if !empirical_costs.is_subset(&closure) {
                return Err(invalid(g, v, "empirical costs of partial average are not determined by the conditioning set"));
            }
            // The empirical costs plus the part cost sets must partition the
            // cost-to-go without double counting.
            let mut seen = empirical_costs.clone();
            for (part, set, _) in parts {
                let costs = g.cost_set_of(part);
                if !seen.is_disjoint(&costs) {
                    return Err(invalid(g, v, "partial average double-counts a cost"));
                }
                seen.extend(costs);
                if !crate::analysis::is_markov_for_costs(g, set, &g.cost_set_of(part)) {
                    return Err(invalid(g, v, "partial-average part set is not Markov for its costs"));
                }
                if !set.members.is_subset(&cond.members) {
                    return Err(invalid(g, v, "partial-average part set must be inside the conditioning set"));
                }
                if !cond.members.is_subset(&ancestors_closure(g, set)) {
                    return Err(invalid(g, v, "partial-average conditioning set escapes the part's ancestor closure"));
                }
            }
            if seen != g.cost_to_go_set(v) {
                return Err(invalid(g, v, "partial average does not cover the cost-to-go"));
            }
            Ok(())
        }
        CriticChoice::Convex(entries) => {
            let total: f64 = entries.iter().map(|(w, _)| *w).sum();
            if entries.iter().any(|(w, _)| *w < -1e-12) || (total - 1.0).abs() > 1e-9 {
                return Err(invalid(g, v, "convex critic weights must be nonnegative and sum to one"));
            }
            for (_, c) in entries {
                validate_critic(g, v, c)?;
            }
            Ok(())
        }
    }
}

fn critic_set_of(critic: &CriticChoice) -> Option<&CondSet> {
    match critic {
        CriticChoice::Value { set, .. } => Some(set),
        CriticChoice::PartialAverage { cond, .. } => Some(cond),
        _ => None,
    }
}

fn validate_baseline(
    g: &Graph,
    v: NodeId,
    baseline: &BaselineChoice,
    critic: &CriticChoice,
) -> Result<(), EstimatorError> {
    match baseline {
        BaselineChoice::None => Ok(()),
        BaselineChoice::Value { set, .. } => {
            if !is_valid_baseline_set(g, v, set) {
                return Err(invalid(
                    g,
                    v,
                    format!(
                        "baseline set {{{}}} intersects the descendants of the node",
                        g.names(&set.members).join(",")
                    ),
                ));
            }
            Ok(())
        }
        BaselineChoice::Optimal { set, .. } => {
            if !is_valid_baseline_set(g, v, set) {
                return Err(invalid(g, v, "optimal-baseline set intersects the descendants of the node"));
            }
            match critic_set_of(critic) {
                Some(cset) if is_congruent(set, cset) => Ok(()),
                Some(_) => Err(EstimatorError::NotCongruent),
                None => Err(invalid(g, v, "optimal baseline requires an explicit critic set")),
            }
        }
    }
}

/// Validate a spec against the original graph and bind it to the working
/// graph (reparameterizing flagged nodes).
pub fn compile(
    g: &Graph,
    theta: NodeId,
    spec: &EstimatorSpec,
    checks_enabled: bool,
) -> Result<CompiledEstimator, EstimatorError> {
    // Validate on the original graph.
    let mut seen_nodes = NodeSet::new();
    for ns in &spec.nodes {
        let v = ns.node;
        if !seen_nodes.insert(v) {
            return Err(invalid(g, v, "node appears twice in the spec; terms would double"));
        }
        if !g.kind(v).is_stochastic() {
            return Err(invalid(g, v, "estimator rows must target stochastic nodes"));
        }
        if checks_enabled {
            validate_critic(g, v, &ns.critic)?;
            validate_baseline(g, v, &ns.baseline, &ns.critic)?;
        }
        if ns.debias.is_some() {
            if !matches!(g.kind(v), NodeKind::Stochastic(DistFamily::Gaussian { .. })) {
                return Err(EstimatorError::UnsupportedFamily(g.name(v).to_string()));
            }
            if checks_enabled {
                let set = critic_set_of(&ns.critic).ok_or_else(|| {
                    invalid(g, v, "debiasing requires a value critic with an explicit set")
                })?;
                if !is_markov(g, set, v) {
                    return Err(invalid(g, v, "debiasing requires a Markov critic set"));
                }
            }
        }
        if ns.reparameterized
            && !matches!(g.kind(v), NodeKind::Stochastic(DistFamily::Gaussian { .. }))
        {
            return Err(EstimatorError::UnsupportedFamily(g.name(v).to_string()));
        }
        if let Some(pc) = &ns.param_critic {
            if !g.kind(pc.param).is_functional() {
                return Err(invalid(g, v, "param-critic target must be a deterministic node"));
            }
            if checks_enabled && !det_closure(g, &pc.set).contains(&pc.param) {
                return Err(invalid(
                    g,
                    v,
                    "param-critic conditioning set must determine the parameter node",
                ));
            }
        }
    }

    // Rewrite flagged nodes, re-resolving by name. Debiased nodes stay
    // stochastic: their reparameterized term is rebuilt on the tape from the
    // standardized residual instead of by graph surgery.
    let mut work = g.clone();
    for ns in &spec.nodes {
        if ns.reparameterized {
            let wv = work.by_name(g.name(ns.node)).expect("name preserved");
            work = reparameterize(&work, wv)?;
        }
    }

    let theta_w = work
        .by_name(g.name(theta))
        .map_err(|e| EstimatorError::Rewrite(e.to_string()))?;
    let orig_to_work: Vec<usize> = g
        .ids()
        .map(|v| work.by_name(g.name(v)).expect("names preserved").idx())
        .collect();

    let mut rows = Vec::new();
    let mut mentioned: NodeSet = NodeSet::new();
    for ns in &spec.nodes {
        mentioned.insert(ns.node);
        if ns.reparameterized {
            continue; // gradient flows through the value path now
        }
        let wv = work.by_name(g.name(ns.node)).expect("name preserved");
        let mode = if let Some(qhat) = &ns.debias {
            RowMode::Debias {
                qhat: qhat.clone(),
                critic: ns.critic.clone(),
                baseline: ns.baseline.clone(),
            }
        } else if let Some(pc) = &ns.param_critic {
            RowMode::ParamCritic {
                param: work.by_name(g.name(pc.param)).expect("name preserved"),
                source: pc.source.clone(),
            }
        } else {
            RowMode::Score { critic: ns.critic.clone(), baseline: ns.baseline.clone() }
        };
        rows.push(Row { node: wv, node_orig: Some(ns.node), mode });
    }
    // Default empirical rows for unmentioned stochastic nodes of the working
    // graph (fresh noise roots have parameter-free densities, so their terms
    // carry zero gradient and only complete the surrogate form).
    for wv in work.stochastic_nodes() {
        let orig = g.by_name(work.name(wv)).ok();
        let already = orig.map(|o| mentioned.contains(&o)).unwrap_or(false);
        if !already {
            rows.push(Row {
                node: wv,
                node_orig: orig,
                mode: RowMode::Score {
                    critic: CriticChoice::Empirical,
                    baseline: BaselineChoice::None,
                },
            });
        }
    }

    let injection = match &spec.injection {
        None => None,
        Some(inj) => {
            let at = work
                .by_name(g.name(inj.at))
                .map_err(|e| EstimatorError::Rewrite(e.to_string()))?;
            let members: Vec<NodeId> = inj
                .separator
                .iter()
                .map(|m| work.by_name(g.name(*m)).expect("name preserved"))
                .collect();
            match separator_verdict(&work, at, &members) {
                SeparatorVerdict::NotSeparator => return Err(EstimatorError::NotSeparator),
                SeparatorVerdict::Unordered => Some(CompiledInjection {
                    at,
                    members,
                    sources: inj.sources.clone(),
                }),
                SeparatorVerdict::OrderedOnly(sorted) => {
                    // Reorder the sources alongside the members.
                    let sources = sorted
                        .iter()
                        .map(|m| {
                            let i = members.iter().position(|x| x == m).unwrap();
                            inj.sources[i].clone()
                        })
                        .collect();
                    Some(CompiledInjection { at, members: sorted, sources })
                }
            }
        }
    };

    let input_closure = det_closure(&work, &CondSet::empty());

    Ok(CompiledEstimator {
        orig: g.clone(),
        work,
        theta: theta_w,
        rows,
        injection,
        orig_to_work,
        input_closure,
    })
}

// ---------------------------------------------------------------------------
// Per-sample evaluation
// ---------------------------------------------------------------------------

impl CompiledEstimator {
    /// Re-index a working-graph sample into the original graph's node order
    /// so spec-attached sources can read it.
    fn orig_view(&self, a: &Assignment) -> Assignment {
        Assignment {
            values: self.orig_to_work.iter().map(|w| a.values[*w]).collect(),
            logp: self.orig_to_work.iter().map(|w| a.logp[*w]).collect(),
        }
    }

    fn critic_value(
        &self,
        critic: &CriticChoice,
        v_orig: NodeId,
        view: &Assignment,
    ) -> Result<f64, EstimatorError> {
        let g = &self.orig;
        Ok(match critic {
            CriticChoice::Empirical => g.cost_to_go(v_orig, view),
            CriticChoice::Value { source, .. } => source.eval(view, g.name(v_orig))?,
            CriticChoice::PartialAverage { empirical_costs, parts, .. } => {
                let mut total: f64 = empirical_costs.iter().map(|c| view.value(*c)).sum();
                for (_, _, source) in parts {
                    total += source.eval(view, g.name(v_orig))?;
                }
                total
            }
            CriticChoice::Convex(entries) => {
                let mut total = 0.0;
                for (w, c) in entries {
                    total += w * self.critic_value(c, v_orig, view)?;
                }
                total
            }
        })
    }

    fn baseline_value(
        &self,
        baseline: &BaselineChoice,
        v_orig: NodeId,
        view: &Assignment,
    ) -> Result<f64, EstimatorError> {
        Ok(match baseline {
            BaselineChoice::None => 0.0,
            BaselineChoice::Value { source, .. } | BaselineChoice::Optimal { source, .. } => {
                source.eval(view, self.orig.name(v_orig))?
            }
        })
    }

    /// The differentiable per-sample surrogate: costs plus per-node terms.
    /// Its gradient at any input is the per-sample estimate.
    pub fn surrogate_slot(&self, a: &Assignment, t: &mut Tape) -> Result<Slot, EstimatorError> {
        let g = &self.work;
        let view = self.orig_view(a);
        let mut terms: Vec<Slot> = g.costs().iter().map(|c| t.node(*c)).collect();
        for row in &self.rows {
            let v = row.node;
            match &row.mode {
                RowMode::Score { critic, baseline } => {
                    let adv = match row.node_orig {
                        Some(vo) => {
                            self.critic_value(critic, vo, &view)?
                                - self.baseline_value(baseline, vo, &view)?
                        }
                        // Rewrite-introduced noise roots only ever carry the
                        // empirical critic; their cost-to-go lives on the
                        // working graph.
                        None => g.cost_to_go(v, a),
                    };
                    let lp = t.logp(v).ok_or_else(|| {
                        EstimatorError::InvalidSpec {
                            node: g.name(v).to_string(),
                            check: "score row on a node without a recorded density".into(),
                        }
                    })?;
                    let mult = t.constant(adv);
                    terms.push(t.mul(lp, mult));
                }
                RowMode::Debias { qhat, critic, baseline } => {
                    let _ = critic; // the approximation itself plays the critic
                    let vo = row.node_orig.expect("debias rows are declared nodes");
                    let qv = match qhat {
                        QHatRef::Expr(e) => e.eval(&view).ok_or_else(|| {
                            EstimatorError::MissingCriticKey { node: g.name(v).to_string() }
                        })?,
                        QHatRef::Learned(l) => l.predict(&view),
                    };
                    let bv = self.baseline_value(baseline, vo, &view)?;
                    let residual = self.orig.cost_to_go(vo, &view) - qv - bv;
                    let lp = t.logp(v).expect("debias node is stochastic in the working graph");
                    let mult = t.constant(residual);
                    terms.push(t.mul(lp, mult));
                    terms.push(self.qhat_live_slot(qhat, v, vo, a, t)?);
                }
                RowMode::ParamCritic { param, source } => {
                    let gval = source.eval(&view, g.name(v))?;
                    let mult = t.constant(gval);
                    let pslot = t.node(*param);
                    terms.push(t.mul(mult, pslot));
                }
            }
        }
        Ok(t.sum(&terms))
    }

    /// Reparameterized critic term for the debiased estimator: the node's
    /// value is rebuilt as mean + sigma * residual with only its
    /// input-determined parents left live, then fed through the critic
    /// approximation with every other argument held constant. `v` is the
    /// working-graph node, `v_orig` the same node in the spec's indexing.
    fn qhat_live_slot(
        &self,
        qhat: &QHatRef,
        v: NodeId,
        v_orig: NodeId,
        a: &Assignment,
        t: &mut Tape,
    ) -> Result<Slot, EstimatorError> {
        let g = &self.work;
        let (mean, logstd) = match g.kind(v) {
            NodeKind::Stochastic(DistFamily::Gaussian { mean, logstd }) => (mean, logstd),
            _ => unreachable!("debias node stays Gaussian in the working graph"),
        };
        let parent_slots: Vec<Slot> = g
            .parents(v)
            .iter()
            .map(|p| {
                let s = t.node(*p);
                if self.input_closure.contains(p) {
                    s
                } else {
                    t.stop_grad(s)
                }
            })
            .collect();
        let mu = t.eval_expr(mean, &parent_slots)?;
        let ls = t.eval_expr(logstd, &parent_slots)?;
        let sigma = t.exp_slot(ls)?;
        let (mu_val, sigma_val) = {
            let vals: Vec<f64> = g.parents(v).iter().map(|p| a.value(*p)).collect();
            let m = mean.eval(&vals).map_err(|err| SampleError::Numerical {
                node: g.name(v).to_string(),
                err,
            })?;
            let s = logstd
                .eval(&vals)
                .map_err(|err| SampleError::Numerical { node: g.name(v).to_string(), err })?
                .exp();
            (m, s)
        };
        let residual = (a.value(v) - mu_val) / sigma_val;
        let rc = t.constant(residual);
        let shift = t.mul(sigma, rc);
        let v_live = t.add(mu, shift);

        match qhat {
            QHatRef::Expr(e) => {
                // Arguments in original indexing: the live rebuilt value for
                // v, a frozen copy of the recorded value for everything else.
                let mut args = Vec::with_capacity(self.orig.node_count());
                for u in self.orig.ids() {
                    if u == v_orig {
                        args.push(v_live);
                    } else if e.expr.uses_arg(u.idx()) {
                        let s = t.node(NodeId(self.orig_to_work[u.idx()] as u32));
                        args.push(t.stop_grad(s));
                    } else {
                        args.push(v_live); // placeholder, never read
                    }
                }
                Ok(t.eval_expr(&e.expr, &args)?)
            }
            QHatRef::Learned(l) => {
                let coeffs = l.coeffs_for(&self.orig_view(a));
                let mut terms = Vec::with_capacity(coeffs.len());
                for (j, c) in coeffs.iter().enumerate() {
                    let cs = t.constant(*c);
                    let pw = t.eval_expr(&Expr::powi(Expr::Arg(0), j as i32), &[v_live])?;
                    terms.push(t.mul(cs, pw));
                }
                Ok(t.sum(&terms))
            }
        }
    }

    /// One per-sample gradient estimate at the designated input.
    pub fn eval_at(&self, a: &Assignment) -> Result<f64, EstimatorError> {
        let mut t = record(&self.work, a)?;
        match &self.injection {
            None => {
                let ls = self.surrogate_slot(a, &mut t)?;
                let grads = backward(&t, ls);
                Ok(grads.node(&t, self.theta))
            }
            Some(inj) => {
                // Pure cost surrogate with member adjoints replaced by the
                // sourced gradient-critic values.
                let view = self.orig_view(a);
                let costs: Vec<Slot> = self.work.costs().iter().map(|c| t.node(*c)).collect();
                let ls = t.sum(&costs);
                let mut repl = Vec::with_capacity(inj.members.len());
                for (m, src) in inj.members.iter().zip(&inj.sources) {
                    repl.push((t.node(*m), src.eval(&view, self.work.name(*m))?));
                }
                let grads = backward_with_replacements(&t, ls, &repl);
                Ok(grads.at(t.node(inj.at)))
            }
        }
    }

    /// Inputs are named on the original graph; rewrites may shift ids.
    fn remap_inputs(&self, inputs: &InputValues) -> InputValues {
        inputs
            .iter()
            .map(|(v, x)| {
                let w = self
                    .work
                    .by_name(self.orig.name(*v))
                    .expect("input names survive rewrites");
                (w, *x)
            })
            .collect()
    }

    /// Monte-Carlo mean and standard error over `n` forward samples.
    pub fn mc_estimate(
        &self,
        inputs: &InputValues,
        n: usize,
        seed: u64,
    ) -> Result<GradientEstimate, EstimatorError> {
        assert!(n >= 1);
        let inputs_w = self.remap_inputs(inputs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for i in 0..n {
            let a = self.work.forward_sample(&inputs_w, &mut rng)?;
            let x = self.eval_at(&a)?;
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let stderr = if n >= 2 {
            (m2 / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(GradientEstimate { mean, stderr, n })
    }

    /// Exact mean and variance of the per-sample estimate over the
    /// enumerated support of the working graph.
    pub fn exact_moments(
        &self,
        inputs: &InputValues,
        opts: EnumerateOpts,
    ) -> Result<(f64, f64), EstimatorError> {
        let inputs_w = self.remap_inputs(inputs);
        let table = enumerate_support(&self.work, &inputs_w, opts)?;
        self.exact_moments_on(&table)
    }

    /// Same, on a pre-enumerated support of the working graph.
    pub fn exact_moments_on(&self, table: &SupportTable) -> Result<(f64, f64), EstimatorError> {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for atom in &table.atoms {
            let x = self.eval_at(&atom.assignment)?;
            mean += atom.prob * x;
            m2 += atom.prob * x * x;
        }
        Ok((mean, m2 - mean * mean))
    }

    /// Enumerate the working graph's support at the given inputs.
    pub fn support(
        &self,
        inputs: &InputValues,
        opts: EnumerateOpts,
    ) -> Result<SupportTable, EstimatorError> {
        let inputs_w = self.remap_inputs(inputs);
        Ok(enumerate_support(&self.work, &inputs_w, opts)?)
    }
}

// ---------------------------------------------------------------------------
// Spec-level entry points
// ---------------------------------------------------------------------------

/// Score-function (likelihood-ratio) Monte-Carlo estimate; refuses specs
/// that ask for reparameterization.
pub fn score_function_estimate(
    g: &Graph,
    theta: NodeId,
    spec: &EstimatorSpec,
    inputs: &InputValues,
    n: usize,
    seed: u64,
) -> Result<GradientEstimate, EstimatorError> {
    if spec.uses_reparameterization() {
        return Err(EstimatorError::InvalidSpec {
            node: "<spec>".into(),
            check: "score-function estimation takes no reparameterized nodes".into(),
        });
    }
    compile(g, theta, spec, true)?.mc_estimate(inputs, n, seed)
}

/// Pathwise estimate on the (partially) reparameterized graph.
pub fn pathwise_estimate(
    g: &Graph,
    theta: NodeId,
    spec: &EstimatorSpec,
    inputs: &InputValues,
    n: usize,
    seed: u64,
) -> Result<GradientEstimate, EstimatorError> {
    compile(g, theta, spec, true)?.mc_estimate(inputs, n, seed)
}

/// Horizon gradient-critic estimate: replace the separator members' adjoints
/// by sourced gradient-critic values and read the sweep at `u`.
pub fn gradient_critic_estimate(
    g: &Graph,
    u: NodeId,
    separator: Vec<NodeId>,
    sources: Vec<GradRef>,
    reparameterize_nodes: &[NodeId],
    inputs: &InputValues,
    n: usize,
    seed: u64,
) -> Result<GradientEstimate, EstimatorError> {
    let nodes: Vec<NodeSpec> = reparameterize_nodes
        .iter()
        .map(|v| NodeSpec::reparameterized(*v))
        .collect();
    let spec = EstimatorSpec {
        nodes,
        injection: Some(InjectionSpec { at: u, separator, sources }),
    };
    compile(g, u, &spec, true)?.mc_estimate(inputs, n, seed)
}

/// The combined estimator for one reparameterizable node: score term on the
/// residual against a critic approximation, plus the approximation's
/// reparameterized gradient.
pub fn debiased_estimate(
    g: &Graph,
    theta: NodeId,
    v: NodeId,
    critic_set: &CondSet,
    qhat: QHatRef,
    inputs: &InputValues,
    n: usize,
    seed: u64,
) -> Result<GradientEstimate, EstimatorError> {
    let spec = debiased_spec(v, critic_set, qhat);
    compile(g, theta, &spec, true)?.mc_estimate(inputs, n, seed)
}

/// Spec with the given node debiased and every other node left empirical.
pub fn debiased_spec(v: NodeId, critic_set: &CondSet, qhat: QHatRef) -> EstimatorSpec {
    let node = NodeSpec::empirical(v)
        .with_critic(CriticChoice::Value {
            set: critic_set.clone(),
            source: ValueRef::Const(0.0),
        })
        .with_debias(qhat);
    EstimatorSpec::of(vec![node])
}

// ---------------------------------------------------------------------------
// Chain critics: k-step and lambda returns
// ---------------------------------------------------------------------------

/// Declared chain structure of an alternating state/action/reward fixture.
#[derive(Debug, Clone)]
pub struct ChainLayout {
    pub states: Vec<NodeId>,
    pub actions: Vec<NodeId>,
    pub rewards: Vec<NodeId>,
}

impl ChainLayout {
    pub fn validate(&self, g: &Graph) -> Result<(), EstimatorError> {
        let t = self.states.len();
        if t == 0 || self.actions.len() != t || self.rewards.len() != t {
            return Err(EstimatorError::NotAChain(
                "states, actions, and rewards must align one per step".into(),
            ));
        }
        for s in &self.states {
            if !g.kind(*s).is_stochastic() {
                return Err(EstimatorError::NotAChain(format!(
                    "state `{}` is not stochastic",
                    g.name(*s)
                )));
            }
        }
        for r in &self.rewards {
            if !g.kind(*r).is_cost() {
                return Err(EstimatorError::NotAChain(format!(
                    "reward `{}` is not a cost node",
                    g.name(*r)
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// k-step return critic for the action at step `t`: empirical rewards within
/// k steps plus the value of the state k+1 ahead. `k >= horizon - t - 1`
/// collapses to the empirical critic.
pub fn kstep_critic(
    g: &Graph,
    layout: &ChainLayout,
    t: usize,
    k: usize,
    state_value: impl Fn(NodeId) -> ValueRef,
) -> Result<CriticChoice, EstimatorError> {
    layout.validate(g)?;
    if t >= layout.horizon() || k > layout.horizon() {
        return Err(EstimatorError::NotAChain(format!(
            "step {t} / lookahead {k} outside the {}-step chain",
            layout.horizon()
        )));
    }
    let last = layout.horizon() - 1;
    let boot_step = t + k + 1;
    if boot_step > last {
        return Ok(CriticChoice::Empirical);
    }
    let mut cond = NodeSet::new();
    let mut empirical = NodeSet::new();
    for j in t..boot_step {
        cond.insert(layout.states[j]);
        cond.insert(layout.actions[j]);
        empirical.insert(layout.rewards[j]);
    }
    let boot_state = layout.states[boot_step];
    cond.insert(boot_state);
    Ok(CriticChoice::PartialAverage {
        cond: CondSet::new(cond),
        empirical_costs: empirical,
        parts: vec![(
            crate::graph::node_set(&[boot_state]),
            CondSet::of(&[boot_state]),
            state_value(boot_state),
        )],
    })
}

/// Finite-horizon lambda-weighted return: convex combination of k-step
/// critics with geometric weights, the tail weight on the empirical return.
pub fn lambda_critic(
    g: &Graph,
    layout: &ChainLayout,
    t: usize,
    lambda: f64,
    state_value: impl Fn(NodeId) -> ValueRef,
) -> Result<CriticChoice, EstimatorError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(EstimatorError::NotAChain("lambda must lie in [0,1]".into()));
    }
    layout.validate(g)?;
    let last = layout.horizon() - 1;
    let kmax = last.saturating_sub(t); // smallest k that is fully empirical
    let mut entries = Vec::new();
    let mut weight_rest = 1.0;
    for k in 0..kmax {
        let w = (1.0 - lambda) * lambda.powi(k as i32);
        if w > 0.0 {
            entries.push((w, kstep_critic(g, layout, t, k, &state_value)?));
        }
        weight_rest -= w;
    }
    if weight_rest > 1e-15 {
        entries.push((weight_rest, CriticChoice::Empirical));
    }
    Ok(CriticChoice::Convex(entries))
}

// ---------------------------------------------------------------------------
// Gradient-critic bootstrap
// ---------------------------------------------------------------------------

/// One member of a gradient-critic bootstrap: the separator node, its
/// conditioning set, and the sourced gradient-critic for it.
#[derive(Clone, Debug)]
pub struct BootstrapMember {
    pub node: NodeId,
    pub set: CondSet,
    pub source: GradRef,
}

/// Check the bootstrap identity for gradient-critics on an enumerated
/// support: the exact g(u | set_u) table must equal, per key, the
/// conditional expectation of the members' sourced values times their held
/// total derivatives toward `u`. Preconditions (separator, set nesting,
/// Markov member sets) are reported as errors, not as inequality.
pub fn gradient_critic_bootstrap_check(
    g: &Graph,
    table: &SupportTable,
    u: NodeId,
    set_u: &CondSet,
    members: &[BootstrapMember],
    tol: f64,
) -> Result<bool, EstimatorError> {
    let member_nodes: Vec<NodeId> = members.iter().map(|m| m.node).collect();
    let verdict = separator_verdict(g, u, &member_nodes);
    let ordered: Vec<NodeId> = match verdict {
        SeparatorVerdict::NotSeparator => return Err(EstimatorError::NotSeparator),
        SeparatorVerdict::Unordered => member_nodes.clone(),
        SeparatorVerdict::OrderedOnly(sorted) => sorted,
    };
    for m in members {
        if !set_u.members.is_subset(&m.set.members) {
            return Err(EstimatorError::InvalidSpec {
                node: g.name(m.node).to_string(),
                check: "member conditioning set must contain the target's set".into(),
            });
        }
        if !is_markov(g, &m.set, m.node) {
            return Err(EstimatorError::InvalidSpec {
                node: g.name(m.node).to_string(),
                check: "member conditioning set must be Markov for the member's cost-to-go".into(),
            });
        }
    }
    let sources_in_order: Vec<&GradRef> = ordered
        .iter()
        .map(|n| &members.iter().find(|m| m.node == *n).unwrap().source)
        .collect();

    // Group both sides per key of set_u over the same support.
    let mut lhs: std::collections::HashMap<Vec<u64>, (f64, f64)> =
        std::collections::HashMap::new();
    let mut rhs: std::collections::HashMap<Vec<u64>, (f64, f64)> =
        std::collections::HashMap::new();
    for atom in &table.atoms {
        let a = &atom.assignment;
        let mut t = record(g, a)?;
        let ls = crate::oracle::node_rooted_surrogate_slot(g, a, &mut t, u, set_u);
        let du = backward(&t, ls).node(&t, u);
        let key = a.key_of(&set_u.members);
        let e = lhs.entry(key.clone()).or_insert((0.0, 0.0));
        e.0 += atom.prob * du;
        e.1 += atom.prob;

        let member_slots: Vec<Slot> = ordered.iter().map(|n| t.node(*n)).collect();
        let injected: Result<Vec<f64>, EstimatorError> = sources_in_order
            .iter()
            .zip(&ordered)
            .map(|(s, n)| s.eval(a, g.name(*n)))
            .collect();
        let horizon = crate::autodiff::horizon_backprop(&t, t.node(u), &member_slots, &injected?)?;
        let e = rhs.entry(key).or_insert((0.0, 0.0));
        e.0 += atom.prob * horizon;
        e.1 += atom.prob;
    }
    for (key, (num, den)) in &lhs {
        let l = num / den;
        let (rn, rd) = rhs.get(key).expect("same keys on both sides");
        let r = rn / rd;
        if (l - r).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::graph::GraphBuilder;
    use crate::oracle::{exact_parameter_gradient, EnumerateOpts};

    /// theta -> Bernoulli-style coin -> cost table.
    fn coin() -> (Graph, NodeId, NodeId) {
        let mut b = GraphBuilder::new();
        let t = b.input("t");
        let z = b.categorical("z", &[t], vec![Expr::constant(0.0), Expr::arg(0)]);
        b.cost(
            "l",
            &[z],
            Expr::select(Expr::arg(0), vec![Expr::constant(0.4), Expr::constant(2.1)]),
        );
        let g = b.build().unwrap();
        let theta = g.by_name("t").unwrap();
        (g, theta, z)
    }

    #[test]
    fn empirical_score_estimator_is_exact_under_enumeration() {
        let (g, theta, _) = coin();
        let inputs = vec![(theta, 0.3)];
        let exact =
            exact_parameter_gradient(&g, &inputs, theta, EnumerateOpts::default()).unwrap();
        let compiled = compile(&g, theta, &EstimatorSpec::empirical(), true).unwrap();
        let (mean, _) = compiled.exact_moments(&inputs, EnumerateOpts::default()).unwrap();
        assert!((mean - exact).abs() < 1e-12, "{mean} vs {exact}");
    }

    #[test]
    fn mc_estimate_is_deterministic_and_near_exact() {
        let (g, theta, _) = coin();
        let inputs = vec![(theta, 0.3)];
        let exact =
            exact_parameter_gradient(&g, &inputs, theta, EnumerateOpts::default()).unwrap();
        let spec = EstimatorSpec::empirical();
        let e1 = score_function_estimate(&g, theta, &spec, &inputs, 20_000, 7).unwrap();
        let e2 = score_function_estimate(&g, theta, &spec, &inputs, 20_000, 7).unwrap();
        assert_eq!(e1, e2);
        assert!((e1.mean - exact).abs() <= 4.0 * e1.stderr);
    }

    #[test]
    fn n_equals_one_has_undefined_stderr() {
        let (g, theta, _) = coin();
        let inputs = vec![(theta, 0.3)];
        let e = score_function_estimate(&g, theta, &EstimatorSpec::empirical(), &inputs, 1, 3)
            .unwrap();
        assert!(!e.stderr_defined());
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn duplicate_node_rows_are_refused() {
        let (g, theta, z) = coin();
        let spec = EstimatorSpec::of(vec![NodeSpec::empirical(z), NodeSpec::empirical(z)]);
        match compile(&g, theta, &spec, true) {
            Err(EstimatorError::InvalidSpec { node, check }) => {
                assert_eq!(node, "z");
                assert!(check.contains("twice"));
            }
            other => panic!("expected refusal, got {:?}", other.err()),
        }
    }

    #[test]
    fn invalid_baseline_is_refused_with_named_node() {
        let (g, theta, z) = coin();
        let l = g.by_name("l").unwrap();
        let spec = EstimatorSpec::of(vec![NodeSpec::empirical(z).with_baseline(
            BaselineChoice::Value { set: CondSet::of(&[l]), source: ValueRef::Const(0.0) },
        )]);
        match compile(&g, theta, &spec, true) {
            Err(EstimatorError::InvalidSpec { node, check }) => {
                assert_eq!(node, "z");
                assert!(check.contains("descendants"));
            }
            other => panic!("expected InvalidSpec, got {:?}", other.err()),
        }
    }

    #[test]
    fn reparameterize_rejects_categorical_and_double_application() {
        let (g, _, z) = coin();
        assert!(matches!(
            reparameterize(&g, z),
            Err(EstimatorError::UnsupportedFamily(_))
        ));

        let mut b = GraphBuilder::new();
        let t = b.input("t");
        let x = b.gaussian("x", &[t], Expr::arg(0), Expr::constant(-0.5));
        b.cost("l", &[x], Expr::powi(Expr::arg(0), 2));
        let g2 = b.build().unwrap();
        let r1 = reparameterize(&g2, x).unwrap();
        let x_again = r1.by_name("x").unwrap();
        assert!(reparameterize(&r1, x_again).is_err());
        // The new noise root exists and the original node is deterministic.
        assert!(r1.by_name("x_eps").is_ok());
        assert!(r1.kind(x_again).is_functional());
    }

    #[test]
    fn reparameterized_graph_preserves_exact_gradient() {
        let mut b = GraphBuilder::new();
        let t = b.input("t");
        let x = b.gaussian(
            "x",
            &[t],
            Expr::scale(1.3, Expr::arg(0)),
            Expr::constant(-0.4),
        );
        b.cost("l", &[x], Expr::powi(Expr::arg(0), 2));
        let g = b.build().unwrap();
        let theta = g.by_name("t").unwrap();
        let inputs = vec![(theta, 0.6)];
        let opts = EnumerateOpts { gh_order: 16, cap: 1 << 20 };
        let base = exact_parameter_gradient(&g, &inputs, theta, opts).unwrap();
        let re = reparameterize(&g, x).unwrap();
        let theta_re = re.by_name("t").unwrap();
        let re_grad = exact_parameter_gradient(&re, &vec![(theta_re, 0.6)], theta_re, opts).unwrap();
        assert!((base - re_grad).abs() < 1e-8, "{base} vs {re_grad}");
        // Constant-parameter Gaussian: measure-preserving, gradient intact.
        let mut b2 = GraphBuilder::new();
        let t2 = b2.input("t");
        let w = b2.gaussian("w", &[], Expr::constant(0.2), Expr::constant(-0.3));
        let s = b2.deterministic(
            "s",
            &[t2, w],
            Expr::add(vec![Expr::arg(0), Expr::arg(1)]),
        );
        b2.cost("l", &[s], Expr::powi(Expr::arg(0), 2));
        let g2 = b2.build().unwrap();
        let th2 = g2.by_name("t").unwrap();
        let w2 = g2.by_name("w").unwrap();
        let base2 = exact_parameter_gradient(&g2, &vec![(th2, 0.1)], th2, opts).unwrap();
        let re2 = reparameterize(&g2, w2).unwrap();
        let th2r = re2.by_name("t").unwrap();
        let got2 = exact_parameter_gradient(&re2, &vec![(th2r, 0.1)], th2r, opts).unwrap();
        assert!((base2 - got2).abs() < 1e-10);
    }
}
