//! Data model and forward semantics of stochastic computation graphs.
//!
//! A graph is an immutable DAG of input, stochastic, deterministic, and cost
//! nodes. Costs are scalar sinks; inputs are externally-set roots. Values are
//! scalars throughout; categorical draws are encoded as the outcome index.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expr, print_expr, EvalError, Expr, ParseError};

/// Dense node index, stable for the lifetime of a `Graph`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Ordered node set. Desk-scale graphs make a BTreeSet plenty fast, and the
/// deterministic iteration order keeps reports and goldens stable.
pub type NodeSet = BTreeSet<NodeId>;

/// Convenience constructor for small literal sets.
pub fn node_set(ids: &[NodeId]) -> NodeSet {
    ids.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistFamily {
    /// K >= 2 outcomes, one logit expression per outcome.
    Categorical { logits: Vec<Expr> },
    /// Location-scale Gaussian; `logstd` must stay finite.
    Gaussian { mean: Expr, logstd: Expr },
}

impl DistFamily {
    pub fn outcome_count(&self) -> Option<usize> {
        match self {
            DistFamily::Categorical { logits } => Some(logits.len()),
            DistFamily::Gaussian { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Input,
    Stochastic(DistFamily),
    Deterministic(Expr),
    Cost(Expr),
}

impl NodeKind {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, NodeKind::Stochastic(_))
    }

    pub fn is_cost(&self) -> bool {
        matches!(self, NodeKind::Cost(_))
    }

    pub fn is_input(&self) -> bool {
        matches!(self, NodeKind::Input)
    }

    /// Deterministic in the functional sense: value is a function of parents.
    pub fn is_functional(&self) -> bool {
        matches!(self, NodeKind::Deterministic(_) | NodeKind::Cost(_))
    }
}

#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub name: String,
    pub kind: NodeKind,
    pub parents: Vec<NodeId>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("cycle detected involving node `{0}`")]
    CycleDetected(String),
    #[error("node `{node}` references unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("cost node `{cost}` has child `{child}`; costs are sinks")]
    CostWithChild { cost: String, child: String },
    #[error("input node `{0}` declares parents; inputs are roots")]
    InputWithParent(String),
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("node `{node}`: expression references argument {arg} but node has {parents} parents")]
    ArityMismatch { node: String, arg: usize, parents: usize },
    #[error("categorical node `{0}` needs at least 2 outcomes")]
    TooFewOutcomes(String),
    #[error("node `{node}`: {err}")]
    BadExpression { node: String, err: ParseError },
    #[error("unknown node name `{0}`")]
    UnknownNode(String),
}

/// Immutable, validated stochastic computation graph.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<NodeInfo>,
    children: Vec<Vec<NodeId>>,
    order: Vec<NodeId>,
    costs: Vec<NodeId>,
    inputs: Vec<NodeId>,
    by_name: HashMap<String, NodeId>,
}

impl Graph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn info(&self, v: NodeId) -> &NodeInfo {
        &self.nodes[v.idx()]
    }

    pub fn kind(&self, v: NodeId) -> &NodeKind {
        &self.nodes[v.idx()].kind
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.nodes[v.idx()].name
    }

    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v.idx()].parents
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.idx()]
    }

    /// Topological order; parents precede children.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn costs(&self) -> &[NodeId] {
        &self.costs
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn stochastic_nodes(&self) -> Vec<NodeId> {
        self.ids().filter(|v| self.kind(*v).is_stochastic()).collect()
    }

    pub fn by_name(&self, name: &str) -> Result<NodeId, GraphError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn names(&self, set: &NodeSet) -> Vec<String> {
        set.iter().map(|v| self.name(*v).to_string()).collect()
    }

    /// All nodes reachable from `v` by directed paths, including `v` itself.
    pub fn descendants(&self, v: NodeId) -> NodeSet {
        let mut out = NodeSet::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if out.insert(u) {
                stack.extend(self.children(u).iter().copied());
            }
        }
        out
    }

    /// All nodes with a directed path to `v`, including `v` itself.
    pub fn ancestors(&self, v: NodeId) -> NodeSet {
        let mut out = NodeSet::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if out.insert(u) {
                stack.extend(self.parents(u).iter().copied());
            }
        }
        out
    }

    /// True iff some directed path `from -> ... -> to` has no node of
    /// `blockers` among the nodes after the source (the source itself is
    /// exempt; the destination is not). The trivial path counts when
    /// `from == to`.
    pub fn exists_unblocked_path(&self, from: NodeId, to: NodeId, blockers: &NodeSet) -> bool {
        if from == to {
            return true;
        }
        // BFS over nodes not in `blockers`, starting from `from`'s children.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = self
            .children(from)
            .iter()
            .copied()
            .filter(|c| !blockers.contains(c))
            .collect();
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            if seen[u.idx()] {
                continue;
            }
            seen[u.idx()] = true;
            stack.extend(
                self.children(u)
                    .iter()
                    .copied()
                    .filter(|c| !blockers.contains(c) && !seen[c.idx()]),
            );
        }
        false
    }

    /// True iff every directed path from a stochastic node to `x` is blocked
    /// by `given` (every node of the path counts, endpoints included). Knowing
    /// the values in `given` then suffices to compute `x` without sampling.
    pub fn deterministically_computable(&self, x: NodeId, given: &NodeSet) -> bool {
        if given.contains(&x) {
            return true;
        }
        // Reverse reachability from x through nodes outside `given`; if it
        // touches a stochastic node the path is unblocked.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![x];
        while let Some(u) = stack.pop() {
            if seen[u.idx()] {
                continue;
            }
            seen[u.idx()] = true;
            if self.kind(u).is_stochastic() {
                return false;
            }
            stack.extend(
                self.parents(u)
                    .iter()
                    .copied()
                    .filter(|p| !given.contains(p) && !seen[p.idx()]),
            );
        }
        true
    }

    /// Cost nodes descending from `v`; the cost-to-go of `v` is the sum of
    /// their values.
    pub fn cost_to_go_set(&self, v: NodeId) -> NodeSet {
        let desc = self.descendants(v);
        self.costs.iter().copied().filter(|c| desc.contains(c)).collect()
    }

    /// Union of cost-to-go sets over a set of nodes.
    pub fn cost_set_of(&self, part: &NodeSet) -> NodeSet {
        let mut out = NodeSet::new();
        for v in part {
            out.extend(self.cost_to_go_set(*v));
        }
        out
    }
}

/// A complete node-to-value mapping for one forward pass, with the
/// log-probability of each stochastic draw given its parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<f64>,
    pub logp: Vec<Option<f64>>,
}

impl Assignment {
    pub fn value(&self, v: NodeId) -> f64 {
        self.values[v.idx()]
    }

    pub fn logp(&self, v: NodeId) -> Option<f64> {
        self.logp[v.idx()]
    }

    /// Key identifying the restriction of this assignment to `set`, by exact
    /// bit pattern. Discrete-rooted values repeat bit-identically across
    /// samples, so grouping by this key is exact.
    pub fn key_of(&self, set: &NodeSet) -> Vec<u64> {
        set.iter().map(|v| self.values[v.idx()].to_bits()).collect()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SampleError {
    #[error("missing value for input `{0}`")]
    MissingInput(String),
    #[error("node `{node}`: {err}")]
    Numerical { node: String, err: EvalError },
    #[error("node `{node}`: probability {p} outside (0,1)")]
    BadProbability { node: String, p: f64 },
}

/// Named input values for a forward pass.
pub type InputValues = Vec<(NodeId, f64)>;

impl Graph {
    fn gather(&self, v: NodeId, values: &[f64]) -> Vec<f64> {
        self.parents(v).iter().map(|p| values[p.idx()]).collect()
    }

    fn eval_body(&self, v: NodeId, body: &Expr, values: &[f64]) -> Result<f64, SampleError> {
        body.eval(&self.gather(v, values)).map_err(|err| SampleError::Numerical {
            node: self.name(v).to_string(),
            err,
        })
    }

    /// Softmax probabilities and per-outcome log-probabilities for a
    /// categorical node at the given parent values.
    pub fn categorical_dist(
        &self,
        v: NodeId,
        values: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), SampleError> {
        let logits = match self.kind(v) {
            NodeKind::Stochastic(DistFamily::Categorical { logits }) => logits,
            _ => unreachable!("categorical_dist on non-categorical node"),
        };
        let mut ls = Vec::with_capacity(logits.len());
        for l in logits {
            ls.push(self.eval_body(v, l, values)?);
        }
        let m = ls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = ls.iter().map(|l| (l - m).exp()).sum();
        let lse = m + sum.ln();
        let logps: Vec<f64> = ls.iter().map(|l| l - lse).collect();
        let probs: Vec<f64> = logps.iter().map(|lp| lp.exp()).collect();
        Ok((probs, logps))
    }

    /// Mean and standard deviation for a Gaussian node at the given parent
    /// values.
    pub fn gaussian_dist(&self, v: NodeId, values: &[f64]) -> Result<(f64, f64), SampleError> {
        let (mean, logstd) = match self.kind(v) {
            NodeKind::Stochastic(DistFamily::Gaussian { mean, logstd }) => (mean, logstd),
            _ => unreachable!("gaussian_dist on non-gaussian node"),
        };
        let mu = self.eval_body(v, mean, values)?;
        let ls = self.eval_body(v, logstd, values)?;
        Ok((mu, ls.exp()))
    }

    /// Log-density of a Gaussian node at value `x` given parent values.
    pub fn gaussian_logpdf(&self, v: NodeId, x: f64, values: &[f64]) -> Result<f64, SampleError> {
        let (mu, sigma) = self.gaussian_dist(v, values)?;
        let z = (x - mu) / sigma;
        Ok(-0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
    }

    /// Topological-order evaluation: inputs set externally, stochastic nodes
    /// drawn from their family (log-probability recorded), deterministic and
    /// cost nodes computed from parents.
    pub fn forward_sample<R: Rng>(
        &self,
        inputs: &InputValues,
        rng: &mut R,
    ) -> Result<Assignment, SampleError> {
        let n = self.nodes.len();
        let mut values = vec![f64::NAN; n];
        let mut logp = vec![None; n];
        for (v, x) in inputs {
            values[v.idx()] = *x;
        }
        for &v in &self.order {
            match self.kind(v) {
                NodeKind::Input => {
                    if values[v.idx()].is_nan() {
                        return Err(SampleError::MissingInput(self.name(v).to_string()));
                    }
                }
                NodeKind::Deterministic(body) | NodeKind::Cost(body) => {
                    values[v.idx()] = self.eval_body(v, body, &values)?;
                }
                NodeKind::Stochastic(DistFamily::Categorical { .. }) => {
                    let (probs, logps) = self.categorical_dist(v, &values)?;
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut k = probs.len() - 1;
                    for (i, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            k = i;
                            break;
                        }
                    }
                    values[v.idx()] = k as f64;
                    logp[v.idx()] = Some(logps[k]);
                }
                NodeKind::Stochastic(DistFamily::Gaussian { .. }) => {
                    let (mu, sigma) = self.gaussian_dist(v, &values)?;
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    let x = mu + sigma * z;
                    values[v.idx()] = x;
                    logp[v.idx()] = Some(self.gaussian_logpdf(v, x, &values)?);
                }
            }
        }
        Ok(Assignment { values, logp })
    }

    /// Sum of all cost node values.
    pub fn total_cost(&self, a: &Assignment) -> f64 {
        self.costs.iter().map(|c| a.value(*c)).sum()
    }

    /// Sum of the cost-to-go of `v` under `a`.
    pub fn cost_to_go(&self, v: NodeId, a: &Assignment) -> f64 {
        self.cost_to_go_set(v).iter().map(|c| a.value(*c)).sum()
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// One node declaration; parents must already be declared.
#[derive(Debug, Clone)]
pub struct NodeDecl {
    pub name: String,
    pub kind: NodeKind,
    pub parents: Vec<String>,
}

/// Validate a declaration list and produce a graph with its topological
/// order. Declarations must reference only previously declared parents, so
/// the declaration order itself is the topological order.
pub fn build_graph(decls: Vec<NodeDecl>) -> Result<Graph, GraphError> {
    let mut by_name: HashMap<String, NodeId> = HashMap::new();
    let mut nodes: Vec<NodeInfo> = Vec::with_capacity(decls.len());

    for decl in decls {
        if by_name.contains_key(&decl.name) {
            return Err(GraphError::DuplicateName(decl.name));
        }
        let mut parents = Vec::with_capacity(decl.parents.len());
        for p in &decl.parents {
            match by_name.get(p) {
                Some(id) => parents.push(*id),
                None => {
                    return Err(GraphError::UnknownParent {
                        node: decl.name,
                        parent: p.clone(),
                    })
                }
            }
        }
        if decl.kind.is_input() && !parents.is_empty() {
            return Err(GraphError::InputWithParent(decl.name));
        }
        let arity_of = |e: &Expr| e.max_arg().map(|m| m + 1).unwrap_or(0);
        let check_arity = |e: &Expr, name: &str| -> Result<(), GraphError> {
            let need = arity_of(e);
            if need > parents.len() {
                return Err(GraphError::ArityMismatch {
                    node: name.to_string(),
                    arg: need - 1,
                    parents: parents.len(),
                });
            }
            Ok(())
        };
        match &decl.kind {
            NodeKind::Deterministic(e) | NodeKind::Cost(e) => check_arity(e, &decl.name)?,
            NodeKind::Stochastic(DistFamily::Categorical { logits }) => {
                if logits.len() < 2 {
                    return Err(GraphError::TooFewOutcomes(decl.name));
                }
                for l in logits {
                    check_arity(l, &decl.name)?;
                }
            }
            NodeKind::Stochastic(DistFamily::Gaussian { mean, logstd }) => {
                check_arity(mean, &decl.name)?;
                check_arity(logstd, &decl.name)?;
            }
            NodeKind::Input => {}
        }
        let id = NodeId(nodes.len() as u32);
        by_name.insert(decl.name.clone(), id);
        nodes.push(NodeInfo {
            name: decl.name,
            kind: decl.kind,
            parents,
        });
    }

    let n = nodes.len();
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (i, info) in nodes.iter().enumerate() {
        for p in &info.parents {
            children[p.idx()].push(NodeId(i as u32));
        }
    }
    for (i, info) in nodes.iter().enumerate() {
        if info.kind.is_cost() && !children[i].is_empty() {
            return Err(GraphError::CostWithChild {
                cost: info.name.clone(),
                child: nodes[children[i][0].idx()].name.clone(),
            });
        }
    }

    let order: Vec<NodeId> = (0..n as u32).map(NodeId).collect();
    let costs: Vec<NodeId> = order
        .iter()
        .copied()
        .filter(|v| nodes[v.idx()].kind.is_cost())
        .collect();
    let inputs: Vec<NodeId> = order
        .iter()
        .copied()
        .filter(|v| nodes[v.idx()].kind.is_input())
        .collect();

    Ok(Graph {
        nodes,
        children,
        order,
        costs,
        inputs,
        by_name,
    })
}

/// Incremental builder used by fixtures and tests.
pub struct GraphBuilder {
    decls: Vec<NodeDecl>,
    names: HashMap<String, NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            decls: Vec::new(),
            names: HashMap::new(),
        }
    }

    fn push(&mut self, name: &str, kind: NodeKind, parents: &[NodeId]) -> NodeId {
        let id = NodeId(self.decls.len() as u32);
        let parent_names = parents
            .iter()
            .map(|p| self.decls[p.idx()].name.clone())
            .collect();
        self.decls.push(NodeDecl {
            name: name.to_string(),
            kind,
            parents: parent_names,
        });
        self.names.insert(name.to_string(), id);
        id
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        self.push(name, NodeKind::Input, &[])
    }

    pub fn categorical(&mut self, name: &str, parents: &[NodeId], logits: Vec<Expr>) -> NodeId {
        self.push(
            name,
            NodeKind::Stochastic(DistFamily::Categorical { logits }),
            parents,
        )
    }

    /// Two-outcome node with success probability given by `prob`; stored as a
    /// categorical with logits [log(1-p), log(p)], which keeps one sampling
    /// and enumeration code path. Probability bounds are enforced at
    /// evaluation time by the log domain check.
    pub fn bernoulli(&mut self, name: &str, parents: &[NodeId], prob: Expr) -> NodeId {
        let logits = vec![
            Expr::log(Expr::sub(Expr::constant(1.0), prob.clone())),
            Expr::log(prob),
        ];
        self.categorical(name, parents, logits)
    }

    pub fn gaussian(&mut self, name: &str, parents: &[NodeId], mean: Expr, logstd: Expr) -> NodeId {
        self.push(
            name,
            NodeKind::Stochastic(DistFamily::Gaussian { mean, logstd }),
            parents,
        )
    }

    pub fn deterministic(&mut self, name: &str, parents: &[NodeId], body: Expr) -> NodeId {
        self.push(name, NodeKind::Deterministic(body), parents)
    }

    pub fn cost(&mut self, name: &str, parents: &[NodeId], body: Expr) -> NodeId {
        self.push(name, NodeKind::Cost(body), parents)
    }

    pub fn build(self) -> Result<Graph, GraphError> {
        build_graph(self.decls)
    }
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// JSON document format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub nodes: Vec<NodeDoc>,
    pub costs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilyDoc {
    Categorical { logits: Vec<String> },
    Bernoulli { prob: String },
    Gaussian { mean: String, logstd: String },
}

/// Parse the JSON graph document format. Expression parse errors report the
/// node name and byte position of the offending token.
pub fn graph_from_doc(doc: &GraphDoc) -> Result<Graph, GraphError> {
    let mut decls = Vec::with_capacity(doc.nodes.len());
    let cost_names: BTreeSet<&str> = doc.costs.iter().map(|s| s.as_str()).collect();
    for nd in &doc.nodes {
        let parent_refs: Vec<&str> = nd.parents.iter().map(|s| s.as_str()).collect();
        let parse = |src: &str| -> Result<Expr, GraphError> {
            parse_expr(src, &parent_refs).map_err(|err| GraphError::BadExpression {
                node: nd.name.clone(),
                err,
            })
        };
        let want_expr = || -> Result<Expr, GraphError> {
            match &nd.expr {
                Some(src) => parse(src),
                None => Err(GraphError::BadExpression {
                    node: nd.name.clone(),
                    err: ParseError { pos: 0, msg: "missing expr".into() },
                }),
            }
        };
        let kind = match nd.kind.as_str() {
            "input" => NodeKind::Input,
            "deterministic" => {
                if cost_names.contains(nd.name.as_str()) {
                    NodeKind::Cost(want_expr()?)
                } else {
                    NodeKind::Deterministic(want_expr()?)
                }
            }
            "cost" => NodeKind::Cost(want_expr()?),
            "stochastic" => match &nd.family {
                Some(FamilyDoc::Categorical { logits }) => {
                    let mut ls = Vec::with_capacity(logits.len());
                    for l in logits {
                        ls.push(parse(l)?);
                    }
                    NodeKind::Stochastic(DistFamily::Categorical { logits: ls })
                }
                Some(FamilyDoc::Bernoulli { prob }) => {
                    let p = parse(prob)?;
                    NodeKind::Stochastic(DistFamily::Categorical {
                        logits: vec![
                            Expr::log(Expr::sub(Expr::constant(1.0), p.clone())),
                            Expr::log(p),
                        ],
                    })
                }
                Some(FamilyDoc::Gaussian { mean, logstd }) => {
                    NodeKind::Stochastic(DistFamily::Gaussian {
                        mean: parse(mean)?,
                        logstd: parse(logstd)?,
                    })
                }
                None => {
                    return Err(GraphError::BadExpression {
                        node: nd.name.clone(),
                        err: ParseError { pos: 0, msg: "stochastic node missing family".into() },
                    })
                }
            },
            other => {
                return Err(GraphError::BadExpression {
                    node: nd.name.clone(),
                    err: ParseError { pos: 0, msg: format!("unknown kind `{other}`") },
                })
            }
        };
        decls.push(NodeDecl {
            name: nd.name.clone(),
            kind,
            parents: nd.parents.clone(),
        });
    }
    build_graph(decls)
}

/// Render a graph back to the JSON document format.
pub fn graph_to_doc(g: &Graph) -> GraphDoc {
    let mut nodes = Vec::with_capacity(g.node_count());
    for v in g.ids() {
        let info = g.info(v);
        let parent_names: Vec<String> =
            info.parents.iter().map(|p| g.name(*p).to_string()).collect();
        let parent_refs: Vec<&str> = parent_names.iter().map(|s| s.as_str()).collect();
        let (kind, family, expr) = match &info.kind {
            NodeKind::Input => ("input", None, None),
            NodeKind::Deterministic(e) => {
                ("deterministic", None, Some(print_expr(e, &parent_refs)))
            }
            NodeKind::Cost(e) => ("cost", None, Some(print_expr(e, &parent_refs))),
            NodeKind::Stochastic(DistFamily::Categorical { logits }) => (
                "stochastic",
                Some(FamilyDoc::Categorical {
                    logits: logits.iter().map(|l| print_expr(l, &parent_refs)).collect(),
                }),
                None,
            ),
            NodeKind::Stochastic(DistFamily::Gaussian { mean, logstd }) => (
                "stochastic",
                Some(FamilyDoc::Gaussian {
                    mean: print_expr(mean, &parent_refs),
                    logstd: print_expr(logstd, &parent_refs),
                }),
                None,
            ),
        };
        nodes.push(NodeDoc {
            name: info.name.clone(),
            kind: kind.to_string(),
            parents: parent_names,
            family,
            expr,
        });
    }
    GraphDoc {
        nodes,
        costs: g.costs().iter().map(|c| g.name(*c).to_string()).collect(),
    }
}
