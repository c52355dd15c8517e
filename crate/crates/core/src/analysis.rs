//! Structural analysis of stochastic computation graphs: deterministic
//! closure, d-separation, and the validity checks for baseline, critic,
//! Markov, separator, and bootstrap set choices.
//!
//! d-separation here is sound but not complete: a `true` verdict is always
//! numerically correct, while `false` may be conservative. Deterministic
//! nodes are treated as degenerate conditionals, and conditioning sets are
//! augmented with their deterministic closure before the reachability pass,
//! which recovers the functional independencies plain d-separation misses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId, NodeKind, NodeSet};

/// A conditioning set, optionally tagged with the node it conditions for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondSet {
    pub members: NodeSet,
    pub anchor: Option<NodeId>,
}

impl CondSet {
    pub fn new(members: NodeSet) -> Self {
        CondSet { members, anchor: None }
    }

    pub fn of(ids: &[NodeId]) -> Self {
        CondSet::new(ids.iter().copied().collect())
    }

    pub fn with_anchor(mut self, v: NodeId) -> Self {
        self.anchor = Some(v);
        self
    }

    pub fn empty() -> Self {
        CondSet::new(NodeSet::new())
    }
}

impl From<NodeSet> for CondSet {
    fn from(members: NodeSet) -> Self {
        CondSet::new(members)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparatorVerdict {
    NotSeparator,
    Unordered,
    OrderedOnly(Vec<NodeId>),
}

impl SeparatorVerdict {
    pub fn is_separator(&self) -> bool {
        !matches!(self, SeparatorVerdict::NotSeparator)
    }
}

/// Result of the stable-set iteration rooted at a cost node: `v_set` is the
/// converged set the cost is deterministically computable from, `w_set` the
/// stochastic ancestors of it left unblocked by the conditioning set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootDecomposition {
    pub v_set: NodeSet,
    pub w_set: NodeSet,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("part cost sets do not partition the cost-to-go of the target node")]
    DecompositionInvalid,
    #[error("node `{0}` is not stochastic")]
    NotStochastic(String),
}

// ---------------------------------------------------------------------------
// Graph view with an optional implicit log-probability node
// ---------------------------------------------------------------------------

/// Analysis view over a graph, optionally extended with one implicit
/// deterministic node representing log p(v | h_v). The implicit node is
/// materialized per query and never stored in the user's graph.
struct View<'g> {
    g: &'g Graph,
    lambda_parents: Option<Vec<NodeId>>,
}

impl<'g> View<'g> {
    fn plain(g: &'g Graph) -> Self {
        View { g, lambda_parents: None }
    }

    /// Extend with the log-probability node of `v`: a deterministic function
    /// of v and its parents.
    fn with_logp_of(g: &'g Graph, v: NodeId) -> (Self, usize) {
        let mut parents = vec![v];
        parents.extend(g.parents(v).iter().copied());
        let idx = g.node_count();
        (View { g, lambda_parents: Some(parents) }, idx)
    }

    fn len(&self) -> usize {
        self.g.node_count() + usize::from(self.lambda_parents.is_some())
    }

    fn is_lambda(&self, i: usize) -> bool {
        self.lambda_parents.is_some() && i == self.g.node_count()
    }

    fn is_stochastic(&self, i: usize) -> bool {
        !self.is_lambda(i) && self.g.kind(NodeId(i as u32)).is_stochastic()
    }

    fn is_input(&self, i: usize) -> bool {
        !self.is_lambda(i) && self.g.kind(NodeId(i as u32)).is_input()
    }

    fn parents(&self, i: usize) -> Vec<usize> {
        if self.is_lambda(i) {
            self.lambda_parents.as_ref().unwrap().iter().map(|p| p.idx()).collect()
        } else {
            self.g.parents(NodeId(i as u32)).iter().map(|p| p.idx()).collect()
        }
    }

    fn children(&self, i: usize) -> Vec<usize> {
        if self.is_lambda(i) {
            return Vec::new();
        }
        let mut out: Vec<usize> = self
            .g
            .children(NodeId(i as u32))
            .iter()
            .map(|c| c.idx())
            .collect();
        if let Some(lp) = &self.lambda_parents {
            if lp.iter().any(|p| p.idx() == i) {
                out.push(self.g.node_count());
            }
        }
        out
    }

    /// Indices (in topological order) of all view nodes.
    fn topo(&self) -> Vec<usize> {
        let mut order: Vec<usize> = self.g.order().iter().map(|v| v.idx()).collect();
        if self.lambda_parents.is_some() {
            order.push(self.g.node_count());
        }
        order
    }

    /// Nodes deterministically computable from `given`: inputs always are,
    /// functional nodes are when all their parents are, stochastic nodes only
    /// when conditioned on. One topological pass suffices.
    fn det_closure(&self, given: &[bool]) -> Vec<bool> {
        let mut closed = vec![false; self.len()];
        for i in self.topo() {
            if given[i] || self.is_input(i) {
                closed[i] = true;
            } else if !self.is_stochastic(i) {
                closed[i] = self.parents(i).iter().all(|p| closed[*p]);
            }
        }
        closed
    }

    /// Ancestor mask of the marked nodes, including the nodes themselves.
    fn ancestor_mask(&self, marked: &[bool]) -> Vec<bool> {
        let mut out = marked.to_vec();
        let mut stack: Vec<usize> = (0..self.len()).filter(|i| marked[*i]).collect();
        while let Some(i) = stack.pop() {
            for p in self.parents(i) {
                if !out[p] {
                    out[p] = true;
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Active-trail reachability: is some node of `b` d-connected to a node
    /// of `a` given the observed mask? Members of `a`/`b` inside the observed
    /// set are constants and are dropped before the walk.
    fn d_connected(&self, a: &[usize], b: &[usize], observed: &[bool]) -> bool {
        let b_mask = {
            let mut m = vec![false; self.len()];
            for &i in b {
                if !observed[i] {
                    m[i] = true;
                }
            }
            m
        };
        let obs_anc = self.ancestor_mask(observed);

        // (node, came_from_child) pairs; came_from_child=true means the trail
        // reached the node moving against an edge (from one of its children).
        let mut seen = vec![[false; 2]; self.len()];
        let mut stack: Vec<(usize, bool)> = a
            .iter()
            .filter(|i| !observed[**i])
            .map(|i| (*i, true))
            .collect();
        while let Some((x, from_child)) = stack.pop() {
            let dir = usize::from(from_child);
            if seen[x][dir] {
                continue;
            }
            seen[x][dir] = true;
            if !observed[x] && b_mask[x] {
                return true;
            }
            if from_child {
                if !observed[x] {
                    for p in self.parents(x) {
                        stack.push((p, true));
                    }
                    for c in self.children(x) {
                        stack.push((c, false));
                    }
                }
            } else {
                if !observed[x] {
                    for c in self.children(x) {
                        stack.push((c, false));
                    }
                }
                if obs_anc[x] {
                    // Collider at x is opened by observing x or a descendant.
                    for p in self.parents(x) {
                        stack.push((p, true));
                    }
                }
            }
        }
        false
    }
}

fn mask_of(view_len: usize, set: &NodeSet) -> Vec<bool> {
    let mut m = vec![false; view_len];
    for v in set {
        m[v.idx()] = true;
    }
    m
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// All nodes deterministically computable from the members of `cond`;
/// always a superset of the members themselves (plus every input node).
pub fn det_closure(g: &Graph, cond: &CondSet) -> NodeSet {
    let view = View::plain(g);
    let given = mask_of(view.len(), &cond.members);
    let closed = view.det_closure(&given);
    closed
        .iter()
        .enumerate()
        .filter(|(_, c)| **c)
        .map(|(i, _)| NodeId(i as u32))
        .collect()
}

/// Graph-informed conditional independence of `a` and `b` given `z`, with
/// the conditioning set replaced by its deterministic closure. Sound, not
/// complete.
pub fn d_separated(g: &Graph, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> bool {
    let view = View::plain(g);
    d_separated_view(&view, &index_vec(a), &index_vec(b), z)
}

fn index_vec(s: &NodeSet) -> Vec<usize> {
    s.iter().map(|v| v.idx()).collect()
}

fn d_separated_view(view: &View, a: &[usize], b: &[usize], z: &NodeSet) -> bool {
    let given = mask_of(view.len(), z);
    let observed = view.det_closure(&given);
    let a_live: Vec<usize> = a.iter().copied().filter(|i| !observed[*i]).collect();
    let b_live: Vec<usize> = b.iter().copied().filter(|i| !observed[*i]).collect();
    if a_live.is_empty() || b_live.is_empty() {
        return true;
    }
    if a_live.iter().any(|i| b_live.contains(i)) {
        // A variable is never independent of itself unless it is a constant
        // given z; be conservative.
        return false;
    }
    !view.d_connected(&a_live, &b_live, &observed)
}

/// A baseline set for `v` must avoid every descendant of `v` (including `v`).
pub fn is_valid_baseline_set(g: &Graph, v: NodeId, set: &CondSet) -> bool {
    let desc = g.descendants(v);
    set.members.is_disjoint(&desc)
}

/// A critic set for `v` must contain `v` and render log p(v) conditionally
/// independent of the not-already-determined part of the cost-to-go of `v`.
pub fn is_valid_critic_set(g: &Graph, v: NodeId, set: &CondSet) -> bool {
    if !set.members.contains(&v) {
        return false;
    }
    let (view, lambda_idx) = View::with_logp_of(g, v);
    let given = mask_of(view.len(), &set.members);
    let closed = view.det_closure(&given);
    let costs: Vec<usize> = g
        .cost_to_go_set(v)
        .iter()
        .map(|c| c.idx())
        .filter(|i| !closed[*i])
        .collect();
    if costs.is_empty() {
        return true;
    }
    d_separated_view(&view, &[lambda_idx], &costs, &set.members)
}

/// Markov check against an explicit target cost set: every node with a
/// directed path to one of the costs that is not blocked by `set` must have
/// no descendant inside `set`. Paths are blocked if any node on them,
/// endpoints included, belongs to `set`. `w` ranges over every node that is
/// not a constant: input nodes and pure functions of inputs carry no
/// randomness, so they cannot mediate the correlations the check rules out
/// (with them included, no shared-parameter policy set could ever be
/// Markov).
pub fn is_markov_for_costs(g: &Graph, set: &CondSet, costs: &NodeSet) -> bool {
    let members = &set.members;
    let constants = det_closure(g, &CondSet::empty());
    let live_costs: Vec<NodeId> = costs.iter().copied().filter(|c| !members.contains(c)).collect();
    if live_costs.is_empty() {
        return true;
    }
    // Reverse-reach from the costs through nodes outside the set: exactly the
    // nodes with an unblocked directed path to a cost.
    let mut unblocked = vec![false; g.node_count()];
    let mut stack: Vec<NodeId> = live_costs;
    while let Some(u) = stack.pop() {
        if unblocked[u.idx()] {
            continue;
        }
        unblocked[u.idx()] = true;
        for p in g.parents(u) {
            if !members.contains(p) && !unblocked[p.idx()] {
                stack.push(*p);
            }
        }
    }
    for w in g.ids() {
        if unblocked[w.idx()] && !constants.contains(&w) && !g.descendants(w).is_disjoint(members) {
            return false;
        }
    }
    true
}

/// Markov check for the cost-to-go of `v`.
pub fn is_markov(g: &Graph, set: &CondSet, v: NodeId) -> bool {
    is_markov_for_costs(g, set, &g.cost_to_go_set(v))
}

/// Union of the set with all ancestors of its members.
pub fn ancestors_closure(g: &Graph, set: &CondSet) -> NodeSet {
    let mut out = NodeSet::new();
    for v in &set.members {
        out.extend(g.ancestors(*v));
    }
    out
}

/// A baseline set is congruent with a critic set when it is a subset of it.
pub fn is_congruent(baseline: &CondSet, critic: &CondSet) -> bool {
    baseline.members.is_subset(&critic.members)
}

/// The largest baseline set congruent with `critic`: its members minus the
/// descendants of `v`.
pub fn maximal_congruent_baseline(g: &Graph, v: NodeId, critic: &CondSet) -> CondSet {
    let desc = g.descendants(v);
    CondSet::new(critic.members.difference(&desc).copied().collect())
}

/// Classify a candidate separator for `u`: does it block every
/// differentiable path from `u` into the surrogate loss, and if so, is it
/// free of internal ancestry (so member gradients may be combined without
/// hold-sets)?
///
/// Differentiable paths run through functional (deterministic and cost)
/// nodes; stochastic values cut them. Distribution parameters are
/// differentiable, so a path may end in the score term of any stochastic
/// node that has parents, and such terms cannot be blocked by graph nodes.
/// For a Gaussian `u` the score term of `u` itself also depends on its value.
pub fn separator_verdict(g: &Graph, u: NodeId, members: &[NodeId]) -> SeparatorVerdict {
    let set: NodeSet = members.iter().copied().collect();

    let escapes_from = |start: NodeId| -> bool {
        // An unblockable score sink at the start node itself.
        if matches!(
            g.kind(start),
            NodeKind::Stochastic(crate::graph::DistFamily::Gaussian { .. })
        ) && !g.parents(start).is_empty()
        {
            return true;
        }
        let mut seen = vec![false; g.node_count()];
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            if seen[p.idx()] {
                continue;
            }
            seen[p.idx()] = true;
            for &c in g.children(p) {
                match g.kind(c) {
                    NodeKind::Stochastic(_) => {
                        // The edge into c's distribution parameters is a
                        // differentiable path into c's score term, which no
                        // separator member can block (injecting at c itself
                        // is useless: the sampled value has zero gradient).
                        return true;
                    }
                    NodeKind::Cost(_) => {
                        if !set.contains(&c) {
                            return true;
                        }
                    }
                    NodeKind::Deterministic(_) => {
                        if !set.contains(&c) {
                            stack.push(c);
                        }
                    }
                    NodeKind::Input => {}
                }
            }
        }
        false
    };

    // A cost's value enters the loss directly; nothing can stand between.
    if g.kind(u).is_cost() {
        return SeparatorVerdict::NotSeparator;
    }
    if escapes_from(u) {
        return SeparatorVerdict::NotSeparator;
    }

    let mut ordered = false;
    for &vi in members {
        let desc = g.descendants(vi);
        for &vj in members {
            if vi != vj && desc.contains(&vj) {
                ordered = true;
            }
        }
    }
    if !ordered {
        SeparatorVerdict::Unordered
    } else {
        let mut sorted = members.to_vec();
        sorted.sort_by_key(|v| {
            g.order().iter().position(|o| o == v).expect("member in graph order")
        });
        SeparatorVerdict::OrderedOnly(sorted)
    }
}

/// Do the parts' cost sets partition the cost-to-go of `v`?
pub fn check_decomposition(g: &Graph, v: NodeId, parts: &[NodeSet]) -> bool {
    let target = g.cost_to_go_set(v);
    let mut seen = NodeSet::new();
    for part in parts {
        let costs = g.cost_set_of(part);
        if !seen.is_disjoint(&costs) {
            return false;
        }
        seen.extend(costs);
    }
    seen == target
}

/// Preconditions of the bootstrap identity: the parts decompose the
/// cost-to-go of `v`, and either every part's set contains `set_v`, or every
/// part's set is Markov for its costs with `set_v` inside its ancestor
/// closure.
pub fn validate_bootstrap(
    g: &Graph,
    v: NodeId,
    set_v: &CondSet,
    parts: &[(NodeSet, CondSet)],
) -> Result<bool, AnalysisError> {
    let part_sets: Vec<NodeSet> = parts.iter().map(|(p, _)| p.clone()).collect();
    if !check_decomposition(g, v, &part_sets) {
        return Err(AnalysisError::DecompositionInvalid);
    }
    let subset_branch = parts.iter().all(|(_, x)| set_v.members.is_subset(&x.members));
    if subset_branch {
        return Ok(true);
    }
    let markov_branch = parts.iter().all(|(part, x)| {
        is_markov_for_costs(g, x, &g.cost_set_of(part))
            && set_v.members.is_subset(&ancestors_closure(g, x))
    });
    Ok(markov_branch)
}

/// Stable-set iteration from a cost node: repeatedly replace deterministic
/// nodes outside the conditioning set by their parents until the set
/// stabilizes, then collect the stochastic ancestors left unblocked by the
/// conditioning set.
pub fn root_decomposition(g: &Graph, cost: NodeId, cond: &CondSet) -> RootDecomposition {
    let members = &cond.members;
    let mut v_set = NodeSet::new();
    v_set.insert(cost);
    loop {
        let mut next = NodeSet::new();
        for &x in &v_set {
            let keep = g.kind(x).is_stochastic() || g.kind(x).is_input() || members.contains(&x);
            if keep {
                next.insert(x);
            } else {
                next.extend(g.parents(x).iter().copied());
            }
        }
        if next == v_set {
            break;
        }
        v_set = next;
    }

    // Reverse-reach from the non-conditioned members of the stable set
    // through nodes outside the conditioning set.
    let targets: Vec<NodeId> = v_set.iter().copied().filter(|m| !members.contains(m)).collect();
    let mut visited = vec![false; g.node_count()];
    let mut stack = targets;
    while let Some(u) = stack.pop() {
        if visited[u.idx()] {
            continue;
        }
        visited[u.idx()] = true;
        for p in g.parents(u) {
            if !members.contains(p) && !visited[p.idx()] {
                stack.push(*p);
            }
        }
    }
    let w_set: NodeSet = g
        .ids()
        .filter(|w| visited[w.idx()] && g.kind(*w).is_stochastic())
        .collect();

    RootDecomposition { v_set, w_set }
}
