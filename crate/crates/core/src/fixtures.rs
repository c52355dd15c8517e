//! The desk-scale example graphs every estimator and analysis result is
//! verified against, with their canonical inputs and registered set choices.
//!
//! - `ladder_a`, `ladder_b`: small deterministic graphs with skip
//!   connections, the differentiation and separator worked examples;
//! - `noise`: a parameterized coin plus an uncontrollable symmetric payoff,
//!   the conditioning-set variance study;
//! - `noncong`: the two-branch graph where a non-congruent baseline strictly
//!   helps;
//! - `tree4`: a depth-4 chain of coins whose first cost reads the grandparent
//!   directly, giving a deliberately invalid single-node critic set;
//! - `rootdec`: the stable-set/root-decomposition scenario;
//! - `chain2`: a 2-state 2-action 2-step MDP with categorical policy, logits
//!   linear in the parameter (the second action's logit is a graph node);
//! - `chain2g`: the fully continuous Gaussian variant;
//! - `factored`: one state, two independent Gaussian action dimensions;
//! - `blackbox` (derived from `chain2`): the policy parameter itself drawn
//!   from a two-point parameterized distribution.

use crate::analysis::CondSet;
use crate::estimators::ChainLayout;
use crate::expr::Expr;
use crate::graph::{Graph, GraphBuilder, InputValues, NodeId, NodeSet};

/// A named example graph with canonical inputs and registered choices.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub graph: Graph,
    pub inputs: InputValues,
    /// The designated differentiation parameter, when the fixture has one.
    pub theta: Option<NodeId>,
    pub gh_order: usize,
    pub chain: Option<ChainLayout>,
    /// Registered set-validity queries with their expected verdicts; these
    /// drive the analysis reports and the golden files.
    pub registered: Vec<Registered>,
}

/// One registered set-validity query.
#[derive(Debug, Clone)]
pub enum Registered {
    Baseline { v: &'static str, set: Vec<&'static str>, expect: bool },
    Critic { v: &'static str, set: Vec<&'static str>, expect: bool },
    Markov { v: &'static str, set: Vec<&'static str>, expect: bool },
    Separator { u: &'static str, set: Vec<&'static str>, expect: &'static str },
}

impl Fixture {
    pub fn node(&self, name: &str) -> NodeId {
        self.graph.by_name(name).expect("fixture node name")
    }

    pub fn set(&self, names: &[&str]) -> NodeSet {
        names.iter().map(|n| self.node(n)).collect()
    }

    pub fn cond(&self, names: &[&str]) -> CondSet {
        CondSet::new(self.set(names))
    }
}

/// All registered fixtures, in a stable order.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        ladder_a(),
        ladder_b(),
        noise(),
        noncong(),
        tree4(),
        rootdec(),
        chain2(),
        chain2g(),
        factored(),
    ]
}

pub fn by_name(name: &str) -> Option<Fixture> {
    if name == "blackbox" {
        return Some(blackbox());
    }
    fixtures().into_iter().find(|f| f.name == name)
}

pub fn fixture_names() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = fixtures().iter().map(|f| f.name).collect();
    names.push("blackbox");
    names
}

/// v -> v1 = 2v, v2 = v*v1, loss = v1 + 3*v2 (= 2v + 6v^2).
pub fn ladder_a() -> Fixture {
    let mut b = GraphBuilder::new();
    let v = b.input("v");
    let v1 = b.deterministic("v1", &[v], Expr::scale(2.0, Expr::arg(0)));
    let v2 = b.deterministic("v2", &[v, v1], Expr::mul(vec![Expr::arg(0), Expr::arg(1)]));
    b.cost(
        "l",
        &[v1, v2],
        Expr::affine(0.0, vec![(1.0, Expr::arg(0)), (3.0, Expr::arg(1))]),
    );
    let graph = b.build().unwrap();
    let v = graph.by_name("v").unwrap();
    Fixture {
        name: "ladder_a",
        inputs: vec![(v, 0.5)],
        theta: Some(v),
        gh_order: 8,
        chain: None,
        registered: vec![
            Registered::Separator { u: "v", set: vec!["v1", "v2"], expect: "ordered" },
            Registered::Separator { u: "v", set: vec!["v2"], expect: "not_separator" },
        ],
        graph,
    }
}

/// Two-layer skip graph: v1 = x+1, v2 = v1 + 2x - 2, v3 = v1^2/2 + 2,
/// v4 = v2 + v3, loss = v3 * v4. At x = 1 the values are 2, 2, 4, 6, 24 and
/// the loss gradient in x is 32.
pub fn ladder_b() -> Fixture {
    let mut b = GraphBuilder::new();
    let x = b.input("x");
    let v1 = b.deterministic("v1", &[x], Expr::affine(1.0, vec![(1.0, Expr::arg(0))]));
    let v2 = b.deterministic(
        "v2",
        &[v1, x],
        Expr::affine(-2.0, vec![(1.0, Expr::arg(0)), (2.0, Expr::arg(1))]),
    );
    let v3 = b.deterministic(
        "v3",
        &[v1],
        Expr::affine(2.0, vec![(0.5, Expr::powi(Expr::arg(0), 2))]),
    );
    let v4 = b.deterministic("v4", &[v2, v3], Expr::add(vec![Expr::arg(0), Expr::arg(1)]));
    b.cost("l", &[v3, v4], Expr::mul(vec![Expr::arg(0), Expr::arg(1)]));
    let graph = b.build().unwrap();
    let x = graph.by_name("x").unwrap();
    Fixture {
        name: "ladder_b",
        inputs: vec![(x, 1.0)],
        theta: Some(x),
        gh_order: 8,
        chain: None,
        registered: vec![
            Registered::Separator { u: "x", set: vec!["v2", "v3"], expect: "unordered" },
            Registered::Separator { u: "x", set: vec!["v3", "v4"], expect: "ordered" },
            Registered::Separator { u: "x", set: vec!["v3"], expect: "not_separator" },
            Registered::Separator { u: "x", set: vec!["v1", "v2"], expect: "ordered" },
            Registered::Separator { u: "x", set: vec!["l"], expect: "unordered" },
        ],
        graph,
    }
}

/// Parameterized coin z plus an uncontrollable scaled coin feeding the same
/// loss: l = table(z) + zp with zp in {-10, +10}.
pub fn noise() -> Fixture {
    let mut b = GraphBuilder::new();
    let t = b.input("t");
    let z = b.categorical("z", &[t], vec![Expr::constant(0.0), Expr::arg(0)]);
    let u = b.categorical("u", &[], vec![Expr::constant(0.0), Expr::constant(0.0)]);
    let zp = b.deterministic("zp", &[u], Expr::affine(-10.0, vec![(20.0, Expr::arg(0))]));
    b.cost(
        "l",
        &[z, zp],
        Expr::add(vec![
            Expr::select(Expr::arg(0), vec![Expr::constant(0.4), Expr::constant(2.1)]),
            Expr::arg(1),
        ]),
    );
    let graph = b.build().unwrap();
    let t = graph.by_name("t").unwrap();
    Fixture {
        name: "noise",
        inputs: vec![(t, 0.3)],
        theta: Some(t),
        gh_order: 8,
        chain: None,
        registered: vec![
            Registered::Baseline { v: "z", set: vec!["zp"], expect: true },
            Registered::Baseline { v: "z", set: vec![], expect: true },
            Registered::Baseline { v: "z", set: vec!["l"], expect: false },
            Registered::Critic { v: "z", set: vec!["z"], expect: true },
            Registered::Critic { v: "z", set: vec!["z", "zp"], expect: true },
            Registered::Critic { v: "z", set: vec!["zp"], expect: false },
            Registered::Markov { v: "z", set: vec!["z", "zp"], expect: true },
        ],
        graph,
    }
}

/// Non-congruent baseline study: v1 ~ loss(z) + v0 + small noise and
/// v1p ~ v0 + small noise share the large hidden v0; the total loss is
/// v1 + v1p. Discretized to two-point factors so enumeration is exact.
pub fn noncong() -> Fixture {
    let mut b = GraphBuilder::new();
    let t = b.input("t");
    let z = b.categorical("z", &[t], vec![Expr::constant(0.0), Expr::arg(0)]);
    let lz = b.deterministic(
        "lz",
        &[z],
        Expr::select(Expr::arg(0), vec![Expr::constant(0.4), Expr::constant(2.1)]),
    );
    let v0 = b.categorical("v0", &[], vec![Expr::constant(0.0), Expr::constant(0.0)]);
    let v0v = b.deterministic("v0v", &[v0], Expr::affine(-4.0, vec![(8.0, Expr::arg(0))]));
    let u1 = b.categorical("u1", &[], vec![Expr::constant(0.0), Expr::constant(0.0)]);
    let u1v = b.deterministic("u1v", &[u1], Expr::affine(-0.5, vec![(1.0, Expr::arg(0))]));
    let u2 = b.categorical("u2", &[], vec![Expr::constant(0.0), Expr::constant(0.0)]);
    let u2v = b.deterministic("u2v", &[u2], Expr::affine(-0.5, vec![(1.0, Expr::arg(0))]));
    let v1 = b.deterministic(
        "v1",
        &[lz, v0v, u1v],
        Expr::add(vec![Expr::arg(0), Expr::arg(1), Expr::arg(2)]),
    );
    let v1p = b.deterministic("v1p", &[v0v, u2v], Expr::add(vec![Expr::arg(0), Expr::arg(1)]));
    b.cost("l", &[v1, v1p], Expr::add(vec![Expr::arg(0), Expr::arg(1)]));
    let graph = b.build().unwrap();
    let t = graph.by_name("t").unwrap();
    Fixture {
        name: "noncong",
        inputs: vec![(t, 0.3)],
        theta: Some(t),
        gh_order: 8,
        chain: None,
        registered: vec![
            Registered::Critic { v: "z", set: vec!["z", "v1"], expect: true },
            Registered::Baseline { v: "z", set: vec!["v1p"], expect: true },
            Registered::Baseline { v: "z", set: vec!["v0v"], expect: true },
        ],
        graph,
    }
}

/// Chain of coins v0 -> v1 -> {v2, v3} whose first cost reads both v0 and
/// v1; conditioning on v1 alone leaves the score of v1 and the costs
/// correlated through v0, so {v1} is not a critic set for v1.
pub fn tree4() -> Fixture {
    let mut b = GraphBuilder::new();
    let t = b.input("t");
    let v0 = b.categorical("v0", &[], vec![Expr::constant(0.0), Expr::constant(0.2)]);
    let v1 = b.categorical(
        "v1",
        &[t, v0],
        vec![
            Expr::constant(0.0),
            Expr::affine(-1.1, vec![(1.0, Expr::arg(0)), (2.2, Expr::arg(1))]),
        ],
    );
    let v2 = b.categorical(
        "v2",
        &[v1],
        vec![Expr::constant(0.0), Expr::affine(-0.7, vec![(1.4, Expr::arg(0))])],
    );
    let v3 = b.categorical(
        "v3",
        &[v1],
        vec![Expr::constant(0.0), Expr::affine(-0.9, vec![(1.8, Expr::arg(0))])],
    );
    b.cost(
        "l1",
        &[v0, v1],
        Expr::select(
            Expr::arg(0),
            vec![
                Expr::select(Expr::arg(1), vec![Expr::constant(0.3), Expr::constant(1.4)]),
                Expr::select(Expr::arg(1), vec![Expr::constant(1.0), Expr::constant(-0.9)]),
            ],
        ),
    );
    b.cost(
        "l3",
        &[v3],
        Expr::select(Expr::arg(0), vec![Expr::constant(0.2), Expr::constant(1.5)]),
    );
    let _ = v2;
    let graph = b.build().unwrap();
    let t = graph.by_name("t").unwrap();
    Fixture {
        name: "tree4",
        inputs: vec![(t, 0.3)],
        theta: Some(t),
        gh_order: 8,
        chain: None,
        registered: vec![
            Registered::Critic { v: "v1", set: vec!["v1"], expect: false },
            Registered::Critic { v: "v1", set: vec!["v0", "v1"], expect: true },
            Registered::Markov { v: "v1", set: vec!["v1"], expect: false },
            Registered::Markov { v: "v1", set: vec!["v0", "v1"], expect: true },
            Registered::Baseline { v: "v1", set: vec!["v0"], expect: true },
        ],
        graph,
    }
}

/// Root-decomposition scenario: stochastic chain vr -> va -> vb with a
/// deterministic side branch v2 -> v4 off the root, loss from v4 and vb.
/// Conditioning on {vr, v2, v4} leaves exactly {va, vb} to sample.
pub fn rootdec() -> Fixture {
    let mut b = GraphBuilder::new();
    let vr = b.categorical("vr", &[], vec![Expr::constant(0.0), Expr::constant(0.3)]);
    let va = b.categorical(
        "va",
        &[vr],
        vec![Expr::constant(0.0), Expr::affine(-1.2, vec![(2.4, Expr::arg(0))])],
    );
    let v2 = b.deterministic("v2", &[vr], Expr::affine(-1.0, vec![(2.0, Expr::arg(0))]));
    let vb = b.categorical(
        "vb",
        &[va],
        vec![Expr::constant(0.0), Expr::affine(-0.8, vec![(1.6, Expr::arg(0))])],
    );
    let v4 = b.deterministic("v4", &[v2], Expr::affine(0.4, vec![(0.7, Expr::arg(0))]));
    b.cost(
        "l",
        &[v4, vb],
        Expr::mul(vec![Expr::arg(0), Expr::affine(1.0, vec![(0.5, Expr::arg(1))])]),
    );
    let graph = b.build().unwrap();
    Fixture {
        name: "rootdec",
        inputs: vec![],
        theta: None,
        gh_order: 8,
        chain: None,
        registered: vec![Registered::Markov {
            v: "l",
            set: vec!["vr", "v2", "v4"],
            expect: true,
        }],
        graph,
    }
}

/// 2-state 2-action 2-step MDP with a categorical policy whose logits are
/// linear in the parameter; the second action's logit is an explicit node so
/// parameter-space critics can attach to it.
pub fn chain2() -> Fixture {
    let mut b = GraphBuilder::new();
    let t = b.input("t");
    let s0 = b.categorical("s0", &[], vec![Expr::constant(0.0), Expr::constant(0.4)]);
    let a0 = b.categorical(
        "a0",
        &[s0, t],
        vec![
            Expr::constant(0.0),
            Expr::mul(vec![
                Expr::arg(1),
                Expr::affine(1.0, vec![(0.8, Expr::arg(0))]),
            ]),
        ],
    );
    b.cost(
        "r0",
        &[s0, a0],
        Expr::select(
            Expr::arg(0),
            vec![
                Expr::select(Expr::arg(1), vec![Expr::constant(1.0), Expr::constant(0.2)]),
                Expr::select(Expr::arg(1), vec![Expr::constant(-0.3), Expr::constant(0.8)]),
            ],
        ),
    );
    let s1 = b.categorical(
        "s1",
        &[s0, a0],
        vec![
            Expr::constant(0.0),
            Expr::affine(-1.3, vec![(0.8, Expr::arg(0)), (1.8, Expr::arg(1))]),
        ],
    );
    let pi1 = b.deterministic(
        "pi1",
        &[t, s1],
        Expr::mul(vec![
            Expr::arg(0),
            Expr::affine(0.8, vec![(0.6, Expr::arg(1))]),
        ]),
    );
    let a1 = b.categorical("a1", &[pi1], vec![Expr::constant(0.0), Expr::arg(0)]);
    b.cost(
        "r1",
        &[s1, a1],
        Expr::select(
            Expr::arg(0),
            vec![
                Expr::select(Expr::arg(1), vec![Expr::constant(0.5), Expr::constant(-0.4)]),
                Expr::select(Expr::arg(1), vec![Expr::constant(1.2), Expr::constant(2.0)]),
            ],
        ),
    );
    let graph = b.build().unwrap();
    let t = graph.by_name("t").unwrap();
    let layout = ChainLayout {
        states: vec![graph.by_name("s0").unwrap(), graph.by_name("s1").unwrap()],
        actions: vec![graph.by_name("a0").unwrap(), graph.by_name("a1").unwrap()],
        rewards: vec![graph.by_name("r0").unwrap(), graph.by_name("r1").unwrap()],
    };
    Fixture {
        name: "chain2",
        inputs: vec![(t, 0.3)],
        theta: Some(t),
        gh_order: 8,
        chain: Some(layout),
        registered: vec![
            Registered::Critic { v: "a0", set: vec!["s0", "a0"], expect: true },
            Registered::Critic { v: "a1", set: vec!["s1", "a1"], expect: true },
            Registered::Critic { v: "a0", set: vec!["a0"], expect: false },
            Registered::Baseline { v: "a1", set: vec!["s0", "a0", "s1"], expect: true },
            Registered::Baseline { v: "a0", set: vec!["s1"], expect: false },
            Registered::Baseline { v: "a0", set: vec!["s0"], expect: true },
            Registered::Markov { v: "a1", set: vec!["s1", "a1"], expect: true },
            Registered::Markov { v: "a0", set: vec!["s0", "a0"], expect: true },
            Registered::Markov { v: "a0", set: vec!["a0", "r0"], expect: false },
        ],
        graph,
    }
}

/// Fully continuous Gaussian 2-step chain: polynomial means and costs keep
/// every oracle identity exact under quadrature.
pub fn chain2g() -> Fixture {
    let mut b = GraphBuilder::new();
    let t = b.input("t");
    let s0 = b.gaussian("s0", &[], Expr::constant(0.3), Expr::constant(-0.6));
    let a0 = b.gaussian(
        "a0",
        &[t, s0],
        Expr::affine(0.0, vec![(0.9, Expr::arg(0)), (0.5, Expr::arg(1))]),
        Expr::constant(-0.8),
    );
    b.cost(
        "r0",
        &[s0, a0],
        Expr::scale(
            0.5,
            Expr::powi(
                Expr::affine(0.0, vec![(1.0, Expr::arg(1)), (-0.7, Expr::arg(0))]),
                2,
            ),
        ),
    );
    let s1 = b.gaussian(
        "s1",
        &[s0, a0],
        Expr::affine(0.0, vec![(0.8, Expr::arg(0)), (0.6, Expr::arg(1))]),
        Expr::constant(-0.7),
    );
    let a1 = b.gaussian(
        "a1",
        &[t, s1],
        Expr::affine(0.0, vec![(0.7, Expr::arg(0)), (0.4, Expr::arg(1))]),
        Expr::constant(-0.8),
    );
    b.cost(
        "r1",
        &[s1, a1],
        Expr::add(vec![
            Expr::scale(
                0.5,
                Expr::powi(
                    Expr::affine(0.0, vec![(1.0, Expr::arg(1)), (-0.5, Expr::arg(0))]),
                    2,
                ),
            ),
            Expr::scale(0.2, Expr::powi(Expr::arg(0), 2)),
        ]),
    );
    let graph = b.build().unwrap();
    let t = graph.by_name("t").unwrap();
    let layout = ChainLayout {
        states: vec![graph.by_name("s0").unwrap(), graph.by_name("s1").unwrap()],
        actions: vec![graph.by_name("a0").unwrap(), graph.by_name("a1").unwrap()],
        rewards: vec![graph.by_name("r0").unwrap(), graph.by_name("r1").unwrap()],
    };
    Fixture {
        name: "chain2g",
        inputs: vec![(t, 0.3)],
        theta: Some(t),
        gh_order: 8,
        chain: Some(layout),
        registered: vec![
            Registered::Critic { v: "a0", set: vec!["s0", "a0"], expect: true },
            Registered::Critic { v: "a1", set: vec!["s1", "a1"], expect: true },
            Registered::Markov { v: "a0", set: vec!["s0", "a0"], expect: true },
            Registered::Markov { v: "a1", set: vec!["s1", "a1"], expect: true },
            Registered::Baseline { v: "a0", set: vec!["s0"], expect: true },
        ],
        graph,
    }
}

/// One discrete state, two independent Gaussian action dimensions, one
/// quadratic cost coupling them: the factored-policy study and the
/// discrete-key Gaussian-anchor setting for critic fitting.
pub fn factored() -> Fixture {
    let mut b = GraphBuilder::new();
    let t = b.input("t");
    let s = b.categorical("s", &[], vec![Expr::constant(0.0), Expr::constant(0.35)]);
    let a1 = b.gaussian(
        "a1",
        &[t, s],
        Expr::affine(-0.4, vec![(1.0, Expr::arg(0)), (0.8, Expr::arg(1))]),
        Expr::constant(-0.5),
    );
    let a2 = b.gaussian(
        "a2",
        &[t, s],
        Expr::affine(0.3, vec![(0.5, Expr::arg(0)), (-0.6, Expr::arg(1))]),
        Expr::constant(-0.5),
    );
    b.cost(
        "r",
        &[s, a1, a2],
        Expr::add(vec![
            Expr::scale(
                0.5,
                Expr::powi(
                    Expr::sub(
                        Expr::arg(1),
                        Expr::select(
                            Expr::arg(0),
                            vec![Expr::constant(0.2), Expr::constant(0.9)],
                        ),
                    ),
                    2,
                ),
            ),
            Expr::scale(
                0.5,
                Expr::powi(
                    Expr::add(vec![
                        Expr::arg(2),
                        Expr::select(
                            Expr::arg(0),
                            vec![Expr::constant(0.1), Expr::constant(-0.4)],
                        ),
                    ]),
                    2,
                ),
            ),
            Expr::mul(vec![Expr::constant(0.3), Expr::arg(1), Expr::arg(2)]),
        ]),
    );
    let graph = b.build().unwrap();
    let t = graph.by_name("t").unwrap();
    Fixture {
        name: "factored",
        inputs: vec![(t, 0.3)],
        theta: Some(t),
        gh_order: 16,
        chain: None,
        registered: vec![
            Registered::Critic { v: "a1", set: vec!["s", "a1", "a2"], expect: true },
            Registered::Critic { v: "a1", set: vec!["s", "a1"], expect: true },
            Registered::Baseline { v: "a1", set: vec!["s", "a2"], expect: true },
            Registered::Baseline { v: "a2", set: vec!["s", "a1"], expect: true },
            Registered::Markov { v: "a1", set: vec!["s", "a1"], expect: true },
        ],
        graph,
    }
}

/// Black-box variant of the chain MDP: the policy parameter is drawn from a
/// two-point distribution whose probability is controlled by the input, and
/// the whole environment is scored through that single draw.
pub fn blackbox() -> Fixture {
    let mut b = GraphBuilder::new();
    let t = b.input("t");
    let idx = b.categorical("idx", &[t], vec![Expr::constant(0.0), Expr::scale(2.0, Expr::arg(0))]);
    let tp = b.deterministic(
        "tp",
        &[idx],
        Expr::select(Expr::arg(0), vec![Expr::constant(-0.2), Expr::constant(0.8)]),
    );
    let s0 = b.categorical("s0", &[], vec![Expr::constant(0.0), Expr::constant(0.4)]);
    let a0 = b.categorical(
        "a0",
        &[s0, tp],
        vec![
            Expr::constant(0.0),
            Expr::mul(vec![
                Expr::arg(1),
                Expr::affine(1.0, vec![(0.8, Expr::arg(0))]),
            ]),
        ],
    );
    b.cost(
        "r0",
        &[s0, a0],
        Expr::select(
            Expr::arg(0),
            vec![
                Expr::select(Expr::arg(1), vec![Expr::constant(1.0), Expr::constant(0.2)]),
                Expr::select(Expr::arg(1), vec![Expr::constant(-0.3), Expr::constant(0.8)]),
            ],
        ),
    );
    let s1 = b.categorical(
        "s1",
        &[s0, a0],
        vec![
            Expr::constant(0.0),
            Expr::affine(-1.3, vec![(0.8, Expr::arg(0)), (1.8, Expr::arg(1))]),
        ],
    );
    let pi1 = b.deterministic(
        "pi1",
        &[tp, s1],
        Expr::mul(vec![
            Expr::arg(0),
            Expr::affine(0.8, vec![(0.6, Expr::arg(1))]),
        ]),
    );
    let a1 = b.categorical("a1", &[pi1], vec![Expr::constant(0.0), Expr::arg(0)]);
    b.cost(
        "r1",
        &[s1, a1],
        Expr::select(
            Expr::arg(0),
            vec![
                Expr::select(Expr::arg(1), vec![Expr::constant(0.5), Expr::constant(-0.4)]),
                Expr::select(Expr::arg(1), vec![Expr::constant(1.2), Expr::constant(2.0)]),
            ],
        ),
    );
    let graph = b.build().unwrap();
    let t = graph.by_name("t").unwrap();
    Fixture {
        name: "blackbox",
        inputs: vec![(t, 0.3)],
        theta: Some(t),
        gh_order: 8,
        chain: None,
        registered: vec![Registered::Critic { v: "idx", set: vec!["idx"], expect: true }],
        graph,
    }
}
