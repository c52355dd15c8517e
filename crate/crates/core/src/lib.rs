//! Credit assignment on stochastic computation graphs.
//!
//! The crate models directed acyclic graphs of input, stochastic,
//! deterministic, and cost nodes, and provides:
//!
//! - forward sampling and reverse-mode differentiation over recorded tapes,
//!   with hold-sets and separator-regrouped ("horizon") backpropagation;
//! - structural analysis: deterministic closure, sound d-separation, and the
//!   validity checks behind baseline, critic, Markov, separator, and
//!   bootstrap set choices;
//! - an exact enumeration oracle (Gauss–Hermite atoms for Gaussian nodes)
//!   for values, critics, gradient-critics, parameter gradients, numeric
//!   conditional independence, and estimator moments;
//! - the estimator menu itself: surrogate losses, score-function and
//!   pathwise estimators, partial averages and k-step / lambda-weighted
//!   returns, optimal baselines, gradient-critic and debiased estimators;
//! - learned value stores (tabular and per-key polynomial) trained by
//!   regression on return, bootstrap targets, or the combined value+gradient
//!   loss;
//! - the desk-scale example graphs everything is verified against.

pub mod analysis;
pub mod autodiff;
pub mod estimators;
pub mod expr;
pub mod fixtures;
pub mod graph;
pub mod oracle;
pub mod quadrature;
pub mod value_store;

pub use analysis::{CondSet, SeparatorVerdict};
pub use expr::Expr;
pub use graph::{Assignment, Graph, GraphBuilder, NodeId, NodeSet};
