//! Experiment configuration: which graph, which estimator rows, how many
//! samples, which seed, where the results go. Unknown fields are rejected.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use scg_core::analysis::CondSet;
use scg_core::estimators::{
    kstep_critic, lambda_critic, BaselineChoice, CriticChoice, EstimatorSpec, NodeSpec, QHatRef,
    ValueRef,
};
use scg_core::fixtures::Fixture;
use scg_core::graph::{graph_from_doc, DistFamily, Graph, GraphDoc, InputValues, NodeKind};
use scg_core::oracle::{
    enumerate_support, exact_value, forward_value_expr, optimal_baseline, EnumerateOpts,
    SupportTable, TargetSpec,
};
use scg_core::quadrature::GaussHermite;
use scg_core::value_store::fit_on_return;
use scg_core::NodeId;

use crate::menu::{menu_for, MenuRow};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Schema(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("config references unknown node `{0}`")]
    UnknownNode(String),
    #[error("{0}")]
    Graph(#[from] scg_core::graph::GraphError),
    #[error("{0}")]
    Oracle(#[from] scg_core::oracle::OracleError),
    #[error("{0}")]
    Estimator(#[from] scg_core::estimators::EstimatorError),
    #[error("{0}")]
    ValueStore(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name of a registered fixture...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    /// ...or a path to a graph document, with the input values and the
    /// parameter to differentiate against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<String>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub inputs: std::collections::BTreeMap<String, f64>,
    /// Include the registered menu rows of the fixture.
    #[serde(default)]
    pub menu: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimators: Vec<EstimatorDoc>,
    pub samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gh_order: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorDoc {
    pub id: String,
    pub nodes: Vec<NodeDocSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDocSpec {
    pub node: String,
    #[serde(default = "default_critic")]
    pub critic: CriticDoc,
    #[serde(default = "default_baseline")]
    pub baseline: BaselineDoc,
    #[serde(default)]
    pub debias: bool,
    #[serde(default)]
    pub reparameterize: bool,
}

fn default_critic() -> CriticDoc {
    CriticDoc::Empirical
}

fn default_baseline() -> BaselineDoc {
    BaselineDoc::None
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriticDoc {
    Empirical,
    Value { set: Vec<String>, #[serde(default)] source: SourceDoc },
    Kstep { t: usize, k: usize },
    Lambda { t: usize, lambda: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineDoc {
    None,
    Value { set: Vec<String>, #[serde(default)] source: SourceDoc },
    Optimal { set: Vec<String> },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceDoc {
    #[default]
    Exact,
    Learned {
        samples: usize,
        seed: u64,
    },
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            ConfigError::Schema(format!(
                "{} at line {}, column {}",
                e,
                e.line(),
                e.column()
            ))
        })
    }
}

/// A config resolved against its graph: everything needed to run.
pub struct ResolvedExperiment {
    pub rows: Vec<MenuRow>,
    pub samples: usize,
    pub seed: u64,
}

struct SourceCtx {
    graph: Graph,
    inputs: InputValues,
    theta: Option<NodeId>,
    opts: EnumerateOpts,
    gh: GaussHermite,
    table: Option<SupportTable>,
}

impl SourceCtx {
    fn table(&mut self) -> Result<&SupportTable, ConfigError> {
        if self.table.is_none() {
            self.table = Some(enumerate_support(&self.graph, &self.inputs, self.opts)?);
        }
        Ok(self.table.as_ref().unwrap())
    }

    fn has_gaussian(&self) -> bool {
        self.graph.ids().any(|v| {
            matches!(
                self.graph.kind(v),
                NodeKind::Stochastic(DistFamily::Gaussian { .. })
            )
        })
    }

    /// Exact conditional-expectation source for the cost-to-go of `v` given
    /// `set`: a grouped table on all-discrete graphs, a symbolic forward
    /// expectation when Gaussian nodes would make table keys degenerate.
    fn value_source(&mut self, v: NodeId, set: &CondSet) -> Result<ValueRef, ConfigError> {
        if self.has_gaussian() {
            let expr = forward_value_expr(&self.graph, v, &set.members, &self.gh)?;
            Ok(ValueRef::Expr(Arc::new(expr)))
        } else {
            let g = self.graph.clone();
            let table = self.table()?;
            Ok(ValueRef::Table(Arc::new(exact_value(
                &g,
                table,
                set,
                TargetSpec::CostToGo(v),
            ))))
        }
    }

    fn learned_source(
        &mut self,
        v: NodeId,
        set: &CondSet,
        samples: usize,
        seed: u64,
    ) -> Result<ValueRef, ConfigError> {
        let (store, _) = fit_on_return(
            &self.graph,
            &self.inputs,
            set,
            TargetSpec::CostToGo(v),
            samples,
            seed,
        )
        .map_err(|e| ConfigError::ValueStore(e.to_string()))?;
        Ok(ValueRef::Learned(Arc::new(store)))
    }
}

/// Resolve a config into runnable rows.
pub fn resolve(cfg: &ExperimentConfig) -> Result<ResolvedExperiment, ConfigError> {
    let fixture: Fixture = match (&cfg.fixture, &cfg.graph) {
        (Some(name), None) => scg_core::fixtures::by_name(name)
            .ok_or_else(|| ConfigError::UnknownFixture(name.clone()))?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let doc: GraphDoc = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Schema(e.to_string()))?;
            let graph = graph_from_doc(&doc)?;
            let theta_name = cfg
                .theta
                .as_ref()
                .ok_or_else(|| ConfigError::Schema("graph configs need `theta`".into()))?;
            let theta = graph.by_name(theta_name)?;
            let mut inputs = Vec::new();
            for (name, value) in &cfg.inputs {
                inputs.push((graph.by_name(name)?, *value));
            }
            Fixture {
                name: "custom",
                graph,
                inputs,
                theta: Some(theta),
                gh_order: cfg.gh_order.unwrap_or(scg_core::oracle::DEFAULT_GH_ORDER),
                chain: None,
                registered: vec![],
            }
        }
        _ => {
            return Err(ConfigError::Schema(
                "exactly one of `fixture` or `graph` must be given".into(),
            ))
        }
    };

    let mut rows: Vec<MenuRow> = Vec::new();
    if cfg.menu {
        rows.extend(menu_for(fixture.name));
    }

    let mut ctx = SourceCtx {
        opts: EnumerateOpts {
            gh_order: cfg.gh_order.unwrap_or(fixture.gh_order),
            cap: scg_core::oracle::support_cap_from_env(),
        },
        gh: GaussHermite::new(cfg.gh_order.unwrap_or(fixture.gh_order)),
        graph: fixture.graph.clone(),
        inputs: fixture.inputs.clone(),
        theta: fixture.theta,
        table: None,
    };

    for doc in &cfg.estimators {
        let spec = build_spec(&fixture, &mut ctx, doc)?;
        rows.push(MenuRow {
            id: doc.id.clone(),
            fixture: fixture.clone(),
            spec,
        });
    }

    // A deliberately empty experiment is a valid (vacuously passing) run.
    Ok(ResolvedExperiment { rows, samples: cfg.samples, seed: cfg.seed })
}

/// Exact state-value sources for every state of a chain, resolved up front.
fn state_sources(
    ctx: &mut SourceCtx,
    layout: &scg_core::estimators::ChainLayout,
) -> Result<std::collections::HashMap<NodeId, ValueRef>, ConfigError> {
    let mut out = std::collections::HashMap::new();
    for &state in &layout.states {
        out.insert(state, ctx.value_source(state, &CondSet::of(&[state]))?);
    }
    Ok(out)
}

fn build_spec(
    fixture: &Fixture,
    ctx: &mut SourceCtx,
    doc: &EstimatorDoc,
) -> Result<EstimatorSpec, ConfigError> {
    let g = &fixture.graph;
    let mut nodes = Vec::new();
    for nd in &doc.nodes {
        let v = g.by_name(&nd.node)?;
        let resolve_set = |names: &[String]| -> Result<CondSet, ConfigError> {
            let mut set = scg_core::NodeSet::new();
            for n in names {
                set.insert(g.by_name(n)?);
            }
            Ok(CondSet::new(set))
        };
        let critic = match &nd.critic {
            CriticDoc::Empirical => CriticChoice::Empirical,
            CriticDoc::Value { set, source } => {
                let cset = resolve_set(set)?;
                let src = match source {
                    SourceDoc::Exact => ctx.value_source(v, &cset)?,
                    SourceDoc::Learned { samples, seed } => {
                        ctx.learned_source(v, &cset, *samples, *seed)?
                    }
                };
                CriticChoice::Value { set: cset, source: src }
            }
            CriticDoc::Kstep { t, k } => {
                let layout = fixture.chain.clone().ok_or_else(|| {
                    ConfigError::Schema("kstep critic needs a chain fixture".into())
                })?;
                let sources = state_sources(ctx, &layout)?;
                kstep_critic(g, &layout, *t, *k, |state| sources[&state].clone())?
            }
            CriticDoc::Lambda { t, lambda } => {
                let layout = fixture.chain.clone().ok_or_else(|| {
                    ConfigError::Schema("lambda critic needs a chain fixture".into())
                })?;
                let sources = state_sources(ctx, &layout)?;
                lambda_critic(g, &layout, *t, *lambda, |state| sources[&state].clone())?
            }
        };
        let baseline = match &nd.baseline {
            BaselineDoc::None => BaselineChoice::None,
            BaselineDoc::Value { set, source } => {
                let bset = resolve_set(set)?;
                let src = match source {
                    SourceDoc::Exact => ctx.value_source(v, &bset)?,
                    SourceDoc::Learned { samples, seed } => {
                        ctx.learned_source(v, &bset, *samples, *seed)?
                    }
                };
                BaselineChoice::Value { set: bset, source: src }
            }
            BaselineDoc::Optimal { set } => {
                let bset = resolve_set(set)?;
                let cset = match &critic {
                    CriticChoice::Value { set, .. } => set.clone(),
                    _ => {
                        return Err(ConfigError::Schema(
                            "optimal baseline needs an explicit value critic".into(),
                        ))
                    }
                };
                let theta = ctx.theta.ok_or_else(|| {
                    ConfigError::Schema("optimal baseline needs a theta input".into())
                })?;
                let g2 = ctx.graph.clone();
                let table = ctx.table()?;
                let b = optimal_baseline(&g2, table, theta, v, &cset, &bset)?;
                BaselineChoice::Optimal { set: bset, source: ValueRef::Table(Arc::new(b)) }
            }
        };
        let mut ns = NodeSpec::empirical(v).with_critic(critic).with_baseline(baseline);
        if nd.reparameterize {
            ns.reparameterized = true;
        }
        if nd.debias {
            let cset = match &ns.critic {
                CriticChoice::Value { set, .. } => set.clone(),
                _ => {
                    return Err(ConfigError::Schema(
                        "debias needs an explicit value critic set".into(),
                    ))
                }
            };
            let expr = forward_value_expr(&ctx.graph, v, &cset.members, &ctx.gh)?;
            ns = ns.with_debias(QHatRef::Expr(Arc::new(expr)));
        }
        nodes.push(ns);
    }
    Ok(EstimatorSpec::of(nodes))
}
