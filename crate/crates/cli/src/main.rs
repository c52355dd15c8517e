//! `scg`: analyze graphs, run estimator experiments, verify the acceptance
//! criteria, and dump the registered fixtures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scg_cli::{config, report, verify};
use scg_core::fixtures;
use scg_core::graph::{graph_from_doc, graph_to_doc, GraphDoc};

#[derive(Parser)]
#[command(name = "scg", version, about = "Credit assignment on stochastic computation graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the set-validity analysis of a graph document or fixture.
    Analyze {
        /// Path to a graph JSON document, or a fixture name.
        graph: String,
        /// Restrict the report to one node.
        #[arg(long)]
        node: Option<String>,
    },
    /// Run the estimators of an experiment config and write the result table.
    Estimate {
        config: PathBuf,
        /// Output path (overrides the config's `output`).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the acceptance criteria and report one line per criterion.
    Verify {
        /// List the criteria without running them.
        #[arg(long)]
        list: bool,
        /// Run a single criterion by number.
        #[arg(long)]
        only: Option<usize>,
    },
    /// Work with the registered fixtures.
    Fixtures {
        /// Dump one fixture as a graph JSON document.
        #[arg(long)]
        dump: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Print, treating a closed pipe as an orderly exit rather than a panic.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let done = out
        .write_all(text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush());
    if let Err(e) = done {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Analyze { graph, node } => {
            let report = if let Some(f) = fixtures::by_name(&graph) {
                match &node {
                    None => report::fixture_report(&f),
                    Some(name) => {
                        let v = f.graph.by_name(name).map_err(|e| e.to_string())?;
                        report::AnalysisReport {
                            graph: f.name.to_string(),
                            nodes: vec![report::node_report(&f.graph, v)],
                            registered: vec![],
                        }
                    }
                }
            } else {
                let text = std::fs::read_to_string(&graph).map_err(|e| format!("{graph}: {e}"))?;
                let doc: GraphDoc = serde_json::from_str(&text).map_err(|e| {
                    format!("{graph}: {e} at line {}, column {}", e.line(), e.column())
                })?;
                let g = graph_from_doc(&doc).map_err(|e| e.to_string())?;
                let nodes = match &node {
                    None => g.ids().map(|v| report::node_report(&g, v)).collect(),
                    Some(name) => {
                        let v = g.by_name(name).map_err(|e| e.to_string())?;
                        vec![report::node_report(&g, v)]
                    }
                };
                report::AnalysisReport { graph, nodes, registered: vec![] }
            };
            emit(&serde_json::to_string_pretty(&report).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { config: path, output } => {
            let cfg = config::ExperimentConfig::from_path(&path).map_err(|e| e.to_string())?;
            let resolved = config::resolve(&cfg).map_err(|e| e.to_string())?;
            let rows = report::run_experiment(&resolved)?;
            let csv = report::to_csv(&rows);
            let out_path = output.or(cfg.output.as_ref().map(PathBuf::from));
            match out_path {
                Some(p) => std::fs::write(&p, &csv).map_err(|e| format!("{}: {e}", p.display()))?,
                None => emit(csv.trim_end_matches('\n')),
            }
            let all_pass = rows.iter().all(|r| r.gate == "pass");
            Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Verify { list, only } => {
            if list {
                for (id, name) in verify::criterion_names() {
                    println!("criterion {id}: {name}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let results = match only {
                Some(id) => vec![verify::run_criterion(id)],
                None => verify::run_all(),
            };
            let mut all_pass = true;
            for r in &results {
                match &r.outcome {
                    Ok(detail) => {
                        println!("criterion {:>2} [{}]: PASS ({detail}) [{:.1}s]", r.id, r.name, r.seconds)
                    }
                    Err(detail) => {
                        all_pass = false;
                        println!("criterion {:>2} [{}]: FAIL ({detail}) [{:.1}s]", r.id, r.name, r.seconds)
                    }
                }
            }
            Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Fixtures { dump } => {
            match dump {
                None => {
                    emit(&fixtures::fixture_names().join("\n"));
                }
                Some(name) => {
                    let f = fixtures::by_name(&name)
                        .ok_or_else(|| format!("unknown fixture `{name}`"))?;
                    let doc = graph_to_doc(&f.graph);
                    emit(&serde_json::to_string_pretty(&doc).unwrap());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
