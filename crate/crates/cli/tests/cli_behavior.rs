//! End-to-end CLI behavior: golden analysis reports, deterministic result
//! files, config validation, the fixture dump round-trip, and the
//! verification self-test hook.

use std::path::Path;
use std::process::Command;

fn scg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scg"))
}

#[test]
fn fixture_analysis_reports_match_committed_goldens() {
    for name in scg_core::fixtures::fixture_names() {
        let f = scg_core::fixtures::by_name(name).unwrap();
        let report = scg_cli::report::fixture_report(&f);
        let fresh = serde_json::to_string_pretty(&report).unwrap() + "\n";
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("golden/{name}.json"));
        let committed = std::fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("missing golden for {name}"));
        assert_eq!(fresh, committed, "golden drift for fixture {name}");
    }
}

#[test]
fn registered_verdicts_in_goldens_match_expectations() {
    for name in scg_core::fixtures::fixture_names() {
        let f = scg_core::fixtures::by_name(name).unwrap();
        let report = scg_cli::report::fixture_report(&f);
        for reg in &report.registered {
            if reg.query.starts_with("root_decomposition") {
                assert!(reg.verdict.contains("unblocked={va,vb}"), "{}", reg.verdict);
                continue;
            }
            assert_eq!(reg.verdict, reg.expect, "{name}: {}", reg.query);
        }
    }
}

#[test]
fn analyze_subcommand_prints_fixture_report() {
    let out = scg().args(["analyze", "chain2", "--node", "a0"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["nodes"][0]["name"], "a0");
    assert_eq!(parsed["nodes"][0]["kind"], "stochastic");
}

#[test]
fn analyze_reads_graph_documents_and_reports_parse_positions() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("g.json");
    std::fs::write(
        &good,
        r#"{"nodes":[{"name":"x","kind":"input"},
            {"name":"d","kind":"deterministic","parents":["x"],"expr":"(mul 2 x)"},
            {"name":"c","kind":"cost","parents":["d"],"expr":"(add d 1)"}],
           "costs":["c"]}"#,
    )
    .unwrap();
    let out = scg().args(["analyze", good.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"nodes":[{"name":"x","kind":"input"},
            {"name":"d","kind":"deterministic","parents":["x"],"expr":"(mul 2 ghost)"}],
           "costs":[]}"#,
    )
    .unwrap();
    let out = scg().args(["analyze", bad.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("d") && err.contains("ghost"), "{err}");
}

#[test]
fn fixture_dump_round_trips_through_the_document_format() {
    let out = scg().args(["fixtures", "--dump", "chain2"]).output().unwrap();
    assert!(out.status.success());
    let doc: scg_core::graph::GraphDoc =
        serde_json::from_slice(&out.stdout).expect("dump parses");
    let g = scg_core::graph::graph_from_doc(&doc).expect("dump rebuilds");
    assert_eq!(g.node_count(), scg_core::fixtures::chain2().graph.node_count());
}

#[test]
fn estimate_writes_bit_identical_results_for_identical_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.json");
    std::fs::write(
        &cfg_path,
        r#"{
          "fixture": "chain2",
          "estimators": [
            {"id": "adv", "nodes": [
              {"node": "a0",
               "critic": {"type": "value", "set": ["s0", "a0"]},
               "baseline": {"type": "value", "set": ["s0"]}},
              {"node": "a1",
               "critic": {"type": "value", "set": ["s1", "a1"]}}
            ]},
            {"id": "kstep", "nodes": [
              {"node": "a0", "critic": {"type": "kstep", "t": 0, "k": 0}}
            ]},
            {"id": "learned_baseline", "nodes": [
              {"node": "a0",
               "baseline": {"type": "value", "set": ["s0"],
                            "source": {"learned": {"samples": 4000, "seed": 9}}}}
            ]}
          ],
          "samples": 20000,
          "seed": 7
        }"#,
    )
    .unwrap();
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    for out in [&out1, &out2] {
        let st = scg()
            .args(["estimate", cfg_path.to_str().unwrap(), "-o", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = std::fs::read_to_string(&out1).unwrap();
    let b = std::fs::read_to_string(&out2).unwrap();
    assert_eq!(a, b, "result files must be bit-identical for identical config and seed");
    assert!(a.starts_with("id,mc_mean,mc_stderr,exact_mean,exact_var,gate\n"));
    assert_eq!(a.lines().count(), 4);
    for line in a.lines().skip(1) {
        assert!(line.ends_with(",pass"), "{line}");
    }
}

#[test]
fn estimate_with_menu_runs_the_registered_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("menu.json");
    std::fs::write(
        &cfg_path,
        r#"{"fixture": "noise", "menu": true, "samples": 5000, "seed": 3}"#,
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let st = scg()
        .args(["estimate", cfg_path.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5, "four noise rows plus header:\n{text}");
}

#[test]
fn empty_estimator_list_yields_empty_result_and_success() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("empty.json");
    std::fs::write(&cfg_path, r#"{"fixture": "chain2", "samples": 10, "seed": 1}"#).unwrap();
    let out = dir.path().join("out.csv");
    let st = scg()
        .args(["estimate", cfg_path.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1, "header only");
}

#[test]
fn custom_graph_configs_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = dir.path().join("coin.json");
    std::fs::write(
        &graph_path,
        r#"{"nodes":[
            {"name":"t","kind":"input"},
            {"name":"z","kind":"stochastic","parents":["t"],
             "family":{"dist":"categorical","logits":["0.0","t"]}},
            {"name":"l","kind":"cost","parents":["z"],
             "expr":"(select z 0.4 2.1)"}],
           "costs":["l"]}"#,
    )
    .unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        format!(
            r#"{{"graph": "{}", "theta": "t", "inputs": {{"t": 0.3}},
                "estimators": [
                  {{"id": "adv", "nodes": [
                    {{"node": "z", "critic": {{"type": "value", "set": ["z"]}},
                     "baseline": {{"type": "value", "set": []}}}}]}}],
                "samples": 30000, "seed": 2}}"#,
            graph_path.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let st = scg()
        .args(["estimate", cfg_path.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().ends_with(",pass"));
}

#[test]
fn unknown_config_fields_are_rejected_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.json");
    std::fs::write(
        &cfg_path,
        "{\n  \"fixture\": \"chain2\",\n  \"samples\": 10,\n  \"seed\": 1,\n  \"bogus\": true\n}",
    )
    .unwrap();
    let out = scg().args(["estimate", cfg_path.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bogus") && err.contains("line"), "{err}");
}

#[test]
fn verify_list_prints_criteria_without_running() {
    let out = scg().args(["verify", "--list"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.contains("criterion 1:"));
    assert!(text.contains("criterion 10:"));
}

#[test]
fn support_cap_env_var_limits_enumeration() {
    // With a tiny cap the exact reference is unavailable; the run still
    // completes, leaving the exact columns empty.
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.json");
    std::fs::write(
        &cfg_path,
        r#"{"fixture": "chain2", "estimators": [{"id": "emp", "nodes": []}],
            "samples": 200, "seed": 1}"#,
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let st = scg()
        .args(["estimate", cfg_path.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .env("SCG_SUPPORT_CAP", "2")
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let row = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[3], "", "exact mean must be empty under the cap: {row}");
    assert_eq!(fields[4], "", "exact var must be empty under the cap: {row}");
}

#[test]
fn tampered_exact_values_fail_a_named_criterion() {
    // The env hook corrupts exact value tables; the exact-unbiasedness gate
    // must catch it, proving the gate is wired to the real computation.
    let out = scg()
        .args(["verify", "--only", "1"])
        .env("SCG_TAMPER_EXACT_VALUE", "1")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("criterion  1") && text.contains("FAIL"), "{text}");
}
