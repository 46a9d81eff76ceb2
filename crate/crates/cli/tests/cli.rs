//! Command-line behavior: exit codes, stdout/stderr contracts, dumps.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn carl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carl"))
        .args(args)
        .output()
        .unwrap()
}

fn toy_args(rest: &[&str]) -> Vec<String> {
    let root = assets().join("reviewdata");
    let mut args = vec![
        rest[0].to_string(),
        "--schema".into(),
        root.join("schema.carlschema").display().to_string(),
        "--data".into(),
        root.join("data").display().to_string(),
        "--model".into(),
        root.join("model.carl").display().to_string(),
    ];
    args.extend(rest[1..].iter().map(|s| s.to_string()));
    args
}

fn run_toy(rest: &[&str]) -> Output {
    let args = toy_args(rest);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    carl(&args)
}

#[test]
fn parse_valid_model_prints_summary() {
    let model = assets().join("reviewdata/model.carl");
    let out = carl(&["parse", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "4 rules, 0 aggregate rules"
    );
}

#[test]
fn parse_empty_model_is_fine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.carl");
    std::fs::write(&path, "# nothing\n").unwrap();
    let out = carl(&["parse", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "0 rules, 0 aggregate rules"
    );
}

#[test]
fn parse_error_exits_2_with_positioned_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.carl");
    std::fs::write(&path, "Score[S] <= Prestige[A\n").unwrap();
    let out = carl(&["parse", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let diag = stderr.lines().last().unwrap();
    let json: serde_json::Value = serde_json::from_str(diag).unwrap();
    assert_eq!(json["error"], "ParseError");
    assert!(json["message"].as_str().unwrap().contains("1:"), "{json}");
}

#[test]
fn unknown_attribute_in_query_exits_2() {
    let out = run_toy(&["answer", "--query", "Score[S] <= Fame[A] ?"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("UnknownName"), "{stderr}");
}

#[test]
fn disconnected_query_exits_3() {
    // Conference has no path to Person within one hop.
    let out = run_toy(&[
        "answer",
        "--query",
        "Qualification[A] <= Blind[C] ?",
        "--max-path-len",
        "1",
    ]);
    // Blind is categorical, hence rejected earlier as a non-binary
    // treatment (exit 2); use Prestige against itself with a broken path
    // instead: same-predicate always connects, so craft a real case.
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.carlschema"),
        "entity A\nentity B\nattribute T over A domain binary\nattribute Y over B domain real\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("A.csv"), "A\na1\n").unwrap();
    std::fs::write(dir.path().join("B.csv"), "B\nb1\n").unwrap();
    std::fs::write(dir.path().join("T.csv"), "A,value\na1,1\n").unwrap();
    std::fs::write(dir.path().join("Y.csv"), "B,value\nb1,0.5\n").unwrap();
    std::fs::write(dir.path().join("m.carl"), "Y[X] <= T[Z] WHERE A(Z), B(X)\n").unwrap();
    let out = carl(&[
        "answer",
        "--schema",
        dir.path().join("s.carlschema").to_str().unwrap(),
        "--data",
        dir.path().to_str().unwrap(),
        "--model",
        dir.path().join("m.carl").to_str().unwrap(),
        "--query",
        "Y[X] <= T[Z] ?",
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotConnected"));
}

#[test]
fn unidentifiable_query_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.carlschema"),
        "entity E\nattribute U over E domain real unobserved\nattribute T over E domain binary\nattribute Y over E domain real\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("E.csv"), "E\ne1\ne2\n").unwrap();
    std::fs::write(dir.path().join("T.csv"), "E,value\ne1,1\ne2,0\n").unwrap();
    std::fs::write(dir.path().join("Y.csv"), "E,value\ne1,0.5\ne2,0.1\n").unwrap();
    std::fs::write(
        dir.path().join("m.carl"),
        "T[X] <= U[X] WHERE E(X)\nY[X] <= T[X], U[X] WHERE E(X)\n",
    )
    .unwrap();
    let out = carl(&[
        "answer",
        "--schema",
        dir.path().join("s.carlschema").to_str().unwrap(),
        "--data",
        dir.path().to_str().unwrap(),
        "--model",
        dir.path().join("m.carl").to_str().unwrap(),
        "--query",
        "Y[X] <= T[X] ?",
    ]);
    assert_eq!(out.status.code(), Some(4), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("Unidentifiable"));
}

#[test]
fn estimator_failure_exits_5() {
    let out = run_toy(&[
        "answer",
        "--query",
        "Score[S] <= Prestige[A] ? WHEN NONE PEERS TREATED",
    ]);
    assert_eq!(out.status.code(), Some(5), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("DegenerateContrast"));
}

#[test]
fn ground_writes_graph_with_twelve_base_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = dir.path().join("graph.json");
    let out = run_toy(&["ground", "--out", graph_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&graph_path).unwrap()).unwrap();
    let nodes = json["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 12);
    assert!(nodes.iter().all(|n| n["kind"] == "base"));
}

#[test]
fn covariates_prints_one_json_line_per_unit() {
    let out = run_toy(&["covariates", "--query", "Score[S] <= Prestige[A] ?"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    let s1 = lines
        .iter()
        .find(|l| l["unit"][0] == "s1")
        .expect("s1 present");
    let z: Vec<&str> = s1["covariates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(z, vec!["Qualification[Bob]", "Qualification[Eva]"]);
}

#[test]
fn answer_emits_manifest_on_stderr() {
    let out = run_toy(&[
        "answer",
        "--query",
        "AVG_Score[A] <= Prestige[A] ?",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let manifest_line = stderr
        .lines()
        .find(|l| l.contains("\"manifest\""))
        .expect("manifest line");
    let json: serde_json::Value = serde_json::from_str(manifest_line).unwrap();
    assert_eq!(json["manifest"]["seed"], 3);
    assert!(json["manifest"]["inputs"].as_object().unwrap().len() >= 2);
    assert!(json["manifest"]["duration_ms"].is_number());
}

#[test]
fn baseline_flag_reports_universal_estimate() {
    // Five joined rows cannot fill five propensity bins; one stratum
    // reduces to a plain group contrast.
    let out = run_toy(&[
        "answer",
        "--query",
        "Score[S] <= Prestige[A] ?",
        "--baseline",
        "universal",
        "--bootstrap",
        "0",
        "--strata-bins",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let json: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stdout).trim()).unwrap();
    assert!(json["estimates"]["ate"].is_number());
    assert_eq!(json["n_units"], 5); // one row per authorship pair
}
