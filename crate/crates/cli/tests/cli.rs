use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const CHAIN3: &str = r#"{"nodes": 3, "edges": [[1, 2, 0.6], [2, 3, 0.5]]}"#;

const DEPENDENT_CHAIN: &str = r#"{
  "base": {"nodes": 7, "edges": [[2, 1, -0.17], [3, 2, 0.18], [4, 1, -0.78], [5, 2, 0.74], [6, 2, -0.75], [7, 6, -0.2]]},
  "ops": [
    {"subtree_root": 2, "old_neighbor": 6, "new_neighbor": 7, "weight": -0.75},
    {"subtree_root": 6, "old_neighbor": 7, "new_neighbor": 5, "weight": -0.2}
  ]
}"#;

// Star with center 1 and branches {2, 3}, {4, 5}, {6, 7}; each op moves a
// leaf within its own branch.
const INDEPENDENT_CHAIN: &str = r#"{
  "base": {"nodes": 7, "edges": [[1, 2, 0.6], [2, 3, -0.4], [1, 4, 0.7], [4, 5, 0.3], [1, 6, -0.5], [6, 7, 0.8]]},
  "ops": [
    {"subtree_root": 1, "old_neighbor": 2, "new_neighbor": 3, "weight": 0.6},
    {"subtree_root": 1, "old_neighbor": 4, "new_neighbor": 5, "weight": 0.7}
  ]
}"#;

struct Run {
    code: i32,
    json: Value,
    stdout: String,
}

fn chernoff(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_chernoff"))
        .args(args)
        .env_remove("CHERNOFF_SEED")
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let json = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    Run { code: out.status.code().unwrap(), json, stdout }
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn tree_commands() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.json", CHAIN3);
    let det = chernoff(&["tree", "det", s(&t)]);
    assert_eq!(det.code, 0);
    assert_eq!(det.json["status"], "ok");
    assert!((f(&det.json["payload"]["determinant"]) - 0.48).abs() < 1e-12);

    let build = chernoff(&["tree", "build", s(&t)]);
    assert!((f(&build.json["payload"]["covariance"][0][2]) - 0.3).abs() < 1e-12);

    let inv = chernoff(&["tree", "invert", s(&t)]);
    assert_eq!(inv.json["payload"]["identity_check"]["passed"], true);
}

#[test]
fn malformed_and_invalid_input() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{\"nodes\": 3,");
    let r = chernoff(&["tree", "det", s(&bad)]);
    assert_eq!(r.code, 2);
    assert_eq!(r.json["status"], "error");
    assert_eq!(r.json["code"], "ParseError");

    let cyc = write(&dir, "cyc.json", r#"{"nodes": 3, "edges": [[1, 2, 0.5], [2, 1, 0.4]]}"#);
    let r = chernoff(&["tree", "build", s(&cyc)]);
    assert_eq!(r.code, 2);
    assert!(!r.json["code"].as_str().unwrap().is_empty());

    let missing = chernoff(&["tree", "det", "/nonexistent/file.json"]);
    assert_eq!(missing.code, 2);
    assert_eq!(missing.json["code"], "IoError");

    assert_eq!(chernoff(&["no-such-command"]).code, 2);
}

#[test]
fn mismatched_dimensions_are_numeric_errors() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.json", r#"{"sigma1": [[1, 0], [0, 1]], "sigma2": [[2]]}"#);
    let r = chernoff(&["ci", s(&p)]);
    assert_eq!(r.code, 3);
    assert_eq!(r.json["code"], "DimensionMismatch");
}

#[test]
fn published_spectrum() {
    let list = "9.2341,0.1019,1.2982,0.8185,1,1,1";
    let r = chernoff(&["ci", "--from-eigenvalues", list, "--reverse"]);
    assert_eq!(r.code, 0);
    assert!((f(&r.json["payload"]["ci"]) - 0.5402).abs() < 1e-3);
    assert!((f(&r.json["payload"]["lambda_star"]) - 0.5073).abs() < 5e-4);

    // Unswapped: same CI, complementary parameter.
    let r = chernoff(&["ci", "--from-eigenvalues", list, "--spectrum"]);
    assert!((f(&r.json["payload"]["ci"]) - 0.5402).abs() < 1e-3);
    assert!((f(&r.json["payload"]["lambda_star"]) - (1.0 - 0.5073)).abs() < 5e-4);
    assert_eq!(r.json["payload"]["spectrum"].as_array().unwrap().len(), 7);
}

#[test]
fn ci_of_identical_and_tree_pairs() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.json", CHAIN3);
    let r = chernoff(&["ci", s(&t), s(&t), "--lambda-star"]);
    assert_eq!(r.code, 0);
    assert_eq!(f(&r.json["payload"]["ci"]), 0.0);
    assert_eq!(r.json["payload"]["degenerate"], true);

    let pair = write(&dir, "pair.json", r#"[[[4.0]], [[1.0]]]"#);
    let r = chernoff(&["ci", s(&pair), "--lambda-star"]);
    let solver = &r.json["payload"]["solver"];
    assert!((f(&solver["divergence_to_first"]) - f(&solver["divergence_to_second"])).abs() < 1e-10);
}

#[test]
fn numbers_have_twelve_significant_digits() {
    let r = chernoff(&["ci", "--from-eigenvalues", "9"]);
    let text = r.json["payload"]["ci"].to_string();
    assert_eq!(text, "0.283449802835");
}

#[test]
fn operations() {
    let dir = TempDir::new().unwrap();
    let pair = write(
        &dir,
        "pair.json",
        r#"{"sigma1": {"nodes": 3, "edges": [[1, 2, 0.6], [2, 3, 0.5]]},
            "sigma2": {"nodes": 3, "edges": [[1, 2, 0.6], [1, 3, -0.3]]}}"#,
    );
    let add = chernoff(&["ops", "add", s(&pair), "--node", "2", "--weight", "-0.4"]);
    assert_eq!(add.code, 0, "{}", add.stdout);
    let p = &add.json["payload"];
    assert!((f(&p["before"]["ci"]) - f(&p["after"]["ci"])).abs() < 1e-9);
    assert_eq!(p["sigma1"]["nodes"], 4);

    let div = chernoff(&["ops", "divide", s(&pair), "--edge", "1,2", "--w1", "0.8", "--w2", "0.75"]);
    assert_eq!(div.code, 0, "{}", div.stdout);
    assert!((f(&div.json["payload"]["before"]["ci"]) - f(&div.json["payload"]["after"]["ci"])).abs() < 1e-9);

    let t = write(&dir, "t.json", CHAIN3);
    let g = chernoff(&["ops", "graft", s(&t), "--root", "3", "--from", "2", "--to", "1"]);
    assert_eq!(g.code, 0, "{}", g.stdout);
    assert_eq!(g.json["payload"]["weights_preserved"], true);
    assert_eq!(g.json["payload"]["determinant_before"], g.json["payload"]["determinant_after"]);

    let bad = chernoff(&["ops", "graft", s(&t), "--root", "2", "--from", "1", "--to", "3"]);
    assert_eq!(bad.code, 2);
    assert_eq!(bad.json["code"], "WouldCreateCycle");
}

#[test]
fn chain_reports() {
    let dir = TempDir::new().unwrap();
    let ind = write(&dir, "ind.json", INDEPENDENT_CHAIN);
    let r = chernoff(&["chain", s(&ind), "--verify-ordering", "--check-independence"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let p = &r.json["payload"];
    assert_eq!(p["independence"]["independent"], true);
    assert_eq!(p["ordering"]["verdict"], "Pass");
    for row in p["lambda_star"].as_array().unwrap() {
        for v in row.as_array().unwrap() {
            assert!((f(v) - 0.5).abs() < 1e-9);
        }
    }

    let dep = write(&dir, "dep.json", DEPENDENT_CHAIN);
    let r = chernoff(&["chain", s(&dep), "--verify-ordering", "--check-independence"]);
    let p = &r.json["payload"];
    assert_eq!(p["independence"]["independent"], false);
    assert_eq!(p["ordering"]["verdict"], "Observational");
    assert!(f(&p["ci"][0][2]) < f(&p["ci"][0][1]));
    let rows = p["ordering"]["violation_rows"].as_array().unwrap();
    assert!(rows.iter().any(|c| c["outer"] == serde_json::json!([0, 2]) && c["inner"] == serde_json::json!([0, 1])));

    let single = write(&dir, "single.json", &format!(r#"{{"base": {CHAIN3}, "ops": []}}"#));
    let r = chernoff(&["chain", s(&single), "--verify-ordering"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json["payload"]["trees"], 1);
    assert_eq!(r.json["payload"]["ordering"]["comparisons"], 0);
}

#[test]
fn dimension_reduction() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.json", r#"{"sigma1": [[2, 0, 0], [0, 2, 0], [0, 0, 0.5]], "sigma2": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}"#);
    let r = chernoff(&["dimred", s(&p), "--n-out", "1", "--compare-random", "200", "--compare-pca", "--seed", "5"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let pl = &r.json["payload"];
    assert_eq!(pl["candidates"].as_array().unwrap().len(), 2);
    assert!(f(&pl["random"]["max_ci"]) <= f(&pl["optimal_ci"]) + 1e-9);
    assert!(f(&pl["pca"]["ci"]) <= f(&pl["optimal_ci"]) + 1e-9);

    let full = chernoff(&["dimred", s(&p), "--n-out", "3"]);
    assert!((f(&full.json["payload"]["optimal_ci"]) - f(&full.json["payload"]["full_ci"])).abs() < 1e-12);

    let bad = chernoff(&["dimred", s(&p), "--n-out", "4"]);
    assert_eq!(bad.code, 2);
    assert_eq!(bad.json["code"], "InvalidBudget");
}

#[test]
fn simulation_is_deterministic_and_writes_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sim.json", r#"{"models": [[[9.0]], [[1.0]]], "t_grid": [2, 4, 6], "trials": 2000, "seed": 11}"#);
    let out = dir.path().join("out.json");
    let csv = dir.path().join("out.csv");
    let a = chernoff(&["simulate", s(&cfg), "--out", s(&out), "--csv", s(&csv)]);
    let b = chernoff(&["simulate", s(&cfg)]);
    assert_eq!(a.code, 0, "{}", a.stdout);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), a.stdout);
    let lines: Vec<String> = std::fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("t,error_rate"));
    assert!((f(&a.json["payload"]["full"]["predicted"]) - 0.283449802835).abs() < 1e-12);

    let text = chernoff(&["simulate", s(&cfg), "--format", "text"]);
    assert!(text.stdout.contains("fitted exponent"));
}

#[test]
fn identical_models_have_zero_exponent() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sim.json", r#"{"models": [[[2.0]], [[2.0]]], "t_grid": [1, 3, 5], "trials": 1000}"#);
    let r = chernoff(&["simulate", s(&cfg), "--seed", "1"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(f(&r.json["payload"]["full"]["fitted_exponent"]).abs() <= 0.01);
}

#[test]
fn reduced_run_reports_both_exponents() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "sim.json",
        r#"{"models": [[[6.0, 0.0], [0.0, 1.5]], [[1.0, 0.0], [0.0, 1.0]]], "t_grid": [2, 4, 6, 8], "trials": 4000, "seed": 2}"#,
    );
    let r = chernoff(&["simulate", s(&cfg), "--reduce", "1"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let p = &r.json["payload"];
    assert_eq!(p["reduced"]["n_out"], 1);
    let (fr, ff) = (f(&p["reduced"]["fitted_exponent"]), f(&p["full"]["fitted_exponent"]));
    let noise = 3.0 * f(&p["reduced"]["slope_std_error"]).hypot(f(&p["full"]["slope_std_error"]));
    assert!(fr <= ff + noise, "reduced {fr} vs full {ff}");
}

#[test]
fn config_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sim.json", r#"{"models": [[[1.0]], [[2.0]]], "t_grid": [1], "trails": 10}"#);
    let r = chernoff(&["simulate", s(&cfg)]);
    assert_eq!(r.code, 2);
    assert!(r.json["message"].as_str().unwrap().contains("trails"));

    let cfg = write(&dir, "sim2.json", r#"{"models": [[[1.0]], {"nodes": 2, "edges": [[1, 2, 1.5]]}], "t_grid": [1], "trials": 10}"#);
    let r = chernoff(&["simulate", s(&cfg)]);
    assert_eq!(r.code, 2);
    assert_eq!(r.json["code"], "WeightOutOfRange");
}

#[test]
fn seed_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sim.json", r#"{"models": [[[4.0]], [[1.0]]], "t_grid": [1, 2], "trials": 500}"#);
    let run = |seed: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_chernoff"))
            .args(["simulate", s(&cfg)])
            .env("CHERNOFF_SEED", seed)
            .output()
            .unwrap();
        serde_json::from_slice::<Value>(&out.stdout).unwrap()
    };
    assert_eq!(run("9")["payload"]["seed"], 9);
    assert_eq!(run("9"), run("9"));
}
