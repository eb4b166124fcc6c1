use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DVector;
use nlap_core::mesh::Domain;
use nlap_core::operators::stiffness_matrix;
use nlap_core::space::GalerkinSpace;
use serde_json::Value;

fn nlap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlap"))
        .args(args)
        .current_dir(dir)
        .env_remove("NLAP_THREADS")
        .output()
        .expect("nlap runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const EXP_CONFIG: &str = r#"{"N": 2, "level": 3, "a2": 0.5, "f": "exp_critical(1)", "a3": 1, "alpha": 1, "r3": 3,
    "lambda_fraction": 0.5}"#;

#[test]
fn constants_reports_alpha_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlap(&["constants"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout_json(&out);
    let alpha = report["alpha_N"].as_f64().unwrap();
    assert!((alpha - 12.566371).abs() < 1e-6);
    assert!(report["lambda"].as_f64().unwrap() < report["lambda_star"].as_f64().unwrap());
}

#[test]
fn constants_rejects_lambda_above_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlap(&["constants", "--lambda", "100"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let lambda_star = stdout_json(&out)["lambda_star"].as_f64().unwrap();
    let msg = stderr(&out);
    assert!(msg.contains("lambda*"), "{msg}");
    assert!(msg.contains(&lambda_star.to_string()), "{msg}");
}

#[test]
fn missing_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", r#"{"N": 2, "a3": 1, "alpha": 1}"#);
    let out = nlap(&["constants", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("r3"));
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", r#"{"N": 2, "a3": 1, "alpha": 1, "r3": 3, "lamda": 0.1}"#);
    let out = nlap(&["solve", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lamda"));
}

#[test]
fn solve_writes_report_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", EXP_CONFIG);
    let out = nlap(&["solve", "--config", &cfg, "--output-dir", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let run = dir.path().join("run");
    let report = read_json(&run.join("report.json"));
    assert_eq!(report["passed"], Value::Bool(true));
    assert_eq!(report["positivity"]["passed"], Value::Bool(true));
    assert_eq!(report["comparison"]["passed"], Value::Bool(true));
    assert_eq!(report["forced"], Value::Bool(false));
    let csv = std::fs::read_to_string(run.join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,u"));
    // level 3 unit square: 9 x 9 vertices
    assert_eq!(lines.count(), 81);
    assert!(run.join("v0.csv").exists());
}

#[test]
fn report_keys_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", EXP_CONFIG);
    let keys = |seed: &str, out: &str| {
        let o = nlap(&["solve", "--config", &cfg, "--seed", seed, "--output-dir", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let report = read_json(&dir.path().join(out).join("report.json"));
        report.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    assert_eq!(keys("1", "a"), keys("2", "b"));
}

#[test]
fn zero_data_gives_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.json",
        r#"{"N": 2, "a1": 0, "a2": 0, "f": "zero", "a3": 1, "alpha": 1, "r3": 3, "lambda": 0}"#,
    );
    let out = nlap(&["solve", "--config", &cfg, "--output-dir", "z"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&dir.path().join("z/report.json"));
    assert_eq!(report["passed"], Value::Bool(true));
    // what remains is the 1/n load of the last stage
    assert!(report["limit"]["max_value"].as_f64().unwrap() < 1e-5);
}

#[test]
fn linear_poisson_matches_direct_solve() {
    let dir = tempfile::tempdir().unwrap();
    let (n0, n1) = (1u64 << 28, 1u64 << 29);
    let cfg = write_config(
        dir.path(),
        "poisson.json",
        &format!(
            r#"{{"N": 2, "level": 3, "a1": 0, "a2": 0, "f": "zero", "a3": 1, "alpha": 1, "r3": 3, "lambda": 0,
                "n_schedule": [{n0}, {n1}]}}"#
        ),
    );
    let out = nlap(&["solve", "--config", &cfg, "--output-dir", "p"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&dir.path().join("p/report.json"));
    assert!(report["weak_form"]["max_defect"].as_f64().unwrap() <= 1e-10);
    let n = report["limit"]["n"].as_u64().unwrap();

    // -Δu = 1/n with u = 0 on the boundary
    let space = GalerkinSpace::build(Domain::UnitSquare, 3).unwrap();
    let load = DVector::from_vec(space.hat_integrals()) / n as f64;
    let xi = stiffness_matrix(&space).lu().solve(&load).unwrap();
    let expected = space.nodal_values(xi.as_slice());
    let csv = std::fs::read_to_string(dir.path().join("p/solution.csv")).unwrap();
    let got: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(got.len(), expected.len());
    let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() <= 1e-8 * scale, "{g} vs {e}");
    }
}

#[test]
fn solve_outside_regime_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", EXP_CONFIG);
    let out = nlap(&["solve", "--config", &cfg, "--lambda", "10", "--output-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lambda*"));

    let out = nlap(&["solve", "--config", &cfg, "--lambda", "10", "--force", "--output-dir", "f"], dir.path());
    assert_ne!(out.status.code(), Some(2), "{}", stderr(&out));
    let report = read_json(&dir.path().join("f/report.json"));
    assert_eq!(report["forced"], Value::Bool(true));
}

#[test]
fn sweep_writes_one_report_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", EXP_CONFIG);
    let out = nlap(&["solve", "--config", &cfg, "--sweep", "0.1:0.2:3", "--output-dir", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for (i, want) in [0.1, 0.15, 0.2].into_iter().enumerate() {
        let report = read_json(&dir.path().join(format!("s/lambda_{i:03}/report.json")));
        assert!((report["lambda"].as_f64().unwrap() - want).abs() < 1e-12);
    }

    let bad = nlap(&["solve", "--config", &cfg, "--sweep", "0.1:0.01:3"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn tiny_lambda_flags_the_subsolution_stage() {
    // the sublinear energy scales like λ⁴ here and drops below the tolerance
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", EXP_CONFIG);
    let out = nlap(&["solve", "--config", &cfg, "--lambda", "0.01", "--output-dir", "t"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&dir.path().join("t/report.json"));
    assert_eq!(report["failure"]["stage"], "subsolution");
    assert!(stderr(&out).contains("larger lambda"));
}

#[test]
fn check_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlap(&["check"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary = stdout_json(&out);
    assert_eq!(summary["total_failures"], 0);
    assert_eq!(summary["suites"].as_array().unwrap().len(), 5);
}

#[test]
fn check_catches_bad_nonlinearity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "neg.json",
        r#"{"N": 2, "f": "linear(-1)", "extension": "odd", "a3": 1, "alpha": 1, "r3": 3}"#,
    );
    let out = nlap(&["check", "--config", &cfg, "--suite", "fk"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let summary = stdout_json(&out);
    let suites = summary["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 1);
    assert_eq!(suites[0]["name"], "fk");
    assert_eq!(suites[0]["passed"], Value::Bool(false));
}

#[test]
fn check_rejects_unknown_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlap(&["check", "--suite", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn subsolution_writes_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlap(&["subsolution", "--level", "2", "--output-dir", "v"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout_json(&out);
    assert!(report["subsolution"]["energy"].as_f64().unwrap() < 0.0);
    assert!(dir.path().join("v/v0.csv").exists());
}

#[test]
fn mesh_export_writes_vertices_and_elements() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlap(&["mesh-export", "--domain", "unit_cube", "--level", "1", "--output-dir", "m"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let vertices = std::fs::read_to_string(dir.path().join("m/vertices.csv")).unwrap();
    assert!(vertices.starts_with("x,y,z,boundary\n"));
    assert_eq!(vertices.lines().count(), 1 + 27);
    let elements = std::fs::read_to_string(dir.path().join("m/elements.csv")).unwrap();
    assert!(elements.starts_with("v0,v1,v2,v3\n"));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_nlap"))
            .args(["constants"])
            .current_dir(dir.path())
            .env("NLAP_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(run("1").status.code(), Some(0));
    assert_eq!(run("0").status.code(), Some(2));
    assert_eq!(run("many").status.code(), Some(2));
}
