use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_admpriors"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("ADMPRIORS_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV, skipping the hash comment and the header.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash: "));
    lines.next().unwrap();
    lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn published_schemas_are_current() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().args(["schema", "--out"]).arg(dir.path()).status().unwrap();
    assert!(status.success());
    let published = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema");
    for cmd in ["risk-map", "check", "mixture", "beat-uniform", "fk"] {
        let name = format!("{cmd}.schema.json");
        assert_eq!(
            json(&dir.path().join(&name)),
            json(&published.join(&name)),
            "{name} is stale; regenerate with `admpriors schema --out crates/cli/schema`"
        );
    }
}

#[test]
fn uniform_risk_map_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("risk-map", &configs().join("risk_map_uniform.json"), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("risk.csv"));
    assert_eq!(r.len(), 19 * 19);
    assert!(r.iter().all(|row| row[2].abs() < 1e-10));
}

#[test]
fn gaussian_risk_map_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("risk-map", &configs().join("risk_map_gaussian.json"), dir.path(), &[]);
    assert!(o.status.success());
    let worst = rows(&dir.path().join("risk.csv"))
        .iter()
        .map(|r| (r[2] - 2.0 * (r[0] * r[0] + r[1] * r[1] - 2.0)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn every_output_carries_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("risk-map", &configs().join("risk_map_uniform.json"), dir.path(), &[]);
    assert!(o.status.success());
    let hash = json(&dir.path().join("summary.json"))["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(json(&dir.path().join("run.json"))["config_hash"], hash.as_str());
    let csv = fs::read_to_string(dir.path().join("risk.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_hash: {hash}"));

    // Same config, same hash; a changed config changes it.
    let again = tempfile::tempdir().unwrap();
    run("risk-map", &configs().join("risk_map_uniform.json"), again.path(), &[]);
    assert_eq!(json(&again.path().join("summary.json"))["config_hash"], hash.as_str());
    let other = tempfile::tempdir().unwrap();
    run("risk-map", &configs().join("risk_map_gaussian.json"), other.path(), &[]);
    assert_ne!(json(&other.path().join("summary.json"))["config_hash"], hash.as_str());
}

#[test]
fn check_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("check_correlation.json", "admissible"),
        ("check_radial.json", "inadmissible"),
        ("check_exact.json", "inadmissible"),
    ];
    for (cfg, want) in cases {
        let out = dir.path().join(cfg);
        let o = run("check", &configs().join(cfg), &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{cfg}");
        assert_eq!(json(&out.join("verdict.json"))["verdict"], want, "{cfg}");
    }

    // The wall check alone is a necessary condition: passing it is inconclusive.
    let cfg = write(
        dir.path(),
        "walls.json",
        r#"{"prior":{"kind":"distance_to_boundary"},"covariance":{"kind":"identity","dim":1},
            "target":{"kind":"domain","lower":[0],"upper":[1],"faces":[["wall","wall"]]}}"#,
    );
    let o = run("check", &cfg, &dir.path().join("walls"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&dir.path().join("walls/verdict.json"));
    assert_eq!(v["verdict"], "inconclusive");
    assert_eq!(v["boundaries"].as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"grid":{"lower":[0],"upper":[1],"nodes":[5]},"covariance":{"kind":"identity","dim":1},"prior":{"kind":"uniform","dim":1},"extra":1}"#,
        r#"{"grid":{"lower":[0],"upper":[1],"nodes":[5]},"covariance":{"kind":"identity","dim":2},"prior":{"kind":"uniform","dim":1}}"#,
        r#"{"grid":{"lower":[0],"upper":[1],"nodes":[5]},"covariance":{"kind":"identity","dim":1}}"#,
        "not json",
    ];
    for (i, body) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.json"), body);
        let out = dir.path().join(format!("out{i}"));
        let o = run("risk-map", &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(3), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "case {i} started writing output");
    }
    // No checker for an arbitrary prior under exact classification.
    let cfg = write(dir.path(), "exact.json", r#"{"prior":{"kind":"uniform","dim":1},"target":{"kind":"exact"}}"#);
    assert_eq!(run("check", &cfg, &dir.path().join("x"), &[]).status.code(), Some(3));
    // Flags that do not apply are rejected.
    let o = run("risk-map", &configs().join("risk_map_uniform.json"), &dir.path().join("y"), &["--seed", "3"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run("fk", &configs().join("fk_gradient.json"), &dir.path().join("z"), &["--residual-tol", "1e-3"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn mixture_grid_and_wall_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("mixture", &configs().join("mixture_ellipses.json"), dir.path(), &[]);
    assert!(o.status.success());
    let info = rows(&dir.path().join("information.csv"));
    assert_eq!(info.len(), 25);
    assert!(info.iter().all(|r| r[5].is_finite() && r[7].is_finite()));
    let e = rows(&dir.path().join("ellipses.csv"));
    assert_eq!(e.len(), 25 * 65);
    // Ellipses for n = 1000 stay close to their centres.
    assert!(e.iter().all(|r| (r[3] - r[0]).abs() < 1.0 && (r[4] - r[1]).abs() < 1.0));

    let wall = tempfile::tempdir().unwrap();
    let o = run("mixture", &configs().join("mixture_wall.json"), wall.path(), &[]);
    assert!(o.status.success());
    let text = fs::read_to_string(wall.path().join("information.csv")).unwrap();
    let first = text.lines().nth(2).unwrap();
    assert!(first.starts_with("0.001,1,") && first.contains("nan"), "{first}");
    let s = json(&wall.path().join("summary.json"));
    assert_eq!(s["flagged"].as_array().unwrap().len(), 1);
    assert!(s["flagged"][0]["error"].as_str().unwrap().contains("near singular"));
}

#[test]
fn identity_mixture_gives_circles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "id.json", r#"{"theta1":[2.0],"theta2":[3.0],"n":1,"model":"identity"}"#);
    let o = run("mixture", &cfg, &dir.path().join("out"), &[]);
    assert!(o.status.success());
    let radius = (-2.0 * 0.05f64.ln()).sqrt();
    for r in rows(&dir.path().join("out/ellipses.csv")) {
        let d = ((r[3] - 2.0).powi(2) + (r[4] - 3.0).powi(2)).sqrt();
        assert!((d - radius).abs() < 1e-12);
    }
}

#[test]
fn harmonic_override_recovers_linear_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("beat-uniform", &configs().join("beat_uniform_harmonic.json"), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("summary.json"));
    assert!(s["summary"]["iterations"].as_u64().unwrap() > 0);
    assert!(s["max_gap_to_boundary_function"].as_f64().unwrap() < 1e-8);
    let p = rows(&dir.path().join("prior.csv"));
    assert_eq!(p.len(), 41 * 41);
    assert!(p.iter().all(|r| (r[2] - (1.0 + r[0] + 2.0 * r[1])).abs() < 1e-8));
}

#[test]
fn residual_tol_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("beat-uniform", &configs().join("beat_uniform_harmonic.json"), dir.path(), &["--residual-tol", "1e-4"]);
    assert!(o.status.success());
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["solver"]["config"]["residual_tol"], 1e-4);
    assert!(s["solver"]["final_residual"].as_f64().unwrap() < 1e-4);
}

#[test]
fn fk_gradient_case_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fk_gradient.json");
    let a = run("fk", &cfg, &dir.path().join("a"), &[]);
    assert!(a.status.success());
    let est = json(&dir.path().join("a/estimate.json"));
    let target = 0.5f64.exp();
    let (e, se) = (est["estimate"].as_f64().unwrap(), est["std_error"].as_f64().unwrap());
    assert!((e - target).abs() <= 3.0 * se + 1e-12, "{e} +/- {se}");
    for key in ["x0", "estimate", "std_error", "n_exited", "n_censored", "config", "config_hash"] {
        assert!(est.get(key).is_some(), "missing {key}");
    }

    let b = run("fk", &cfg, &dir.path().join("b"), &["--threads", "2"]);
    assert!(b.status.success());
    assert_eq!(est["estimate"], json(&dir.path().join("b/estimate.json"))["estimate"]);

    let c = run("fk", &cfg, &dir.path().join("c"), &["--seed", "99"]);
    assert!(c.status.success());
    let other = json(&dir.path().join("c/estimate.json"));
    assert_eq!(other["config"]["paths"]["seed"], 99);
    assert_ne!(other["config_hash"], est["config_hash"]);
}

#[test]
fn fk_harmonic_interpolation_and_path_dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("fk", &configs().join("fk_harmonic.json"), dir.path(), &[]);
    assert!(o.status.success());
    let est = json(&dir.path().join("estimate.json"));
    let (e, se) = (est["estimate"].as_f64().unwrap(), est["std_error"].as_f64().unwrap());
    let target = 0.7 * 2.0 + 0.3 * 5.0;
    assert!((e - target).abs() <= 3.0 * se, "{e} +/- {se} vs {target}");
    let paths = rows(&dir.path().join("paths.csv"));
    let ids: std::collections::BTreeSet<i64> = paths.iter().map(|r| r[0] as i64).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(paths.iter().filter(|r| r[1] == 0.0).all(|r| r[2] == 0.3));
}

#[test]
fn beat_uniform_defaults_then_risk_map_of_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bu");
    let o = run("beat-uniform", &configs().join("beat_uniform.json"), &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["passed"], true);
    assert!(s["summary"]["final_residual"].as_f64().unwrap() < 0.01);
    assert!(s["summary"]["min_gain"].as_f64().unwrap() >= -1e-8);
    assert_eq!(rows(&out.join("prior.csv")).len(), 100 * 100);
    assert_eq!(rows(&out.join("gain.csv")).len(), 98 * 98);

    // The solution read back as a prior has nowhere positive risk.
    let cfg = write(
        dir.path(),
        "rm.json",
        r#"{"covariance":{"kind":"mixture"},"prior":{"kind":"csv","path":"bu/prior.csv"}}"#,
    );
    let o = run("risk-map", &cfg, &dir.path().join("rm"), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let worst = rows(&dir.path().join("rm/risk.csv")).iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= 1e-8, "{worst}");
}
