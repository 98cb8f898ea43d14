use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

/// `x⁺ = u + w` with unit weights: `K_H2 ≡ −1/2` and `T^*T ≡ 1/2`.
const SCALAR: &str = r#"{"A":[[0.0]],"B_u":[[1.0]],"B_w":[[1.0]],"Q":[[1.0]],"R":[[1.0]]}"#;
const TWO_STATE: &str = r#"{"n":2,"d":1,"p":1,"A":[[0.6,0.3],[-0.2,0.5]],"B_u":[[0.0],[1.0]],"B_w":[[1.0],[0.4]],"Q":[[2.0,0.0],[0.0,1.0]],"R":[[0.5]]}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drlqr")).current_dir(dir).args(args).output().expect("spawn drlqr")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn workspace(system: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sys.json"), system).unwrap();
    dir
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Real parts of the first entry of a grid CSV.
fn grid_real(path: PathBuf) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect()
}

fn write_constant_spectrum(path: PathBuf, n: usize, f: impl Fn(f64) -> f64) {
    let mut text = String::from("k,omega,re(v_11),im(v_11)\n");
    for k in 0..n {
        let w = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        text += &format!("{k},{w:.17e},{:.17e},0\n", f(w));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn synth_matches_scalar_closed_form_and_writes_manifest_last() {
    let dir = workspace(SCALAR);
    ok(dir.path(), &["synth", "--system", "sys.json", "--radius", "1", "--grid", "64", "--out", "out"]);
    let out = dir.path().join("out");
    let result = json(out.join("result.json"));
    // γ⋆ = c(1+r)/r = 1 and cost c(1+r)² = 2 with c = 1/2.
    assert!((result["cost"].as_f64().unwrap() - 2.0).abs() < 1e-5);
    assert!((result["gamma_star"].as_f64().unwrap() - 1.0).abs() < 1e-5);

    let manifest = json(out.join("manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["config"]["tol"].as_f64(), Some(1e-9));
    assert_eq!(manifest["config"]["gamma_tol"].as_f64(), Some(1e-6));
    assert_eq!(manifest["inputs"]["sys.json"].as_str().unwrap().len(), 64);
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in ["K.csv", "N.csv", "result.json", "convergence.csv"] {
        assert!(listed.contains(&name), "{name} missing from manifest");
    }
    let manifest_time = fs::metadata(out.join("manifest.json")).unwrap().modified().unwrap();
    for name in &listed {
        let meta = fs::metadata(out.join(name)).unwrap_or_else(|_| panic!("{name} not written"));
        assert!(meta.modified().unwrap() <= manifest_time);
    }
}

#[test]
fn small_radius_controller_approaches_h2() {
    let dir = workspace(SCALAR);
    ok(dir.path(), &["synth", "--system", "sys.json", "--radius", "1e-4", "--grid", "64", "--out", "out"]);
    let k = grid_real(dir.path().join("out/K.csv"));
    assert_eq!(k.len(), 64);
    for v in k {
        assert!((v + 0.5).abs() < 1e-3 * 0.5, "K = {v}");
    }
}

#[test]
fn missing_system_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["synth", "--system", "nowhere.json", "--radius", "1", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.json"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn bad_arguments_exit_with_input_code() {
    let dir = workspace(SCALAR);
    assert_eq!(run(dir.path(), &["synth", "--system", "sys.json"]).status.code(), Some(2));
    let out = run(dir.path(), &["eval", "--system", "sys.json", "--controller", "pid", "--radius", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["synth", "--system", "sys.json", "--radius", "1", "--grid", "100", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn order_zero_on_constant_spectrum_is_exact() {
    let dir = workspace(SCALAR);
    write_constant_spectrum(dir.path().join("n.csv"), 64, |_| 3.0);
    let out = ok(dir.path(), &["approx", "--system", "sys.json", "--nspec", "n.csv", "--order", "0", "--out", "a"]);
    assert!(!String::from_utf8_lossy(&out.stderr).contains("warning"));
    let fit = json(dir.path().join("a/fit.json"));
    assert!(fit["eps_star"].as_f64().unwrap() <= 1e-9);
    let ctrl = json(dir.path().join("a/controller.json"));
    assert_eq!(ctrl["m"], 0);
    for key in ["Ftil", "Gtil", "Htil", "Jtil", "eps_star"] {
        assert!(ctrl.get(key).is_some(), "{key}");
    }
}

#[test]
fn coarse_order_warns_about_large_error() {
    let dir = workspace(SCALAR);
    write_constant_spectrum(dir.path().join("n.csv"), 64, |w| (2.0 * w.cos()).exp());
    let out = ok(dir.path(), &["approx", "--system", "sys.json", "--nspec", "n.csv", "--order", "0", "--out", "a"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    // Best constant fit of e^{2cos ω} has error (e² − e⁻²)/2 on the grid.
    let eps = json(dir.path().join("a/fit.json"))["eps_star"].as_f64().unwrap();
    let want = (2f64.exp() - (-2f64).exp()) / 2.0;
    assert!((eps - want).abs() <= 1e-5 * want, "{eps} vs {want}");
}

#[test]
fn eval_reports_nominal_and_worst_case_costs() {
    let dir = workspace(SCALAR);
    let parse = |o: Output| -> Value { serde_json::from_slice(&o.stdout).unwrap() };
    let nominal = parse(ok(dir.path(), &["eval", "--system", "sys.json", "--controller", "h2", "--radius", "0", "--grid", "64"]));
    assert!((nominal["cost"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(nominal["gamma_star"].is_null());
    let robust = parse(ok(
        dir.path(),
        &["eval", "--system", "sys.json", "--controller", "h2", "--radius", "2", "--grid", "64", "--out", "e"],
    ));
    // c(1+r)² and c(1+r)/r with c = 1/2.
    assert!((robust["cost"].as_f64().unwrap() - 4.5).abs() < 1e-9);
    assert!((robust["gamma_star"].as_f64().unwrap() - 0.75).abs() < 1e-9);
    assert_eq!(json(dir.path().join("e/eval.json")), robust);
}

#[test]
fn dr_csv_and_realized_controller_reproduce_synthesis_cost() {
    let dir = workspace(TWO_STATE);
    let p = dir.path();
    ok(p, &["synth", "--system", "sys.json", "--radius", "1.5", "--out", "s"]);
    ok(p, &["approx", "--system", "sys.json", "--nspec", "s/N.csv", "--order", "2", "--out", "a"]);
    let cost = json(p.join("s/result.json"))["cost"].as_f64().unwrap();
    let eval = |spec: &str| -> f64 {
        let o = ok(p, &["eval", "--system", "sys.json", "--controller", spec, "--radius", "1.5"]);
        serde_json::from_slice::<Value>(&o.stdout).unwrap()["cost"].as_f64().unwrap()
    };
    assert!((eval("dr:s/K.csv") / cost - 1.0).abs() < 1e-9);
    assert!((eval("ss:a/controller.json") / cost - 1.0).abs() < 1e-3);
    assert!(cost < eval("h2") && cost < eval("hinf"));
}

#[test]
fn sweep_cost_is_monotone_and_dominated() {
    let dir = workspace(TWO_STATE);
    ok(dir.path(), &["sweep", "--system", "sys.json", "--radii", "0.01,0.1,0.5,1.5,5,10", "--out", "sw"]);
    let text = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,dr,h2,hinf"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 6);
    for w in rows.windows(2) {
        assert!(w[1][1] >= w[0][1]);
    }
    for row in &rows {
        assert!(row[1] <= row[2].min(row[3]) * (1.0 + 1e-9), "{row:?}");
    }
    assert_eq!(json(dir.path().join("sw/sweep.plot.json"))["data"], "sweep.csv");
}

#[test]
fn simulation_is_reproducible_and_worst_case_dominates() {
    let dir = workspace(TWO_STATE);
    let p = dir.path();
    ok(p, &["synth", "--system", "sys.json", "--radius", "1.5", "--out", "s"]);
    ok(p, &["approx", "--system", "sys.json", "--nspec", "s/N.csv", "--order", "2", "--out", "a"]);
    let sim = |kind: &str, out: &str| {
        let mut args = vec!["sim", "--system", "sys.json", "--controller", "a/controller.json", "--kind", kind];
        args.extend(["--seed", "7", "--trials", "40", "--out", out]);
        if kind == "worst" {
            args.extend(["--radius", "1.5"]);
        }
        ok(p, &args);
    };
    sim("white", "w1");
    sim("white", "w2");
    sim("worst", "wc");
    let a = fs::read(p.join("w1/sim_white.csv")).unwrap();
    assert_eq!(a, fs::read(p.join("w2/sim_white.csv")).unwrap());
    assert!(String::from_utf8_lossy(&a).starts_with("t,mean_cum_avg_cost,std_cum_avg_cost\n"));
    let white = json(p.join("w1/sim_white.json"))["terminal_mean"].as_f64().unwrap();
    let worst = json(p.join("wc/sim_worst.json"))["terminal_mean"].as_f64().unwrap();
    assert!(worst >= white, "{worst} < {white}");

    let out = run(p, &["sim", "--system", "sys.json", "--controller", "a/controller.json", "--kind", "worst", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}
