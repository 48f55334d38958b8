use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tracelab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("TRACELAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = tracelab(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("error body is JSON")
}

#[test]
fn middle_half_thickness_prints_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &["thickness", "--middle-alpha", "0.5", "--depth", "6"],
        dir.path(),
    );
    assert_eq!(stdout.trim().parse::<f64>().unwrap(), 0.5);
    let file = read_json(&dir.path().join("thickness.json"));
    assert_eq!(file["meta"]["config"]["command"], "thickness");
    assert_eq!(file["meta"]["version"], tracelab_version());
}

fn tracelab_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[test]
fn survivor_table_thickens_and_nests() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &["survivor", "--eps", "0.08,0.04,0.02,0.01", "--depth", "14"],
        dir.path(),
    );
    let taus: Vec<f64> = stdout
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(taus.len(), 4);
    assert!(taus.windows(2).all(|w| w[1] >= w[0]), "{taus:?}");
    let table = read_json(&dir.path().join("survivor.json"))["table"].clone();
    assert_eq!(table["monotone"], true);
    assert_eq!(table["nested"], true);
}

#[test]
fn poincare_is_byte_identical_across_runs_and_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(
        &[
            "poincare",
            "--V",
            "-0.5",
            "--random",
            "20",
            "--n",
            "300",
            "--seed",
            "3",
            "--workers",
            "1",
        ],
        a.path(),
    );
    ok(
        &[
            "poincare",
            "--V",
            "-0.5",
            "--random",
            "20",
            "--n",
            "300",
            "--seed",
            "3",
            "--workers",
            "4",
        ],
        b.path(),
    );
    let ca = std::fs::read(a.path().join("poincare.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.path().join("poincare.csv")).unwrap());
    let header = String::from_utf8(ca)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let meta: Value = serde_json::from_str(header.trim_start_matches("# ")).unwrap();
    assert_eq!(meta["config"]["V"], -0.5);
    assert_eq!(meta["rng_seed"], 3);
    assert!(meta["defaults"]["reprojection_interval"].is_number());

    let c = tempfile::tempdir().unwrap();
    ok(
        &[
            "poincare", "--V", "-0.5", "--random", "20", "--n", "300", "--seed", "4",
        ],
        c.path(),
    );
    assert_ne!(
        std::fs::read(a.path().join("poincare.csv")).unwrap(),
        std::fs::read(c.path().join("poincare.csv")).unwrap()
    );
}

#[test]
fn bottom_level_cloud_is_a_single_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["poincare", "--V", "-1", "--n", "50"], dir.path());
    let summary = &read_json(&dir.path().join("poincare.json"))["summary"];
    assert_eq!(summary["distinct_points"], 1);
}

#[test]
fn explicit_seeds_take_the_upper_sheet() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "poincare",
            "--V",
            "-0.5",
            "--seeds",
            "0.1,0.2;-0.3,0.4",
            "--n",
            "100",
        ],
        dir.path(),
    );
    let summary: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["seeds"], 2);
    assert_eq!(summary["points"], 202);
}

#[test]
fn invalid_level_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tracelab(&["poincare", "--V", "0.5", "--n", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "config");
    assert!(!dir.path().join("poincare.csv").exists());
}

#[test]
fn usage_errors_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = tracelab(&["chaos", "--res", "ten"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
    let o = Command::new(env!("CARGO_BIN_EXE_tracelab"))
        .args(["thickness", "--middle-alpha", "0.5"])
        .env("TRACELAB_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn newton_failure_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tracelab(
        &[
            "periodic",
            "--V",
            "-0.5",
            "--period",
            "3",
            "--guess",
            "0.9,0.9,-0.9",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "NoConvergence");
}

#[test]
fn standard_map_at_zero_kick_is_regular() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "chaos", "--stdmap", "--k", "0", "--res", "12", "--n", "1000",
        ],
        dir.path(),
    );
    let summary: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["chaotic_fraction"], 0.0);
    let csv = std::fs::read_to_string(dir.path().join("chaos.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 144);
}

#[test]
fn chaos_grows_toward_the_cubic() {
    let dir = tempfile::tempdir().unwrap();
    let frac = |v: &str| -> f64 {
        let s = ok(
            &["chaos", "--V", v, "--res", "30", "--n", "4000"],
            dir.path(),
        );
        serde_json::from_str::<Value>(&s).unwrap()["chaotic_fraction"]
            .as_f64()
            .unwrap()
    };
    assert!(frac("-0.2") > frac("-0.95"));
}

#[test]
fn sweep_writes_one_row_per_parameter() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "chaos", "--stdmap", "--sweep", "0,0.8,5", "--res", "8", "--n", "500",
        ],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("chaos_sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("0,"));
    assert_eq!(
        read_json(&dir.path().join("chaos_sweep.json"))["rows"]
            .as_array()
            .unwrap()
            .len(),
        3
    );
}

#[test]
fn dry_run_prints_the_plan_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let stdout = ok(&["poincare", "--V", "-0.5", "--dry-run"], &out);
    let plan: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(plan["plan"]["config"]["random"], 200);
    assert_eq!(plan["outputs"][0], "poincare.csv");
    assert!(!out.exists());
}

#[test]
fn period_two_orbit_satisfies_the_monodromy_identities() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["periodic", "--V", "-0.1"], dir.path());
    let orbit = &read_json(&dir.path().join("periodic.json"))["orbits"][0];
    assert_eq!(orbit["period"], 2);
    assert_eq!(orbit["stability"], "ReflectionHyperbolic");
    assert!(orbit["left_eigen_residual"].as_f64().unwrap() < 1e-8);
    assert!(orbit["determinant_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn continuation_writes_a_branch() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["continue", "--V", "-0.05", "--to", "-0.2"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("branch.jsonl")).unwrap();
    let lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0]["record"], "meta");
    assert!(lines
        .iter()
        .skip(1)
        .all(|l| l["record"] == "orbit" || l["record"] == "event"));
    let last = lines.iter().rev().find(|l| l["record"] == "orbit").unwrap();
    assert!((last["V"].as_f64().unwrap() + 0.2).abs() < 1e-12);
}

#[test]
fn manifold_arcs_carry_their_owner() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "manifold",
            "--V",
            "-0.05",
            "--arclength",
            "1",
            "--side",
            "unstable",
        ],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("manifold_unstable.csv")).unwrap();
    let header: Value =
        serde_json::from_str(csv.lines().next().unwrap().trim_start_matches("# ")).unwrap();
    assert_eq!(header["arc"]["owner"]["period"], 2);
    assert_eq!(header["arc"]["side"], "Unstable");
    assert_eq!(header["config"]["config"]["command"], "manifold");
    assert!(csv.lines().nth(2).unwrap().starts_with("-inf,"));
    assert!(!dir.path().join("manifold_stable.csv").exists());
}

#[test]
fn tangency_emits_events() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "tangency", "--vmin", "-0.012", "--vmax", "-0.01", "--grid", "2",
        ],
        dir.path(),
    );
    let events: Vec<Value> = serde_json::from_str(&stdout).unwrap();
    assert!(!events.is_empty());
    assert!(events
        .iter()
        .all(|e| e["V"].as_f64().unwrap() > -0.012 && e["V"].as_f64().unwrap() < -0.01));
    let file = read_json(&dir.path().join("tangency.json"));
    assert!(file["result"]["valid_events"].as_u64().unwrap() >= 1);
    assert_eq!(file["meta"]["precision"], "extended");
}

#[test]
fn tangency_range_outside_the_interval_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = tracelab(
        &["tangency", "--vmin", "-0.01", "--vmax", "-0.02"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn box_dimension_near_the_cubic_approaches_two() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "boxdim",
            "--V",
            "-0.1",
            "--res",
            "20",
            "--n",
            "2000",
            "--iterates",
            "500",
        ],
        dir.path(),
    );
    let r: Value = serde_json::from_str(&stdout).unwrap();
    assert!(r["dimension"].as_f64().unwrap() > 1.8, "{r}");
}

#[test]
fn box_dimension_of_a_written_cloud() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["poincare", "--V", "-0.2", "--grid", "6", "--n", "3000"],
        dir.path(),
    );
    let input = dir.path().join("poincare.csv");
    let stdout = ok(&["boxdim", "--input", input.to_str().unwrap()], dir.path());
    let r: Value = serde_json::from_str(&stdout).unwrap();
    assert!(r["points"].as_u64().unwrap() > 3000);
}
