//! End-to-end tests of the binary: exit codes, file contents, and
//! byte-for-byte determinism of the outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entrolab"))
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.ini");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn audit(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("audit.json")).unwrap()).unwrap()
}

/// Parse trace.csv into (header, rows).
fn trace(dir: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(dir.join("trace.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

const CLOSED_UNIFORM: &str = "\
kind = heat-closed

[grid]
cells = 24
length = 1.0

[model]
thermo = ideal-monatomic
kappa = constant:1.0

[time]
steps = 30

[initial]
profile = uniform:2.0
";

#[test]
fn list_models_is_stable_and_complete() {
    let first = run_ok(&["list-models"]);
    let second = run_ok(&["list-models"]);
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    for needle in [
        "identity",
        "power:<p>",
        "saturating",
        "zrp-linear:<z>",
        "zrp-constant:<z>",
        "occupation cap 512",
        "fugacities [",
        "ideal-monatomic",
        "proportional:<a>",
    ] {
        assert!(text.contains(needle), "missing {needle} in:\n{text}");
    }
}

#[test]
fn uniform_closed_run_is_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), CLOSED_UNIFORM);
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "heat-closed",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let report = audit(&out_dir);
    assert_eq!(report["verdict"], "stationary");
    assert_eq!(report["kind"], "heat-closed");
    let (header, rows) = trace(&out_dir);
    let s_col = header.iter().position(|c| c == "S_le").unwrap();
    let first = rows[0][s_col];
    for row in &rows {
        assert!(
            (row[s_col] - first).abs() <= 1e-12 * first.abs(),
            "entropy moved on a uniform state: {} vs {first}",
            row[s_col]
        );
    }
}

#[test]
fn perturbed_density_run_is_monotone_decreasing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "\
kind = zrp-pde

[grid]
cells = 80
length = 1.0

[model]
sigma = power:2.0
rho_left = 1.0
rho_right = 2.0

[time]
dt = auto
t_end = 0.001

[initial]
profile = perturb-stationary:0.2,2
",
    );
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "zrp-pde",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let report = audit(&out_dir);
    assert_eq!(report["verdict"], "monotone");
    assert_eq!(report["direction"], "decreasing");
    let (header, rows) = trace(&out_dir);
    let f_col = header.iter().position(|c| c == "F_zrp").unwrap();
    for pair in rows.windows(2) {
        assert!(
            pair[1][f_col] < pair[0][f_col],
            "rate functional rose: {} -> {}",
            pair[0][f_col],
            pair[1][f_col]
        );
    }
}

#[test]
fn ldf_check_reports_the_relative_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "\
kind = ldf-check

[zrp]
sites = 256
rate = linear
z_left = 1.0
z_right = 2.0

[ldf]
coarse_cells = 4
targets = 2.2,1.6,0.9,1.0
",
    );
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "ldf-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let report = audit(&out_dir);
    let empirical = report["empirical"].as_f64().unwrap();
    let functional = report["functional"].as_f64().unwrap();
    let gap = report["relative_gap"].as_f64().unwrap();
    assert!(empirical > 0.0 && functional > 0.0);
    assert!(gap < 0.05, "gap {gap} too large");
    let (header, rows) = trace(&out_dir);
    assert_eq!(header[0], "cell");
    assert_eq!(rows.len(), 4);
    let total: f64 = rows.iter().map(|r| r[3]).sum();
    assert!(
        (total - functional).abs() <= 1e-12 * functional,
        "per-cell rates {total} do not add up to {functional}"
    );
}

#[test]
fn reruns_are_byte_identical_without_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), CLOSED_UNIFORM);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&[
            "heat-closed",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--no-timestamp",
        ]);
    }
    for name in ["trace.csv", "audit.json", "plotspec.txt"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn timestamp_appears_unless_suppressed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), CLOSED_UNIFORM);
    let stamped = tmp.path().join("stamped");
    run_ok(&[
        "heat-closed",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        stamped.to_str().unwrap(),
    ]);
    assert!(audit(&stamped)["generated_at"].is_u64());
    let bare = tmp.path().join("bare");
    run_ok(&[
        "heat-closed",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        bare.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert!(audit(&bare).get("generated_at").is_none());
}

const MC_CFG: &str = "\
kind = zrp-mc
seed = 11

[zrp]
sites = 6
rate = linear
z_left = 1.0
z_right = 2.0
burn_in = 20.0
thin = 2.0
samples = 50
";

#[test]
fn seed_flag_overrides_the_config_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), MC_CFG);
    let run_with = |dir: &Path, extra: &[&str]| {
        let mut args = vec![
            "zrp-mc",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--no-timestamp",
        ];
        args.extend_from_slice(extra);
        run_ok(&args);
    };
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    run_with(&a, &["--seed", "99"]);
    run_with(&b, &["--seed", "99"]);
    run_with(&c, &[]);
    assert_eq!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(b.join("trace.csv")).unwrap()
    );
    assert_ne!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(c.join("trace.csv")).unwrap(),
        "seed 99 and seed 11 produced the same event chain"
    );
    assert_eq!(audit(&a)["seed"], 99);
    assert_eq!(audit(&c)["seed"], 11);
}

#[test]
fn unknown_and_missing_keys_exit_2_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        &CLOSED_UNIFORM.replace("[grid]\n", "[grid]\ntypo = 3\n"),
    );
    let out = bin()
        .args(["heat-closed", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(stderr.contains("[grid].typo"), "{stderr}");

    let cfg = write_cfg(tmp.path(), &CLOSED_UNIFORM.replace("kappa = constant:1.0\n", ""));
    let out = bin()
        .args(["heat-closed", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(stderr.contains("[model].kappa"), "{stderr}");
}

#[test]
fn mismatched_kind_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), CLOSED_UNIFORM);
    let out = bin()
        .args(["heat-bath", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(stderr.contains("heat-closed"), "{stderr}");
}

#[test]
fn unstable_step_exits_3_with_the_step_number() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "\
[grid]
cells = 24
length = 1.0

[model]
thermo = ideal-monatomic
kappa = constant:1.0

[time]
dt = 10.0
steps = 5

[initial]
profile = sin:2.0,1.0,1
",
    );
    let out = bin()
        .args([
            "heat-closed",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(stderr.contains("step 1"), "{stderr}");
}

#[test]
fn resolution_sweep_reports_second_order_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "\
kind = heat-bath

[grid]
cells = 24
length = 1.0

[model]
thermo = ideal-monatomic
kappa = constant:1.0
bath_temperature = 1.5

[time]
dt = auto
t_end = 0.01

[initial]
profile = sin:2.25,0.9,1
",
    );
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "heat-bath",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
        "--resolution-sweep",
    ]);
    let report = audit(&out_dir);
    let sweep = &report["sweep"];
    let orders = sweep["order"].as_array().unwrap();
    for p in orders {
        let p = p.as_f64().unwrap();
        assert!(p > 1.5, "order {p} below first refinement expectations");
    }
    let residuals = sweep["max_residual"].as_array().unwrap();
    assert!(residuals[0].as_f64().unwrap() > residuals[2].as_f64().unwrap());
    // The same flag is rejected where no resolution exists to sweep.
    let mc_cfg = write_cfg(tmp.path(), MC_CFG);
    let out = bin()
        .args([
            "zrp-mc",
            "--config",
            mc_cfg.to_str().unwrap(),
            "--resolution-sweep",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verdict_is_recomputable_from_the_trace_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "\
kind = heat-bath

[grid]
cells = 32
length = 1.0

[model]
thermo = ideal-monatomic
kappa = constant:1.0
bath_temperature = 1.5

[time]
dt = auto
t_end = 0.005
record_every = 3

[initial]
profile = sin:2.25,0.9,1
",
    );
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "heat-bath",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let report = audit(&out_dir);
    let (header, rows) = trace(&out_dir);
    let col = |name: &str| header.iter().position(|c| c == name).unwrap();
    let (t, f, p, r) = (col("t"), col("F_canonical"), col("production"), col("residual"));

    // Recompute the residual column from the t, F, and production columns.
    for pair in rows.windows(2) {
        let dt = pair[1][t] - pair[0][t];
        let df_dt = (pair[1][f] - pair[0][f]) / dt;
        let prod = 0.5 * (pair[0][p] + pair[1][p]);
        let expect = (df_dt + prod).abs();
        let got = pair[1][r];
        assert!(
            (got - expect).abs() <= 1e-9 * expect.abs().max(1e-12),
            "residual column {got} vs recomputed {expect}"
        );
    }

    // Recompute the verdict from the audited column.
    let values: Vec<f64> = rows.iter().map(|row| row[f]).collect();
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let monotone = values.windows(2).all(|w| w[1] - w[0] <= 1e-12 * scale);
    assert!(monotone);
    assert_eq!(report["verdict"], "monotone");
    assert_eq!(report["audited_column"], "F_canonical");
    assert_eq!(
        report["max_residual"].as_f64().unwrap(),
        rows.iter().map(|row| row[r]).fold(0.0, f64::max),
        "audit max_residual disagrees with the residual column"
    );
}

#[test]
fn bgk_equilibrium_start_is_stationary_and_conserving() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "\
kind = bgk

[kinetic]
dim = 1
nodes = 48
v_max = 7.0
tau = 1.0
initial = maxwellian:1.0,1.0

[time]
steps = 40
",
    );
    let out_dir = tmp.path().join("out");
    run_ok(&[
        "bgk",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    let report = audit(&out_dir);
    assert_eq!(report["verdict"], "stationary");
    assert!(report["monotone"].as_bool().unwrap());
    let drift = &report["conservation_drift"];
    for key in ["particles", "momentum", "energy"] {
        assert!(drift[key].as_f64().unwrap() < 1e-12, "{key} drifted");
    }
    let (header, _) = trace(&out_dir);
    assert_eq!(header, ["t", "S_gas", "N", "P_x", "E"]);
}
