use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bridge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridge")).args(args).output().unwrap()
}

fn bridge_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridge"))
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_writes_series_manifest_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bridge(&[
        "simulate",
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "9",
        "--amplitude",
        "0.75",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (header, rows) = csv_rows(&out.join("timeseries.csv"));
    assert_eq!(header.len(), 2 + 10 + 4);
    assert_eq!(header[0], "t_s");
    assert_eq!(header[1], "wbar_1");
    assert_eq!(header[11], "thetabar_1");
    assert_eq!(header[15], "energy_J");
    assert_eq!(rows.len(), 1201);
    assert!((rows[0][9] - 0.75).abs() < 1e-12);
    assert!((rows[1200][0] - 120.0).abs() < 1e-9);

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    let artifacts: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for name in [
        "timeseries.csv",
        "verdict.json",
        "plot_timeseries.py",
        "resolved.cfg",
        "manifest.json",
    ] {
        assert!(artifacts.contains(&name), "{name} missing from {artifacts:?}");
        assert!(out.join(name).exists());
    }
    assert_eq!(manifest["config"]["f_m"], "70.71");
    assert_eq!(manifest["config"]["method"], "explicit_rk");
    let verdict = read_json(&out.join("verdict.json"));
    assert_eq!(verdict["unstable"], false);
}

#[test]
fn rerun_from_resolved_config_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = [
        "--mode",
        "5",
        "--amplitude",
        "2.0",
        "--t-end",
        "20",
        "--method",
        "tr_bdf2",
        "--modes",
        "6,3",
    ];
    let mut first = vec!["simulate", "--out", a.to_str().unwrap()];
    first.extend(args);
    assert!(bridge(&first).status.success());
    let cfg = a.join("resolved.cfg");
    let o = bridge(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--mode",
        "5",
        "--amplitude",
        "2.0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let x = std::fs::read(a.join("timeseries.csv")).unwrap();
    let y = std::fs::read(b.join("timeseries.csv")).unwrap();
    assert_eq!(x, y);
    let (header, _) = csv_rows(&b.join("timeseries.csv"));
    assert_eq!(header.len(), 2 + 6 + 3);
}

#[test]
fn zero_amplitude_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let o = bridge(&[
        "simulate",
        "--out",
        dir.path().to_str().unwrap(),
        "--amplitude",
        "0",
        "--no-plot",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = csv_rows(&dir.path().join("timeseries.csv"));
    for row in rows {
        for v in &row[1..15] {
            assert!(v.abs() < 1e-8);
        }
    }
    assert!(!dir.path().join("plot_timeseries.py").exists());
}

#[test]
fn config_errors_exit_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "# table values\nf_m = 70.71\nL_m = long\n").unwrap();
    let o = bridge(&[
        "params-derive",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = bridge(&[
        "params-derive",
        "--config",
        dir.path().join("absent.cfg").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = bridge(&["simulate", "--modes", "ten"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(bridge(&["--help"]).status.code(), Some(0));
}

#[test]
fn params_derive_reports_table_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = bridge(&["params-derive", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let d = read_json(&dir.path().join("derived.json"));
    let h = d["horizontal_tension_n"].as_f64().unwrap();
    let lc = d["cable_length_m"].as_f64().unwrap();
    assert!((h - 45_413e3).abs() / 45_413e3 < 5e-3);
    assert!((lc - 868.815).abs() / 868.815 < 5e-4);
}

#[test]
fn threshold_for_the_ninth_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = bridge(&[
        "threshold",
        "--mode",
        "9",
        "--bracket",
        "0.5,6.0",
        "--resolution",
        "0.02",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&dir.path().join("threshold.json"));
    assert_eq!(r["mode_j"], 9);
    let th = r["threshold_bar_m"].as_f64().unwrap();
    assert!((3.87 * 0.9..=3.87 * 1.1).contains(&th), "{th}");
    let b = r["bracket_m"].as_array().unwrap();
    assert!(b[1].as_f64().unwrap() - b[0].as_f64().unwrap() <= 0.02);
    assert_eq!(r["growth_threshold"], 10.0);
    assert_eq!(r["solver_settings"]["method"], "explicit_rk");
}

#[test]
fn bracket_with_both_ends_unstable_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = bridge(&[
        "threshold",
        "--mode",
        "8",
        "--bracket",
        "5.5,6.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let msg = stderr(&o);
    assert!(
        msg.contains("lower end 5.5 m is unstable") && msg.contains("upper end 6 m is unstable"),
        "{msg}"
    );
}

#[test]
fn unknown_sweep_parameter_exits_four() {
    let o = bridge(&["sweep", "--param", "Q", "--values", "1,2"]);
    assert_eq!(o.status.code(), Some(4));
    let o = bridge(&["sweep", "--param", "f", "--values=-3"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn sag_sweep_rows_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let many = dir.path().join("many");
    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--param".into(),
            "f".into(),
            "--values".into(),
            "70.71,106.71".into(),
            "--amplitude".into(),
            "3.87".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let a = args(&one);
    let o = bridge_env(&a.iter().map(String::as_str).collect::<Vec<_>>(), "BRIDGE_WORKERS", "1");
    assert!(o.status.success(), "{}", stderr(&o));
    let b = args(&many);
    let o = bridge_env(&b.iter().map(String::as_str).collect::<Vec<_>>(), "BRIDGE_WORKERS", "2");
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(one.join("sweep.csv")).unwrap(),
        std::fs::read(many.join("sweep.csv")).unwrap()
    );

    let text = std::fs::read_to_string(one.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "true");
    let g0: f64 = rows[0][3].parse().unwrap();
    let g1: f64 = rows[1][3].parse().unwrap();
    assert!(g1 > g0, "{g0} {g1}");
    let report = read_json(&one.join("sweep.json"));
    assert_eq!(report["param"], "f");
    assert_eq!(report["points"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_adds_missing_baseline_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = bridge(&[
        "sweep",
        "--param",
        "M",
        "--values",
        "10077",
        "--amplitude",
        "3.87",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0], rows[0][1]), ("7198", "true"));
    let g0: f64 = rows[0][3].parse().unwrap();
    let g1: f64 = rows[1][3].parse().unwrap();
    assert!(g1 < g0 || rows[1][2] == "false");
}

#[test]
fn energy_audit_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bridge(&[
        "energy-audit",
        "--mode",
        "9",
        "--amplitude",
        "0.75",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&dir.path().join("energy_audit.json"));
    assert!(r["configured"]["max_relative_drift"].as_f64().unwrap() < 1e-3);
    let decades = r["decades"].as_array().unwrap();
    assert_eq!(decades.len(), 3);
    let d: Vec<f64> = decades
        .iter()
        .map(|x| x["max_relative_drift"].as_f64().unwrap())
        .collect();
    assert!(d[0] > d[2], "{d:?}");

    let rest = dir.path().join("rest");
    let o = bridge(&["energy-audit", "--amplitude", "0", "--out", rest.to_str().unwrap()]);
    assert!(o.status.success());
    let r = read_json(&rest.join("energy_audit.json"));
    let abs = r["configured"]["max_absolute_drift_j"].as_f64().unwrap();
    let e_rest = r["rest_energy_j"].as_f64().unwrap();
    assert!(abs / e_rest < 1e-12);
}
