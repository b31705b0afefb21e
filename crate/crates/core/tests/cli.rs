use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::process::{Command, Output};

fn optoweak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optoweak")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Header row and data rows of a CSV report.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().expect("header row").split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn summary(text: &str, key: &str) -> String {
    let prefix = format!("# summary.{key}=");
    text.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("no {key}")).to_string()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn sweep_defaults_start_at_delta_min() {
    let o = optoweak(&["sweep"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let (header, rows) = table(&text);
    assert_eq!(header, ["N", "delta", "ps_probability", "f", "regime_ok"]);
    assert_eq!(rows.len(), 200);
    assert!((num(&rows[0][1]) - 0.1).abs() < 1e-12);
    assert!((num(&rows[0][2]) - 0.01).abs() < 1e-12);
    assert!((num(&rows[0][3]) - 28.14).abs() < 0.01);
    assert_eq!(rows[0][3], "2.81424945589e1");
    assert!(text.contains("# config.g0=5.00000000000e2"));
}

#[test]
fn coherent_sweep_is_n_independent() {
    let o = optoweak(&["sweep", "--state", "coherent", "--N", "1,10,50", "--delta-grid", "0.4:0.9:6"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = table(&stdout(&o));
    assert_eq!(rows.len(), 18);
    for i in 0..6 {
        assert_eq!(rows[i][3], rows[i + 6][3]);
        assert_eq!(rows[i][3], rows[i + 12][3]);
        assert_ne!(rows[i][2], rows[i + 12][2]);
    }
}

#[test]
fn empty_n_list_is_a_usage_error() {
    assert_eq!(optoweak(&["sweep", "--N", ""]).status.code(), Some(1));
    assert_eq!(optoweak(&["sweep", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(optoweak(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(optoweak(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_passes_in_regime() {
    let o = optoweak(&["verify", "--N", "5", "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let (header, rows) = table(&text);
    assert_eq!(header, ["t", "exact", "analytic", "residual"]);
    assert_eq!(rows.len(), 12);
    assert_eq!(summary(&text, "pass"), "true");
    assert!(num(&summary(&text, "amplitude_relative_error")) <= num(&summary(&text, "tolerance")));
}

#[test]
fn verify_refuses_outside_regime() {
    let o = optoweak(&["verify", "--N", "5", "--delta", &format!("{}", 1e-3 * 5f64.sqrt())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("regime"));
}

#[test]
fn verify_zero_coupling_is_free_evolution() {
    for state in ["thermal", "coherent", "fock"] {
        let o = optoweak(&["verify", "--g0", "0", "--state", state, "--N", "3", "--delta", "0.3", "--theta", "0.7"]);
        assert_eq!(o.status.code(), Some(0), "{state}");
        let (_, rows) = table(&stdout(&o));
        assert!(rows.iter().all(|r| num(&r[3]).abs() <= 1e-10), "{state}");
    }
}

#[test]
fn weak_values_table() {
    let o = optoweak(&["weak-values", "--delta", "0.1", "--theta", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = table(&stdout(&o));
    assert_eq!(header, ["operator", "re", "im", "modulus", "phase", "anomalous"]);
    let modulus = 0.99f64.sqrt() / (2f64.sqrt() * 0.1);
    assert!((num(&rows[0][3]) - modulus).abs() < 1e-10);
    assert!((num(&rows[0][3]) - 7.036).abs() < 1e-3);
    assert!((num(&rows[0][4]) - FRAC_PI_2).abs() < 1e-10);
    assert!((num(&rows[1][4]).abs() - PI).abs() < 1e-10);
    assert_eq!(rows[0][5], "true");

    let o = optoweak(&["weak-values", "--delta", &format!("{FRAC_1_SQRT_2}")]);
    let (_, rows) = table(&stdout(&o));
    assert!((num(&rows[0][3]) - FRAC_1_SQRT_2).abs() < 1e-4);
    assert_eq!(rows[0][5], "false");

    assert_eq!(optoweak(&["weak-values", "--delta", "1.0"]).status.code(), Some(1));
    assert_eq!(optoweak(&["weak-values", "--delta", "0"]).status.code(), Some(1));
}

#[test]
fn spectral_reduction_and_breakdown() {
    let o = optoweak(&["spectral", "--N", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let (_, rows) = table(&text);
    assert_eq!(rows.len(), 3);
    assert!(text.contains("# summary.leakage="));
    assert!(text.contains("# summary.l2_full_vs_monochromatic="));

    let o = optoweak(&["spectral", "--N", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = table(&stdout(&o));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["carrier", "down"]);

    let o = optoweak(&["spectral", "--N", "2", "--gamma-cav", "5e5"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(summary(&stdout(&o), "pass"), "false");

    assert_eq!(optoweak(&["spectral", "--N", "1.5"]).status.code(), Some(1));
}

#[test]
fn output_files_are_deterministic_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    let p = path.to_str().unwrap();
    let args = ["sweep", "--state", "coherent", "--N", "1,10,50", "--format", "json", "--out", p];
    assert_eq!(optoweak(&args).status.code(), Some(0));
    let first = std::fs::read(&path).unwrap();
    assert_eq!(optoweak(&args).status.code(), Some(0));
    assert_eq!(first, std::fs::read(&path).unwrap());

    let doc: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let config = &doc["metadata"]["config"];
    for key in ["omega", "g0", "gamma-cav", "epsilon", "state", "N", "beta", "delta", "delta-grid", "theta", "times", "out", "format", "hz"] {
        assert!(config.get(key).is_some(), "{key}");
    }
    assert_eq!(doc["metadata"]["command"], "sweep");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 600);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# weak values at a custom point\ndelta = 0.5\ntheta=1.0  # radians\nformat=csv\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = optoweak(&["weak-values", "--config", c, "--theta", "0.25"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("# config.delta=5.00000000000e-1"));
    assert!(text.contains("# config.theta=2.50000000000e-1"));
    let (_, rows) = table(&text);
    assert!((num(&rows[0][4]) - (0.25 + FRAC_PI_2)).abs() < 1e-10);

    std::fs::write(&cfg, "delta 0.5\n").unwrap();
    assert_eq!(optoweak(&["weak-values", "--config", c]).status.code(), Some(1));
    assert_eq!(optoweak(&["weak-values", "--config", "/nonexistent/run.cfg"]).status.code(), Some(1));
}

#[test]
fn hz_flag_leaves_dimensionless_results_unchanged() {
    let a = stdout(&optoweak(&["sweep", "--N", "2"]));
    let b = stdout(&optoweak(&["sweep", "--N", "2", "--hz"]));
    let (_, ra) = table(&a);
    let (_, rb) = table(&b);
    assert_eq!(ra, rb);
    assert!(b.contains("# config.hz=true"));
    assert!(b.contains("# config.omega=6.28318530718e6"));
}

#[test]
fn unwritable_output_is_reported() {
    let o = optoweak(&["weak-values", "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(o.status.code(), Some(1));
}
