use std::path::Path;
use std::process::{Command, Output};

use hom_core::dip_model::{preset, sample_scan, ScanConfig};
use hom_core::estimator::{hg_parameter, EstimateOptions};
use hom_core::spdc_model::ApproxSincGauss;

fn homsp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homsp"))
        .current_dir(dir)
        .env_remove("HOM_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn simulate_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    ok(&homsp(d.path(), &["simulate", "--seed", "1", "--out", "a"]));
    ok(&homsp(d.path(), &["simulate", "--seed", "1", "--out", "b"]));
    ok(&homsp(d.path(), &["simulate", "--seed", "2", "--out", "c"]));
    let a = std::fs::read(d.path().join("a/scan.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b/scan.csv")).unwrap());
    assert_ne!(a, std::fs::read(d.path().join("c/scan.csv")).unwrap());
    assert_eq!(read(d.path().join("a/scan.json")), read(d.path().join("b/scan.json")));
}

#[test]
fn simulated_dip_has_the_expected_depth() {
    let d = tempfile::tempdir().unwrap();
    ok(&homsp(d.path(), &["simulate", "--seed", "1", "--out", "."]));
    let text = read(d.path().join("scan.csv"));
    let delays: Vec<f64> = csv_column(&text, "delay_fs").iter().map(|s| s.parse().unwrap()).collect();
    let counts: Vec<f64> = csv_column(&text, "counts").iter().map(|s| s.parse().unwrap()).collect();
    let tail: Vec<f64> = delays
        .iter()
        .zip(&counts)
        .filter(|(t, _)| t.abs() > 800.0)
        .map(|(_, c)| *c)
        .collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((mean - preset::C0).abs() < 4.0 * (preset::C0 / tail.len() as f64).sqrt(), "{mean}");
    let centre = counts[delays.iter().position(|t| t.abs() < 1e-9).unwrap()];
    let bottom = preset::C0 * (1.0 - preset::VISIBILITY);
    assert!((centre - bottom).abs() < 4.0 * bottom.sqrt(), "{centre} vs {bottom}");
}

#[test]
fn invalid_visibility_is_a_validation_error() {
    let d = tempfile::tempdir().unwrap();
    let out = homsp(d.path(), &["simulate", "--visibility", "1.2", "--out", "."]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("visibility"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.json"), r#"{"format_version": "v1", "sead": 3}"#).unwrap();
    let out = homsp(d.path(), &["simulate", "--config", "run.json", "--out", "."]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sead"));
}

#[test]
fn flags_override_the_config_file() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.json"), r#"{"seed": 3, "output_dir": "from_file"}"#).unwrap();
    ok(&homsp(d.path(), &["simulate", "--config", "run.json", "--seed", "4"]));
    let manifest = read(d.path().join("from_file/run_simulate.json"));
    assert!(manifest.contains("\"seed\": 4"));
    assert!(manifest.contains("\"tool_version\""));
}

#[test]
fn output_directory_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_homsp"))
        .current_dir(d.path())
        .env("HOM_OUT_DIR", "envdir")
        .args(["simulate", "--seed", "1"])
        .output()
        .unwrap();
    ok(&out);
    assert!(d.path().join("envdir/scan.csv").exists());
}

#[test]
fn estimate_matches_the_library() {
    let d = tempfile::tempdir().unwrap();
    ok(&homsp(d.path(), &["simulate", "--seed", "5", "--out", "."]));
    ok(&homsp(
        d.path(),
        &["estimate", "--input", "scan.csv", "--out", ".", "--order", "0,2,4", "--xi-min", "10", "--xi-max", "90", "--xi-steps", "5"],
    ));
    let text = read(d.path().join("sweep.csv"));
    assert!(text.starts_with("n,xi_fs,h,variance,crb,reliable\n"));
    let p = ApproxSincGauss::new(preset::SIGMA_FS, preset::B).unwrap();
    let scan = sample_scan(&ScanConfig::paper_preset(), &p, preset::VISIBILITY, 5).unwrap();
    let ns = csv_column(&text, "n");
    let xis = csv_column(&text, "xi_fs");
    let hs = csv_column(&text, "h");
    assert_eq!(hs.len(), 15);
    for ((n, xi), h) in ns.iter().zip(&xis).zip(&hs) {
        let r = hg_parameter(&scan, n.parse().unwrap(), xi.parse().unwrap(), preset::VISIBILITY, &EstimateOptions::default()).unwrap();
        assert_eq!(r.h, h.parse::<f64>().unwrap());
    }
}

#[test]
fn malformed_row_names_the_line() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.csv"), "delay_fs,counts\n-10,5\n0,x\n10,6\n").unwrap();
    let out = homsp(d.path(), &["estimate", "--input", "bad.csv", "--out", "."]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sidecar_step_mismatch_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    ok(&homsp(d.path(), &["simulate", "--seed", "1", "--out", "."]));
    let side = read(d.path().join("scan.json")).replace("\"step_fs\": 13.4", "\"step_fs\": 12.0");
    std::fs::write(d.path().join("scan.json"), side).unwrap();
    let out = homsp(d.path(), &["estimate", "--input", "scan.csv", "--out", "."]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn missing_input_is_an_io_error() {
    let d = tempfile::tempdir().unwrap();
    let out = homsp(d.path(), &["fit", "--input", "nope.csv", "--out", "."]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn witness_verdicts() {
    let d = tempfile::tempdir().unwrap();
    let args = ["--out", ".", "--xi-min", "10", "--xi-max", "250", "--xi-steps", "40", "--reps", "1000"];
    let mut a = vec!["witness", "--seed", "1"];
    a.extend(args);
    ok(&homsp(d.path(), &a));
    assert!(read(d.path().join("witness_report.json")).contains("\"verdict\": \"witnessed\""));

    std::fs::write(
        d.path().join("sep.json"),
        r#"{"model": {"kind": "separable",
            "signal": {"shape": "gaussian", "center": 0.004, "width": 0.01, "chirp_fs2": 300},
            "idler": {"shape": "super_gaussian", "order": 4, "center": -0.004, "width": 0.012}}}"#,
    )
    .unwrap();
    let mut b = vec!["witness", "--config", "sep.json", "--seed", "1"];
    b.extend(args);
    ok(&homsp(d.path(), &b));
    assert!(read(d.path().join("witness_report.json")).contains("\"verdict\": \"not_witnessed\""));
}

#[test]
fn fit_recovers_the_noiseless_preset() {
    let d = tempfile::tempdir().unwrap();
    ok(&homsp(d.path(), &["fit", "--noiseless", "--out", "."]));
    let v: serde_json::Value = serde_json::from_str(&read(d.path().join("fit.json"))).unwrap();
    let p = &v["result"]["params"];
    for (key, truth) in [("c0", preset::C0), ("visibility", preset::VISIBILITY), ("sigma_fs", preset::SIGMA_FS), ("b", preset::B)] {
        let got = p[key].as_f64().unwrap();
        assert!((got - truth).abs() <= 1e-6 * truth, "{key}: {got}");
    }
    assert!(p["tau0_fs"].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(v["config"]["noiseless"], serde_json::Value::Bool(true));
}

#[test]
fn plot_tables_have_the_documented_columns() {
    let d = tempfile::tempdir().unwrap();
    ok(&homsp(d.path(), &["simulate", "--seed", "1", "--out", "."]));
    ok(&homsp(
        d.path(),
        &["export-plot", "--input", "scan.csv", "--out", ".", "--reps", "200", "--xi-min", "7", "--xi-max", "200", "--xi-steps", "20"],
    ));
    let header = |f: &str| read(d.path().join(f)).lines().next().unwrap().to_string();
    assert_eq!(header("fig1.csv"), "delay_fs,c_over_c0,c_err,fit");
    for n in [0, 2, 4] {
        assert_eq!(header(&format!("fig2_h{n}.csv")), "xi_fs,h,h_lo,h_hi");
    }
    assert_eq!(header("fig3.csv"), "order,xi_fs,delta_h,delta_h_crb,reliable");
    assert_eq!(header("fig4.csv"), "xi_fs,R4");
    assert_eq!(header("fig5.csv"), "order,xi_fs,dtau0_fs");
    ok(&homsp(d.path(), &["delay", "--out", ".", "--xi-min", "7", "--xi-max", "200", "--xi-steps", "20"]));
    assert_eq!(header("delay_sensitivity.csv"), "order,xi_fs,dtau0_fs,defined");
}

#[test]
fn stage_positions_are_converted() {
    let d = tempfile::tempdir().unwrap();
    let mut text = String::from("position_um,counts\n");
    for i in 0..41 {
        let x = 1000.0 + 2.01 * i as f64;
        let tau = 2.0 * (x - 1040.2) * 1e3 / 299.792458;
        let c = 4000.0 * (1.0 - 0.8 * (-tau * tau / (2.0 * 80.0f64.powi(2))).exp());
        text.push_str(&format!("{x},{}\n", c.round()));
    }
    std::fs::write(d.path().join("stage.csv"), text).unwrap();
    ok(&homsp(d.path(), &["fit", "--input", "stage.csv", "--stage-zero-um", "1040.2", "--out", "."]));
    let v: serde_json::Value = serde_json::from_str(&read(d.path().join("fit.json"))).unwrap();
    let sigma = v["result"]["params"]["sigma_fs"].as_f64().unwrap();
    assert!((sigma - 80.0).abs() < 2.0, "{sigma}");
}
