use std::path::Path;
use std::process::{Command, Output};

use addfit_cli::io::{read_panel_file, write_panel};
use addfit_core::simlab::{generate_panel, SimConfig};
use addfit_core::{fit_panel, FitConfig, Method, PanelData};

fn addfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_addfit"))
        .args(args)
        .env("ADDFIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn manifest_hash(dir: &Path) -> String {
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    doc["hash"].as_str().unwrap().to_string()
}

fn sim_panel(units: usize, seed: u64) -> PanelData {
    generate_panel(&SimConfig {
        units,
        seed,
        reps: 1,
        ..SimConfig::default()
    })
    .unwrap()
    .0
}

#[test]
fn simulate_rejects_tiny_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = addfit(&["simulate", "--G", "5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("G must be at least 10"));
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        addfit(&[
            "simulate",
            "--G",
            "300",
            "--J",
            "3",
            "--gamma",
            "0.1,0.2",
            "--reps",
            "3",
            "--seed",
            "7",
            "--methods",
            "integration,backfit",
            "--out",
            dir.to_str().unwrap(),
        ])
    };
    let (ra, rb) = (run(a.path()), run(b.path()));
    assert_eq!(code(&ra), 0, "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(code(&rb), 0);
    let table = std::fs::read_to_string(a.path().join("table.txt")).unwrap();
    assert!(table.contains("integration g=0.1") && table.contains("backfit g=0.2"));
    // output directories differ, so compare everything but the recorded paths
    let strip = |dir: &Path, name: &str| {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        text.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip(a.path(), "table.txt"), strip(b.path(), "table.txt"));
    let report = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        v["manifest"] = serde_json::Value::Null;
        v
    };
    assert_eq!(report(a.path()), report(b.path()));
}

#[test]
fn simulate_twice_into_the_same_directory_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--G",
        "200",
        "--gamma",
        "0.2",
        "--reps",
        "2",
        "--methods",
        "integration",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    assert_eq!(code(&addfit(&args)), 0);
    let first = (
        std::fs::read(dir.path().join("report.json")).unwrap(),
        std::fs::read(dir.path().join("table.txt")).unwrap(),
        manifest_hash(dir.path()),
    );
    assert_eq!(code(&addfit(&args)), 0);
    let second = (
        std::fs::read(dir.path().join("report.json")).unwrap(),
        std::fs::read(dir.path().join("table.txt")).unwrap(),
        manifest_hash(dir.path()),
    );
    assert_eq!(first, second);
    let table = String::from_utf8(first.1).unwrap();
    assert!(table.starts_with(&format!("# manifest={}", first.2)));
}

#[test]
fn fit_recovers_noise_level() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &sim_panel(3000, 3), "input").unwrap();
    let out_dir = dir.path().join("fit");
    let out = addfit(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--method",
        "integration",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let sigma = summary["sigma_hat"].as_f64().unwrap();
    assert!((sigma - 1.0).abs() < 0.1, "sigma_hat {sigma}");
    assert_eq!(summary["residual_sd_by_pair"].as_array().unwrap().len(), 3);

    let hash = manifest_hash(&out_dir);
    assert_eq!(summary["manifest"].as_str().unwrap(), hash);
    for name in [
        "curve_m1.csv",
        "curve_m2.csv",
        "curve_m3.csv",
        "alpha.csv",
        "residuals.csv",
    ] {
        let text = std::fs::read_to_string(out_dir.join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# manifest={hash}"), "{name}");
    }
    let curve = std::fs::read_to_string(out_dir.join("curve_m1.csv")).unwrap();
    assert_eq!(curve.lines().nth(1).unwrap(), "x,m_hat,m_hat_prime");
    assert_eq!(curve.lines().count(), 102);
}

#[test]
fn csv_round_trip_gives_identical_fits() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    let panel = sim_panel(400, 4);
    write_panel(&csv, &panel, "input").unwrap();
    let loaded = read_panel_file(&csv).unwrap();
    assert_eq!(loaded, panel);
    for method in Method::ALL {
        let cfg = FitConfig::default();
        assert_eq!(
            fit_panel(&loaded, method, &cfg).unwrap(),
            fit_panel(&panel, method, &cfg).unwrap()
        );
    }
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = addfit(&[
        "fit",
        "--input",
        empty.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,y1,y2\n1,2,3,4\n1,2,x,4\n").unwrap();
    let out = addfit(&[
        "fit",
        "--input",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = addfit(&[
        "fit",
        "--input",
        bad.to_str().unwrap(),
        "--method",
        "spline",
        "--out",
        "o",
    ]);
    assert_ne!(code(&out), 0);
}

#[test]
fn lag_embedded_series_fits_two_components() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("series.csv");
    // a noisy nonlinear autoregression
    let mut series: Vec<f64> = vec![0.3, -0.2];
    let mut state = 12345u64;
    for _ in 0..600 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let noise = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.6;
        let n = series.len();
        series.push(0.6 * series[n - 1].sin() - 0.3 * series[n - 2] + noise);
    }
    let mut text = String::from("x1,x2,y1,y2\n");
    for t in 2..series.len() {
        text.push_str(&format!(
            "{},{},{},{}\n",
            series[t - 1],
            series[t - 2],
            series[t],
            series[t]
        ));
    }
    std::fs::write(&csv, text).unwrap();
    let out_dir = dir.path().join("fit");
    let out = addfit(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("curve_m1.csv").exists() && out_dir.join("curve_m2.csv").exists());
    assert!(!out_dir.join("curve_m3.csv").exists());
}

#[test]
fn backfit_iteration_limit_is_degraded() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &sim_panel(300, 5), "input").unwrap();
    let out_dir = dir.path().join("fit");
    let out = addfit(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--method",
        "backfit",
        "--max-iter",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(out_dir.join("residuals.csv").exists());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("did not converge"));
}

#[test]
fn diagnose_reports_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &sim_panel(300, 6), "input").unwrap();
    let out_dir = dir.path().join("diag");
    let out = addfit(&[
        "diagnose",
        "--input",
        csv.to_str().unwrap(),
        "--subsample",
        "200",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(matches!(code(&out), 0 | 2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("replicates")).count(), 3);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("diagnostic.json")).unwrap()).unwrap();
    assert_eq!(doc["manifest"].as_str().unwrap(), manifest_hash(&out_dir));
}
