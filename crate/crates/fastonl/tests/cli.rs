//! End-to-end checks of the command-line surface: exit codes, output files,
//! rerun determinism, and summary consistency with the per-step rows.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fastonl"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fastonl-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// Per-step CSV minus the wall-clock column (the only nondeterministic field).
fn csv_without_micros(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut parts: Vec<&str> = line.split(',').collect();
            parts.pop();
            parts.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_wm_on_karate_succeeds() {
    let out = temp_dir("wm");
    let status = bin()
        .args([
            "run", "--method", "wm", "--trials", "2", "--seed", "7", "--order", "shuffle",
        ])
        .arg("--dataset")
        .arg(data("karate.edges"))
        .arg("--labels")
        .arg(data("karate.labels"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("trial_0.csv").exists());
    assert!(out.join("trial_1.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trials"], 2);
    // One row per labeled node.
    let rows = std::fs::read_to_string(out.join("trial_0.csv")).unwrap();
    assert_eq!(rows.lines().count(), 34 + 1);
}

#[test]
fn reruns_are_deterministic_modulo_timing() {
    let out_a = temp_dir("det-a");
    let out_b = temp_dir("det-b");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args([
                "run",
                "--method",
                "fastonl",
                "--kernel",
                "k2",
                "--lambda",
                "0.15n",
                "--eps",
                "0.1/n",
                "--trials",
                "2",
                "--seed",
                "3",
                "--order",
                "shuffle",
                "--prediction",
                "sample",
            ])
            .arg("--dataset")
            .arg(data("karate.edges"))
            .arg("--labels")
            .arg(data("karate.labels"))
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for trial in 0..2 {
        let a = csv_without_micros(&out_a.join(format!("trial_{trial}.csv")));
        let b = csv_without_micros(&out_b.join(format!("trial_{trial}.csv")));
        assert_eq!(a, b, "trial {trial} differs between reruns");
    }
}

#[test]
fn summary_accuracy_matches_rows() {
    let out = temp_dir("sum");
    let status = bin()
        .args([
            "run", "--method", "fastonl", "--trials", "3", "--seed", "11", "--order", "shuffle",
        ])
        .arg("--dataset")
        .arg(data("karate.edges"))
        .arg("--labels")
        .arg(data("karate.labels"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let mut recomputed = Vec::new();
    for trial in 0..3 {
        let text = std::fs::read_to_string(out.join(format!("trial_{trial}.csv"))).unwrap();
        let mut mistakes = 0usize;
        let mut rows = 0usize;
        let mut last_rate = 0.0f64;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            mistakes += cols[4].parse::<usize>().unwrap();
            last_rate = cols[5].parse::<f64>().unwrap();
            rows += 1;
            // Cumulative error rate is mistakes / step at every row.
            let step: usize = cols[0].parse().unwrap();
            assert_eq!(step, rows);
        }
        let acc = 1.0 - mistakes as f64 / rows as f64;
        assert!((acc - (1.0 - last_rate)).abs() <= 1e-9);
        recomputed.push(acc);
    }
    let mean = recomputed.iter().sum::<f64>() / recomputed.len() as f64;
    assert!((summary["accuracy_mean"].as_f64().unwrap() - mean).abs() <= 1e-9);
}

#[test]
fn config_error_exits_2() {
    let status = bin()
        .args(["run", "--method", "nonsense"])
        .arg("--dataset")
        .arg(data("karate.edges"))
        .arg("--labels")
        .arg(data("karate.labels"))
        .arg("--out")
        .arg(temp_dir("e2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // Invalid lambda syntax.
    let status = bin()
        .args(["run", "--method", "fastonl", "--lambda", "0.15x"])
        .arg("--dataset")
        .arg(data("karate.edges"))
        .arg("--labels")
        .arg(data("karate.labels"))
        .arg("--out")
        .arg(temp_dir("e2b"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_file_exits_3() {
    let status = bin()
        .args(["run", "--method", "wm"])
        .arg("--dataset")
        .arg(data("does-not-exist.edges"))
        .arg("--labels")
        .arg(data("karate.labels"))
        .arg("--out")
        .arg(temp_dir("e3"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn bounds_and_powerlaw_export_csv() {
    let out = temp_dir("exports");
    std::fs::create_dir_all(&out).unwrap();
    let bounds_csv = out.join("bounds.csv");
    let status = bin()
        .args([
            "bounds",
            "--alpha",
            "0.2",
            "--eps-points",
            "4",
            "--sources",
            "5",
        ])
        .arg("--dataset")
        .arg(data("karate.edges"))
        .arg("--out")
        .arg(&bounds_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&bounds_csv).unwrap();
    assert!(text.starts_with("eps,source,measured,andersen,local,poweriter"));
    assert_eq!(text.lines().count(), 4 * 5 + 1);
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let measured: f64 = cols[2].parse().unwrap();
        let andersen: f64 = cols[3].parse().unwrap();
        let local: f64 = cols[4].parse().unwrap();
        assert!(measured <= andersen && measured <= local * (1.0 + 1e-12));
    }

    let pl_csv = out.join("powerlaw.csv");
    let status = bin()
        .args([
            "powerlaw", "--alpha", "0.2", "--eps", "1e-12", "--sample", "3",
        ])
        .arg("--dataset")
        .arg(data("karate.edges"))
        .arg("--out")
        .arg(&pl_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&pl_csv).unwrap();
    // Three sources, each reaching all 34 nodes at this tolerance.
    assert_eq!(text.lines().count(), 3 * 34 + 1);
    // Ranked magnitudes are nonincreasing per source.
    let mut last: Option<(u64, f64)> = None;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let source: u64 = cols[0].parse().unwrap();
        let magnitude: f64 = cols[2].parse().unwrap();
        if let Some((prev_source, prev_mag)) = last {
            if prev_source == source {
                assert!(magnitude <= prev_mag);
            }
        }
        last = Some((source, magnitude));
    }
}

#[test]
fn oracle_check_reports_small_errors() {
    let output = bin()
        .args([
            "oracle-check",
            "--kernel",
            "k2",
            "--lambda",
            "0.15n",
            "--eps",
            "1e-8",
            "--columns",
            "5",
        ])
        .arg("--dataset")
        .arg(data("karate.edges"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("max column error"), "stdout: {text}");
}

#[test]
fn config_file_with_cli_override() {
    let out = temp_dir("cfg");
    let config_path = std::env::temp_dir().join(format!("fastonl-cfg-{}.json", std::process::id()));
    let config = serde_json::json!({
        "dataset": data("karate.edges"),
        "labels": data("karate.labels"),
        "method": "wm",
        "trials": 1,
        "seed": 5,
        "order": "shuffle",
        "out": out,
    });
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let status = bin()
        .arg("run")
        .arg("--config")
        .arg(&config_path)
        .args(["--trials", "3"])
        .status()
        .unwrap();
    assert!(status.success());
    // The override took effect over the config file's value.
    assert!(out.join("trial_2.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["trials"], 3);
    let _ = std::fs::remove_file(config_path);
}
