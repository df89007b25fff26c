//! End-to-end checks of the fragsim binary: exit codes, config parsing,
//! the run/replay cycle, the sweep outputs and the overhead table.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fragsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fragsim-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

#[test]
fn run_single_node_prints_perfect_goodput_row() {
    let out = fragsim(&["run", "--nodes", "1", "--seed", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("node_count,strategy"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert_eq!(row[1], "aloha");
    assert_eq!(row[8], "100", "single device goodput");
}

#[test]
fn malformed_config_exits_2_with_line_number() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("bad.conf");
    write(&cfg, "nodes = 5\nwhatever = 12\n");
    let out = fragsim(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("line 2"), "stderr: {err}");
    // No CSV on stdout.
    assert!(stdout(&out).is_empty());
}

#[test]
fn invalid_scenario_values_exit_2() {
    let out = fragsim(&["run", "--nodes", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fragsim(&["run", "--strategy", "frag", "--fragments", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fragsim(&["run", "--strategy", "csma"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_exit_2() {
    let out = fragsim(&["run", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_config_file_runs_the_baseline() {
    let dir = tmp_dir("empty");
    let cfg = dir.join("empty.conf");
    write(&cfg, "");
    let out = fragsim(&["run", "--config", cfg.to_str().unwrap(), "--seed", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("50,aloha,"), "baseline row: {row}");
}

#[test]
fn log_replay_reproduces_the_metrics_row() {
    let dir = tmp_dir("replay");
    let log = dir.join("run.log");
    let out = fragsim(&[
        "run",
        "--nodes",
        "12",
        "--strategy",
        "frag_retx",
        "--fragments",
        "3",
        "--sessions",
        "1",
        "--seed",
        "11",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(log.exists());
    let run_row = stdout(&out).lines().nth(1).unwrap().to_string();

    let replay = fragsim(&["replay", log.to_str().unwrap()]);
    assert!(replay.status.success());
    let replay_row = stdout(&replay).lines().nth(1).unwrap().to_string();
    assert_eq!(run_row, replay_row);
}

#[test]
fn replay_of_garbage_exits_2() {
    let dir = tmp_dir("garbage");
    let log = dir.join("noise.log");
    write(&log, "this is not a log\n");
    let out = fragsim(&["replay", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = fragsim(&["replay", dir.join("missing.log").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_emits_csv_and_plots() {
    let dir = tmp_dir("sweep");
    let out = fragsim(&[
        "sweep",
        "--node-counts",
        "1,3",
        "--seeds",
        "2",
        "--strategies",
        "aloha,buffered_aloha,frag:2,frag_retx:2:1,frag_retx:2:2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for file in [
        "sweep_runs.csv",
        "sweep_summary.csv",
        "goodput_vs_nodes.svg",
        "app_capacity_vs_nodes.svg",
        "energy_efficiency_vs_nodes.svg",
        "goodput_gains.svg",
    ] {
        assert!(dir.join(file).exists(), "{file} missing");
    }
    let runs = std::fs::read_to_string(dir.join("sweep_runs.csv")).unwrap();
    // 2 densities x 5 strategies x 2 seeds runs plus the header line.
    assert_eq!(runs.lines().count(), 1 + 2 * 5 * 2);
    let summary = std::fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
    assert!(summary.contains("goodput_pct_ci95"));

    // Every plotted mean is present in the summary CSV (plots are views of
    // the CSV): spot-check the goodput curve values.
    let svg = std::fs::read_to_string(dir.join("goodput_vs_nodes.svg")).unwrap();
    assert!(svg.contains("<polyline"));
}

#[test]
fn sweep_with_one_seed_omits_ci_columns() {
    let dir = tmp_dir("oneseed");
    let out = fragsim(&[
        "sweep",
        "--node-counts",
        "2",
        "--seeds",
        "1",
        "--strategies",
        "aloha",
        "--no-plots",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let summary = std::fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
    assert!(!summary.contains("ci95"));
}

#[test]
fn table1_prints_reference_deltas_and_recomputes_for_sf8() {
    let out = fragsim(&["table1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("200 B payload at SF7 / 125 kHz"));
    for reference in [
        "8.93", "19.00", "26.80", "35.71", "5.71", "12.61", "17.14", "22.86",
    ] {
        assert!(
            text.contains(reference),
            "missing reference {reference} in:\n{text}"
        );
    }

    let dir = tmp_dir("table-sf8");
    let cfg = dir.join("sf8.conf");
    write(&cfg, "spreading_factor = 8\n");
    let out = fragsim(&["table1", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("SF8"));
}

#[test]
fn run_log_is_deterministic_across_invocations() {
    let dir = tmp_dir("determinism");
    let log_a = dir.join("a.log");
    let log_b = dir.join("b.log");
    for (path, _) in [(&log_a, 0), (&log_b, 1)] {
        let out = fragsim(&[
            "run",
            "--nodes",
            "9",
            "--strategy",
            "frag_retx",
            "--fragments",
            "4",
            "--seed",
            "21",
            "--log",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read_to_string(&log_a).unwrap();
    let b = std::fs::read_to_string(&log_b).unwrap();
    assert_eq!(a, b);
}
