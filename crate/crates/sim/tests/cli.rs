use std::path::Path;
use std::process::{Command, Output};

use selda_sim::csvio::{read_log, read_summary, Table};

fn selda(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selda-sim")).args(args).current_dir(dir).output().unwrap()
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = selda(&["hop", "--config", "missing.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn usage_and_bad_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(selda(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(selda(&["hop", "--set", "hip_kp=-1"], dir.path()).status.code(), Some(1));
    assert_eq!(selda(&["hop", "--set", "no_such_key=1"], dir.path()).status.code(), Some(1));
    assert_eq!(selda(&["sweep", "--timings", "0.1:0.6:0.1"], dir.path()).status.code(), Some(1));
    assert_eq!(selda(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn divergence_exits_two_and_keeps_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = selda(&["hop", "--set", "physics_dt=0.01", "--set", "control_dt=0.01", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let (log, _) = read_log(&dir.path().join("run/trial_B.csv")).unwrap();
    assert!(!log.records.is_empty());
}

#[test]
fn characterize_writes_two_columns_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = selda(&["characterize", "--out", "stiff.csv"], dir.path());
    assert!(out.status.success());
    let t = Table::read(&dir.path().join("stiff.csv")).unwrap();
    assert_eq!(t.columns, ["motor_angle", "torque"]);
    let slope: f64 = t.meta.get("fitted_slope").unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((slope - 0.15).abs() < 0.003);
}

#[test]
fn sweep_writes_summary_and_seven_logs_then_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("default_b.cfg");
    let out = selda(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--timings",
            "0.05:0.30:0.05",
            "--out",
            "results/",
            "--set",
            "total_duration=6",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = dir.path().join("results");
    let rows = read_summary(&results.join("summary.csv")).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.trial.as_str()).collect();
    assert_eq!(labels, ["passive", "t05", "t10", "t15", "t20", "t25", "t30"]);
    for l in &labels {
        let (log, info) = read_log(&results.join(format!("trial_{l}.csv"))).unwrap();
        assert_eq!(log.len(), 6001);
        assert_eq!(info.config_hash.len(), 64);
    }

    let plot = |name: &str| {
        let o = selda(
            &[
                "plot",
                "--input",
                "results/steps.csv",
                "--kind",
                "boxplot",
                "--x",
                "trial",
                "--y",
                "length",
                "--out",
                name,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join(name)).unwrap()
    };
    let (a, b) = (plot("a.svg"), plot("b.svg"));
    assert_eq!(a, b);
    assert_eq!(a.matches(r#"class="box""#).count(), 7);
}

#[test]
fn thread_cap_is_validated_and_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["compare", "--set", "total_duration=3", "--out"];
    let run = |threads: &str, out: &str| {
        let mut a: Vec<&str> = args.to_vec();
        a.push(out);
        Command::new(env!("CARGO_BIN_EXE_selda-sim"))
            .args(&a)
            .env("SELDA_SIM_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap()
    };
    assert!(run("1", "one").status.success());
    assert!(run("4", "four").status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("trial_B.csv")).unwrap();
    assert_eq!(read("one"), read("four"));
    assert_eq!(run("zero", "bad").status.code(), Some(1));
}

#[test]
fn plot_rejects_unknown_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("in.csv"), "# file: x\nt,a\n0,1\n1,2\n").unwrap();
    let out = selda(&["plot", "--input", "in.csv", "--x", "t", "--y", "zz", "--out", "p.svg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let ok = selda(&["plot", "--input", "in.csv", "--x", "t", "--y", "a", "--out", "p.svg"], dir.path());
    assert!(ok.status.success());
}
