use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rationing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rationing"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs
}

#[test]
fn synth_then_simulate_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("trace.csv");
    let profiles = tmp.path().join("profiles.toml");
    let out = rationing(&[
        "synth",
        "--out",
        trace.to_str().unwrap(),
        "--write-profiles",
        profiles.to_str().unwrap(),
        "--days",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("timestamp,load_id,power_w\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 3 * 96);

    let runs = tmp.path().join("runs");
    let out = rationing(&[
        "simulate",
        "--trace",
        trace.to_str().unwrap(),
        "--priorities",
        "A=2,B=4,C=3,D=1",
        "--days",
        "3",
        "--frequency",
        "1",
        "--ledger",
        "--out",
        runs.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dirs = run_dirs(&runs);
    assert_eq!(dirs.len(), 1);
    for f in [
        "manifest.json",
        "report.json",
        "report.csv",
        "ledger.csv",
        "config.toml",
    ] {
        assert!(dirs[0].join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dirs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|o| o == "ledger.csv"));
    let report = fs::read_to_string(dirs[0].join("report.csv")).unwrap();
    assert!(report.starts_with("load_id,energy_kwh,energy_pct,sf\n"));
    assert_eq!(report.lines().count(), 6);

    // the profile file drives the same household
    let out = rationing(&[
        "simulate",
        "--trace",
        profiles.to_str().unwrap(),
        "--policy",
        "fixed",
        "--days",
        "3",
        "--frequency",
        "1",
        "--out",
        runs.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_reads_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        "recharge_fraction = 0.8\nrecharge_frequency = 2\nnum_days = 4\n\n[policy]\nkind = \"baseline\"\n\n[traces]\nkind = \"reference\"\n",
    )
    .unwrap();
    let out = rationing(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("baseline:"));
}

#[test]
fn sweep_writes_both_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rationing(&[
        "sweep",
        "--amounts",
        "60:80:20",
        "--frequencies",
        "1,2",
        "--policies",
        "baseline,optimal",
        "--days",
        "4",
        "--jobs",
        "2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = &run_dirs(tmp.path())[0];
    let psf = fs::read_to_string(dir.join("sweep_psf.csv")).unwrap();
    assert_eq!(psf.lines().count(), 1 + 2 * 2 * 2);
    assert!(psf.lines().nth(1).unwrap().starts_with("baseline,60,1,"));
    let disc = fs::read_to_string(dir.join("sweep_disconnects.csv")).unwrap();
    assert!(disc.starts_with("policy,amount_pct,frequency,disconnections,error\n"));
}

#[test]
fn oracle_check_reports_matches() {
    let out = rationing(&["oracle-check", "--n", "25", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "25/25 match");
}

#[test]
fn configuration_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["oracle-check", "--loads", "3", "--steps", "8"],
        vec!["oracle-check", "--n", "0"],
        vec!["sweep", "--amounts", "80:60:10", "--out", o],
        vec!["sweep", "--amounts", "60,70,60", "--out", o],
        vec!["sweep", "--policies", "fixed,fixed", "--out", o],
        vec!["simulate", "--policy", "greedy", "--out", o],
        vec!["simulate", "--amount", "0", "--out", o],
        vec!["simulate", "--trace", "missing.csv", "--out", o],
        vec![
            "simulate",
            "--trace",
            "missing.csv",
            "--priorities",
            "A=1",
            "--out",
            o,
        ],
        vec!["simulate", "--trace", "trace.json", "--out", o],
        vec!["simulate", "--no-such-flag"],
    ];
    for args in cases {
        let out = rationing(&args);
        assert_eq!(
            code(&out),
            1,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn malformed_trace_names_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("bad.csv");
    fs::write(
        &trace,
        "timestamp,load_id,power_w\n2018-01-01T00:00:00,A,10\n2018-01-01T00:15:00,A,-5\n",
    )
    .unwrap();
    let out = rationing(&[
        "simulate",
        "--trace",
        trace.to_str().unwrap(),
        "--priorities",
        "A=1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
}
