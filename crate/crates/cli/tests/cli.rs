use std::path::Path;
use std::process::{Command, Output};

fn fdrp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

const MICRO: &str = r#"
K = 2
N = 2
Nt = 2
T_max = 2
lambda = [0.01, 10.0]
P_dbm = -100.0
seeds = [1, 2]
algorithms = ["fdrp", "urp", "grp", "oracle"]
output_dir = "out"
"#;

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = fdrp(&["selftest"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "K = 2\n").unwrap();
    let out = fdrp(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));

    std::fs::write(dir.path().join("invalid.toml"), "seeds = [1]\nK = 0\n").unwrap();
    assert_eq!(fdrp(&["run", "invalid.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(fdrp(&["run", "missing.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn run_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("micro.toml"), MICRO).unwrap();
    let out = fdrp(&["run", "micro.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trials.jsonl", "aggregate.csv", "convergence.csv", "heatmap.csv", "multiplex_cdf.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(dir.path().join("out/trials.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 8);
}

#[test]
fn solve_prints_one_record_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("micro.toml"), MICRO).unwrap();
    let out = fdrp(
        &["solve", "micro.toml", "--seed", "1", "--algo", "fdrp", "--trace", "trace.jsonl"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"algorithm\":\"fdrp\""));
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() >= 2);
}

#[test]
fn infeasible_trial_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("micro.toml"), MICRO.replace("-100.0", "-150.0")).unwrap();
    let out = fdrp(&["solve", "micro.toml", "--seed", "1", "--algo", "grp"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = fdrp(&["run", "micro.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_reports_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("micro.toml"), MICRO).unwrap();
    let out = fdrp(&["oracle", "micro.toml", "--horizon", "2"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("\"patterns\":81"));
}
