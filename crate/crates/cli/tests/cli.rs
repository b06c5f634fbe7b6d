use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use catalytic_bbm_cli::config::RunConfig;
use catalytic_bbm_cli::output::Summary;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catalytic-bbm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RESULTS_DIR")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, exp: &str, file: &str) -> Vec<u8> {
    fs::read(dir.join(exp).join(file)).unwrap()
}

const SMALL: [&str; 9] = [
    "expected-count",
    "--beta",
    "1",
    "--t",
    "4",
    "--n",
    "10000",
    "--seed",
    "7",
];

#[test]
fn same_seed_gives_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run(&SMALL, a.path()).status.success());
    assert!(run(&SMALL, b.path()).status.success());
    for f in ["replicates.csv", "aggregate.csv"] {
        assert_eq!(
            read(a.path(), "expected-count", f),
            read(b.path(), "expected-count", f),
            "{f}"
        );
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "martingale",
        "--t",
        "1,3",
        "--n",
        "2000",
        "--spine-n",
        "1000",
        "--seed",
        "11",
    ];
    let one: Vec<&str> = args.iter().copied().chain(["--threads", "1"]).collect();
    let four: Vec<&str> = args.iter().copied().chain(["--threads", "4"]).collect();
    assert!(run(&one, a.path()).status.success());
    assert!(run(&four, b.path()).status.success());
    for f in ["replicates.csv", "aggregate.csv"] {
        assert_eq!(read(a.path(), "martingale", f), read(b.path(), "martingale", f), "{f}");
    }
}

#[test]
fn different_seeds_differ() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut other = SMALL;
    other[8] = "8";
    run(&SMALL, a.path());
    run(&other, b.path());
    assert_ne!(
        read(a.path(), "expected-count", "replicates.csv"),
        read(b.path(), "expected-count", "replicates.csv")
    );
}

#[test]
fn summary_and_config_describe_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&SMALL, dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS A1"));
    let summary: Summary = serde_json::from_slice(&read(dir.path(), "expected-count", "summary.json")).unwrap();
    assert_eq!(summary.seed, 7);
    assert_eq!(summary.experiment, "expected-count");
    assert!(summary.passed);
    let echoed: RunConfig =
        toml::from_str(&String::from_utf8(read(dir.path(), "expected-count", "config.toml")).unwrap()).unwrap();
    assert_eq!(echoed, summary.config);
    assert_eq!(echoed.t, vec![4.0]);
    let csv = String::from_utf8(read(dir.path(), "expected-count", "aggregate.csv")).unwrap();
    assert!(csv.starts_with("quantity,t,lambda,estimate,std_error,n,target,z"));
}

#[test]
fn negative_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["expected-count", "--beta", "-1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("beta"));
    assert!(!dir.path().join("expected-count").exists());
}

#[test]
fn rare_event_below_half_beta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["rare-event", "--lambda", "0.4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("beta/2"));
}

#[test]
fn all_problems_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["expected-count", "--beta", "0", "--t", "-1", "--max-pop", "0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("3 problem"), "{err}");
}

#[test]
fn empty_config_file_means_defaults_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = run(&["formulas", "--config", empty.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg: RunConfig =
        toml::from_str(&String::from_utf8(read(dir.path(), "formulas", "config.toml")).unwrap()).unwrap();
    assert_eq!(cfg.beta, 1.0);
    assert_eq!(cfg.seed, catalytic_bbm_cli::config::DEFAULT_SEED);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "beta = 1.0\nbogus = 3\n").unwrap();
    let out = run(&["formulas", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.toml");
    fs::write(&file, "beta = 2.0\nt = [1.0]\nn = 50\nseed = 3\n").unwrap();
    let out = run(
        &["expected-count", "--config", file.to_str().unwrap(), "--seed", "5"],
        dir.path(),
    );
    assert!(out.status.success());
    let cfg: RunConfig =
        toml::from_str(&String::from_utf8(read(dir.path(), "expected-count", "config.toml")).unwrap()).unwrap();
    assert_eq!((cfg.beta, cfg.n, cfg.seed), (2.0, 50, 5));
}

#[test]
fn entropy_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["expected-count", "--t", "1", "--n", "20", "--seed-policy", "entropy"],
        dir.path(),
    );
    assert!(out.status.success());
    let summary: Summary = serde_json::from_slice(&read(dir.path(), "expected-count", "summary.json")).unwrap();
    assert_eq!(summary.seed, summary.config.seed);
    let out = run(
        &["expected-count", "--seed-policy", "entropy", "--seed", "4"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
