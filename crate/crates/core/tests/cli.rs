use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_chaoskit");

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str], out: &Path, workers: Option<&str>) -> i32 {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--out").arg(out).arg("--quiet").env_remove("CHAOSKIT_WORKERS");
    if let Some(w) = workers {
        cmd.env("CHAOSKIT_WORKERS", w);
    }
    cmd.status().expect("binary runs").code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn gaussian_rate_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--scenario", "gaussian_rate"], dir.path(), None), 0);
    let csv = read(dir.path(), "gaussian_rate.csv");
    assert_eq!(csv, fs::read_to_string(golden("gaussian_rate.csv")).unwrap());
    // last row: (n/k)²W₂² within 1e−3 of the rate limit
    let scaled: f64 = column(&csv, "w2_sq_scaled").last().unwrap().parse().unwrap();
    let limit: f64 = column(&csv, "w2_rate_limit").last().unwrap().parse().unwrap();
    assert!((scaled - limit).abs() / limit <= 1e-3);
}

#[test]
fn seeded_simulation_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("simulate_small.cfg");
    assert_eq!(run(&["--config", cfg.to_str().unwrap()], dir.path(), None), 0);
    for name in ["sim_covariance.csv", "sim_coupling.csv", "sim_rank_w1.csv", "sim_summary.csv"] {
        assert_eq!(read(dir.path(), name), fs::read_to_string(golden(name)).unwrap(), "{name}");
    }
}

#[test]
fn output_independent_of_worker_count() {
    let cfg = golden("simulate_small.cfg");
    let (one, four) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "--workers", "1"], one.path(), None), 0);
    assert_eq!(run(&["--config", cfg.to_str().unwrap()], four.path(), Some("4")), 0);
    for name in ["sim_covariance.csv", "sim_coupling.csv", "sim_rank_w1.csv"] {
        assert_eq!(read(one.path(), name), read(four.path(), name), "{name}");
    }
    let ab_cfg = one.path().join("ab.cfg");
    fs::write(&ab_cfg, "[ab_identities]\na = 1, 2\nb = 0.5\nmc_samples = 5e4\n").unwrap();
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--scenario", "ab_identities", "--config", ab_cfg.to_str().unwrap()];
    assert_eq!(run(&args, x.path(), Some("1")), 0);
    assert_eq!(run(&args, y.path(), Some("3")), 0);
    for name in ["ab_routes.csv", "ab_identities.csv", "ab_summary.csv"] {
        assert_eq!(read(x.path(), name), read(y.path(), name), "{name}");
    }
}

#[test]
fn zero_constants_give_zero_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.cfg");
    fs::write(&cfg, "[bound_tables]\nc0 = 0\nm = 0\nb_sup = 0\nseries = finite\ncoefficients = 0\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["--scenario", "bound_tables", "--config", cfg.to_str().unwrap()], &out, None), 0);
    let csv = read(&out, "bound_tables.csv");
    let totals: Vec<String> = column(&csv, "total").into_iter().filter(|t| !t.is_empty()).collect();
    assert!(!totals.is_empty());
    assert!(totals.iter().all(|t| t.parse::<f64>().unwrap() == 0.0), "{totals:?}");
}

#[test]
fn precondition_rows_carry_flag_and_no_value() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--scenario", "bound_tables"], dir.path(), None), 0);
    let csv = read(dir.path(), "bound_tables.csv");
    let theorem = column(&csv, "theorem");
    let slack = column(&csv, "precondition_slack");
    let failed = column(&csv, "precondition_failed");
    let total = column(&csv, "total");
    let mut seen_failure = false;
    for i in 0..theorem.len() {
        if theorem[i] != "pairwise_entropy" {
            continue;
        }
        let negative = slack[i].parse::<f64>().unwrap() < 0.0;
        assert_eq!(failed[i] == "1", negative);
        assert_eq!(total[i].is_empty(), negative);
        seen_failure |= negative;
    }
    // default grid starts below 6e^{γT} ≈ 7.7 only when n < 8; n = 10 passes
    assert!(!seen_failure);
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, "[bound_tables]\nn = 5, 10\nk = 1\n").unwrap();
    let out = dir.path().join("small");
    assert_eq!(run(&["--scenario", "bound_tables", "--config", cfg.to_str().unwrap()], &out, None), 0);
    let csv = read(&out, "bound_tables.csv");
    assert!(csv.lines().any(|l| l.starts_with("pairwise_entropy,5,1,,") && l.contains(",1,,")));
}

#[test]
fn ab_identities_summary_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--scenario", "ab_identities"], dir.path(), None), 0);
    let csv = read(dir.path(), "ab_summary.csv");
    let row = csv.lines().find(|l| l.starts_with("max_quad_abs_err,")).unwrap();
    assert!(row.split(',').nth(1).unwrap().parse::<f64>().unwrap() <= 1e-8);
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["scenario"], "ab_identities");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[gaussian_rate]\nbogus = 1\n").unwrap();
    let out = dir.path().join("o1");
    assert_eq!(run(&["--scenario", "gaussian_rate", "--config", bad.to_str().unwrap()], &out, None), 2);
    assert!(read(&out, "error.txt").contains("bogus"));

    assert_eq!(run(&[], &dir.path().join("o2"), None), 2);

    let grid = dir.path().join("grid.cfg");
    fs::write(&grid, "[gaussian_rate]\nn = 4\nk = 9\n").unwrap();
    assert_eq!(run(&["--scenario", "gaussian_rate", "--config", grid.to_str().unwrap()], &dir.path().join("o3"), None), 2);

    // explicit Euler with a·dt = 10⁴ overflows within 100 steps
    let stiff = dir.path().join("stiff.cfg");
    fs::write(&stiff, "[simulate_validate]\na = 1e6\ndt = 0.01\nn = 4\nreplicas = 2\ntimes = 1\n").unwrap();
    let out = dir.path().join("o5");
    assert_eq!(run(&["--scenario", "simulate_validate", "--config", stiff.to_str().unwrap()], &out, None), 3);
    assert!(read(&out, "error.txt").contains("step"));

    let missing = dir.path().join("nope.cfg");
    assert_eq!(run(&["--config", missing.to_str().unwrap()], &dir.path().join("o4"), None), 4);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(run(&["--scenario", "gaussian_rate"], &blocker.join("sub"), None), 4);
}
