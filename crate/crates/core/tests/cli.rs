use std::path::Path;
use std::process::{Command, Output};

use inertia_uc::cases;
use inertia_uc::pricing::PriceSeries;
use inertia_uc::scenario::read_cell_manifest;
use inertia_uc::solver::UcSolution;
use sha2::{Digest, Sha256};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inertia-uc"))
        .args(args)
        .env_remove("INERTIA_UC_CASE")
        .env_remove("INERTIA_UC_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(code(&cli(&["validate", "--case", "peaker-0"])), 0);
    assert_eq!(code(&cli(&["validate", "--case", "/no/such/case.json"])), 1);
    assert_eq!(code(&cli(&["validate"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
    assert_eq!(code(&cli(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut case = cases::inertia_peaker(0);
    case.sgs[0].p_min = 1e4;
    std::fs::write(&bad, serde_json::to_string(&case).unwrap()).unwrap();
    let o = cli(&["validate", "--case", s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sgs[0](B1)"));
}

#[test]
fn infeasible_case_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heavy.json");
    let case = cases::single_sg(&[80.0, 500.0]);
    std::fs::write(&path, case.to_json()).unwrap();
    let out = dir.path().join("sol.json");
    let o = cli(&["solve", "--case", s(&path), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn case_can_come_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_inertia-uc"))
        .args(["validate"])
        .env("INERTIA_UC_CASE", "min-gen-1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn solve_price_settle_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("sol.json");
    assert_eq!(code(&cli(&["solve", "--case", "peaker-1", "--out", s(&sol)])), 0);
    let parsed: UcSolution = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    assert_eq!(parsed.schedule.u.len(), 3);

    let o = cli(&["price", "--case", "peaker-1", "--scheme", "achp", "--allocation", "first-hour", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let p = PriceSeries::read(dir.path(), "prices_achp").unwrap();
    assert!(p.chi.iter().any(|&c| c > 0.0));

    let o = cli(&["settle", "--case", "peaker-1", "--scheme", "aip", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("settlement_aip_units.csv").exists());
}

#[test]
fn simulate_prints_the_initial_slope() {
    let o = cli(&["simulate", "--energy", "37220", "--load", "12651", "--outage", "1500"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("rocof -1.208"));
    assert_eq!(code(&cli(&["simulate", "--energy", "0", "--load", "100", "--outage", "10"])), 1);
}

#[test]
fn run_matrix_records_failures_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "run-matrix", "--case", "peaker-0", "--eta", "0.1,0.9", "--scenarios", "base,aip", "--mc-samples", "500",
        "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let failed = read_cell_manifest(&dir.path().join("eta-0.9/aip/manifest.json")).unwrap();
    assert_eq!(failed.status, "failed");
    assert_eq!(failed.failure.unwrap().stage, "penetration");

    let ok_dir = dir.path().join("eta-0.1/base");
    let ok = read_cell_manifest(&ok_dir.join("manifest.json")).unwrap();
    assert_eq!(ok.status, "ok");
    assert!(!ok.artifacts.is_empty());
    for a in &ok.artifacts {
        let bytes = std::fs::read(ok_dir.join(&a.path)).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, a.sha256, "{}", a.path);
    }
    // the base schedule ignores the requirement and comes up short
    assert!(!ok.summary.deficit_hours.is_empty());
}

#[test]
fn run_matrix_reads_a_config_and_lets_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"case": "min-gen-0", "scenarios": ["mp"], "out": "ignored", "mc_samples": 200}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = cli(&["run-matrix", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("mp/manifest.json").exists());
    assert!(!Path::new("ignored").exists());

    std::fs::write(&cfg, r#"{"case": "min-gen-0", "scenarios": [], "out": "x"}"#).unwrap();
    assert_eq!(code(&cli(&["run-matrix", "--config", s(&cfg)])), 1);
}
