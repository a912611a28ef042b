use std::process::Command;

use chs_core::commitments::binding_bound;
use chs_core::runner::{run, sweep, Experiment, ExperimentConfig, Format};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chs-lab"))
}

fn values(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn runs_are_byte_reproducible() {
    let cfg = ExperimentConfig::new(Experiment::PrsgTd)
        .with_param("mode", "sampled")
        .with_seed(7);
    let mut cfg = cfg;
    cfg.trials = 200;
    let a = run(&cfg).unwrap().to_json();
    let b = run(&cfg).unwrap().to_json();
    assert_eq!(a, b);
    let c = run(&cfg.clone().with_seed(8)).unwrap().to_json();
    assert_ne!(a, c);
}

#[test]
fn impossibility_rank_at_smallest_instance() {
    let r = run(&ExperimentConfig::new(Experiment::Impossibility)).unwrap();
    assert!(r.all_passed());
    assert_eq!(r.quantities["rank_rho1"], 16.0);
}

#[test]
fn honest_committer_always_opens() {
    let cfg = ExperimentConfig::new(Experiment::CommitBinding).with_param("adversary", "honest-0");
    let r = run(&cfg).unwrap();
    assert!(r.all_passed());
    assert!((r.quantities["p0"] - 1.0).abs() < 1e-9);
}

#[test]
fn lambda_sweep_is_ordered_and_decreasing() {
    let base = ExperimentConfig::new(Experiment::PrsgTd)
        .with_param("n", 6)
        .with_param("t", 2);
    let s = sweep(&base, "lam", &values(&["1", "2", "3", "4"])).unwrap();
    assert!(s.all_passed());
    let tds: Vec<f64> = s
        .runs
        .iter()
        .map(|r| r.as_ref().unwrap().quantities["td_rho_sigma"])
        .collect();
    assert_eq!(tds.len(), 4);
    assert!(tds.windows(2).all(|w| w[1] <= w[0]), "{tds:?}");
    assert_eq!(s.to_csv().lines().count(), 5);
}

#[test]
fn copies_sweep_reports_binding_bound() {
    let base = ExperimentConfig::new(Experiment::CommitBinding).with_param("adversary", "honest-0");
    let s = sweep(&base, "p", &values(&["1", "2", "3"])).unwrap();
    let csv = s.to_csv();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header
        .iter()
        .position(|h| *h == "bound_sum_binding_bound")
        .unwrap();
    for (p, line) in (1..).zip(lines) {
        let got: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!((got - binding_bound(1, 2, p)).abs() < 1e-12, "p {p}");
    }
}

#[test]
fn sweep_edge_cases() {
    let base = ExperimentConfig::new(Experiment::Pgm);
    let empty = sweep(&base, "n", &[]).unwrap();
    assert!(empty.runs.is_empty() && empty.all_passed());
    assert!(sweep(&base, "nope", &values(&["1"])).is_err());
    // one bad value fails alone
    let mixed = sweep(&base, "n", &values(&["1", "40"])).unwrap();
    assert!(mixed.runs[0].is_ok() && mixed.runs[1].is_err());
    assert!(!mixed.all_passed());
    assert!(mixed.to_csv().lines().nth(2).unwrap().contains("error"));
}

#[test]
fn unknown_parameters_are_rejected() {
    let cfg = ExperimentConfig::new(Experiment::Pgm).with_param("lam", 2);
    assert!(run(&cfg).is_err());
    let cfg = ExperimentConfig::new(Experiment::Pgm).with_param("measure", "sideways");
    assert!(run(&cfg).is_err());
}

#[test]
fn config_file_then_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("out.csv");
    std::fs::write(
        &cfg_path,
        r#"{"experiment": "impossibility", "params": {"n": 2, "t": 1}, "format": "csv"}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::from_json_file(&cfg_path).unwrap();
    assert_eq!(cfg.format, Format::Csv);
    let status = bin()
        .args(["impossibility", "--config"])
        .arg(&cfg_path)
        .args(["--t", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("t,2"), "{text}");
}

#[test]
fn exit_codes() {
    let ok = bin().args(["pgm", "--n", "1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(json["experiment"], "pgm");
    let err = bin().args(["pgm", "--n", "40"]).output().unwrap();
    assert_eq!(err.status.code(), Some(2));
    let bad_flag = bin().args(["pgm", "--lam", "1"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn acceptance_subset_from_cli() {
    let out = bin().args(["acceptance", "--only", "9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("[PASS] criterion  9"), "{text}");
}
