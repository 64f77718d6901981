//! Acceptance criteria, one test each, run one at a time. Every test prints
//! a single `PASS`/`FAIL` line.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use vipr::validation::{self, CheckReport, Level};

const BIN: &str = env!("CARGO_BIN_EXE_vipr");
const SEED: u64 = 2024;

static SERIAL: Mutex<()> = Mutex::new(());

fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn verdict(id: usize, name: &str, passed: bool, summary: &str, seconds: f64) {
    emit(&format!(
        "{} criterion {id} {name}: {summary} ({seconds:.1}s)",
        if passed { "PASS" } else { "FAIL" }
    ));
}

fn criterion(id: usize, check: fn(Level, u64) -> CheckReport) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let r = check(Level::Full, SEED);
    verdict(id, &r.name, r.passed, &r.summary, r.seconds);
    for d in &r.details {
        emit(&format!("    {d}"));
    }
    assert!(r.passed, "criterion {id} failed: {}", r.summary);
}

fn vipr(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("VIPR_OUT_DIR")
        .env_remove("VIPR_THREADS")
        .output()
        .expect("binary runs")
}

#[test]
fn criterion_1_density() {
    criterion(1, validation::check_density);
}

#[test]
fn criterion_2_likelihood_oracle() {
    criterion(2, validation::check_likelihood_oracle);
}

#[test]
fn criterion_3_prior_normalization() {
    criterion(3, validation::check_prior_normalization);
}

#[test]
fn criterion_4_gradients() {
    criterion(4, validation::check_gradients);
}

#[test]
fn criterion_5_estimator_unbiasedness() {
    criterion(5, validation::check_unbiasedness);
}

#[test]
fn criterion_6_evidence_recovery() {
    criterion(6, validation::check_evidence_recovery);
}

#[test]
fn criterion_7_topology_recovery() {
    criterion(7, validation::check_topology_recovery);
}

#[test]
fn criterion_8_scaling() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = vipr(&["bench-scaling", "--taxa-list", "8,16,32,64", "--seed", "1", "--out", "bench"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let slopes = std::fs::read_to_string(dir.path().join("bench/slopes.csv")).unwrap();
    let slope: f64 = slopes
        .lines()
        .find_map(|l| l.strip_prefix("density_gradient,"))
        .expect("density_gradient row")
        .parse()
        .unwrap();
    let passed = (1.6..=2.6).contains(&slope);
    verdict(
        8,
        "scaling",
        passed,
        &format!("density+gradient log-log slope {slope:.2} over N = 8..64 (limit [1.6, 2.6])"),
        start.elapsed().as_secs_f64(),
    );
    for line in String::from_utf8_lossy(&out.stdout).lines() {
        emit(&format!("    {line}"));
    }
    assert!(passed);
}

#[test]
fn criterion_9_determinism() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let sim = vipr(&["simulate", "--taxa", "6", "--sites", "300", "--seed", "5", "--out", "sim"], dir.path());
    assert!(sim.status.success());
    let run = |out: &str, threads: &str| {
        let o = vipr(
            &[
                "--threads", threads, "infer", "sim/alignment.fasta", "--deterministic", "--seed", "7",
                "--iters", "200", "--out", out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a", "1");
    run("b", "3");
    let files = ["trace.csv", "params.json", "trees.nwk"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| {
            let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
            x.is_empty() || x != y
        })
        .collect();
    let passed = differing.is_empty();
    let summary = if passed {
        "trace.csv, params.json, trees.nwk byte-identical across two runs (1 and 3 threads)".to_string()
    } else {
        format!("differing: {}", differing.join(", "))
    };
    verdict(9, "determinism", passed, &summary, start.elapsed().as_secs_f64());
    assert!(passed);
}
