use std::ffi::OsString;
use std::path::Path;
use std::process::{Command, Output};

use vipr_cli::args::Command as Sub;
use vipr_cli::{command, parse, Parsed};

const BIN: &str = env!("CARGO_BIN_EXE_vipr");

fn vipr(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("VIPR_OUT_DIR")
        .env_remove("VIPR_THREADS")
        .output()
        .expect("binary runs")
}

fn argv(xs: &[&str]) -> Vec<OsString> {
    std::iter::once("vipr").chain(xs.iter().copied()).map(OsString::from).collect()
}

fn parsed(xs: &[&str]) -> vipr_cli::Cli {
    match parse(&argv(xs)).expect("parses") {
        Parsed::Run(cli) => cli,
        Parsed::Exit(e) => panic!("unexpected exit: {e}"),
    }
}

fn simulate(dir: &Path, taxa: &str, sites: &str) {
    let out = vipr(&["simulate", "--taxa", taxa, "--sites", sites, "--seed", "11", "--out", "sim"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_documents_every_flag() {
    let root = command();
    for sub in root.get_subcommands() {
        let name = sub.get_name().to_string();
        let out = vipr(&[&name, "--help"], Path::new("."));
        assert!(out.status.success());
        let help = String::from_utf8(out.stdout).unwrap();
        for arg in sub.get_arguments() {
            let id = arg.get_id().as_str();
            if id == "help" {
                continue;
            }
            assert!(
                arg.get_help().is_some_and(|h| !h.to_string().trim().is_empty()),
                "{name}: `{id}` has no help text"
            );
            let shown = match arg.get_long() {
                Some(long) => format!("--{long}"),
                None => format!("<{}>", id.to_uppercase()),
            };
            assert!(help.contains(&shown), "{name} --help does not mention {shown}:\n{help}");
        }
    }
}

#[test]
fn unknown_flag_is_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = vipr(&["infer", "x.fa", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vipr(&["infer", "missing.fa"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.fa"), ">a\nACGT\n>b\nAC\n").unwrap();
    assert_eq!(vipr(&["infer", "bad.fa"], dir.path()).status.code(), Some(2));
}

#[test]
fn conflicting_flags_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "3", "20");
    let out = vipr(
        &["infer", "sim/alignment.fasta", "--batch-size", "1", "--eval-every", "0", "--pop-size=-1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for needle in ["batch size", "eval cadence", "--pop-size"] {
        assert!(err.contains(needle), "missing `{needle}` in: {err}");
    }
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"infer": {"batch-size": 20, "seed": 4, "sweep_rates": [0.5], "plot": true}}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let Sub::Infer(a) = parsed(&["--config", c, "infer", "x.fa", "--seed", "9", "--sweep-rates", "0.2,0.3"]).command else {
        panic!("wrong subcommand");
    };
    assert_eq!(a.batch_size, 20);
    assert_eq!(a.seed, 9);
    assert_eq!(a.sweep_rates, vec![0.2, 0.3]);
    assert!(a.plot);
    assert_eq!(a.eval_every, 10);
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"infer": {"batch-sise": 20}}"#).unwrap();
    let res = parse(&argv(&["--config", cfg.to_str().unwrap(), "infer", "x.fa"]));
    assert!(matches!(res, Err(e) if e.exit_code() == 2));
    std::fs::write(&cfg, r#"{"infre": {}}"#).unwrap();
    let res = parse(&argv(&["--config", cfg.to_str().unwrap(), "infer", "x.fa"]));
    assert!(matches!(res, Err(e) if e.exit_code() == 2));
}

#[test]
fn out_dir_from_environment() {
    std::env::set_var("VIPR_OUT_DIR", "/tmp/from-env");
    let cli = parsed(&["simulate", "--taxa", "3", "--sites", "5"]);
    std::env::remove_var("VIPR_OUT_DIR");
    let Sub::Simulate(a) = cli.command else { panic!() };
    assert_eq!(a.out, Path::new("/tmp/from-env"));
}

#[test]
fn simulate_writes_truth_files() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "4", "30");
    let sim = dir.path().join("sim");
    let fasta = std::fs::read(sim.join("alignment.fasta")).unwrap();
    let a = vipr::parse_fasta(&fasta).unwrap();
    assert_eq!((a.n_taxa(), a.n_sites()), (4, 30));
    let nwk = std::fs::read_to_string(sim.join("true_tree.nwk")).unwrap();
    assert_eq!(vipr::UltrametricTree::from_newick(nwk.trim()).unwrap().n_taxa(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sim.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["n_sites"], 30);
    assert_eq!(manifest["pop_size"], 5.0);
}

#[test]
fn infer_mll_and_sample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "4", "50");
    let out = vipr(
        &["infer", "sim/alignment.fasta", "--iters", "30", "--n-tree-samples", "20", "--plot", "--out", "fit"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = dir.path().join("fit");
    let trace = std::fs::read_to_string(fit.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 3);
    assert_eq!(std::fs::read_to_string(fit.join("trees.nwk")).unwrap().lines().count(), 20);
    let metrics = std::fs::read_to_string(fit.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("sample,tree_length,log_likelihood"));
    assert_eq!(metrics.lines().count(), 21);
    assert!(std::fs::read_to_string(fit.join("plot.svg")).unwrap().starts_with("<svg"));

    let out = vipr(&["mll", "fit/params.json", "sim/alignment.fasta", "--n-samples", "100", "--json"], dir.path());
    assert!(out.status.success());
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["n_samples"], 100);
    assert!(m["estimate"].as_f64().unwrap() < 0.0);

    let a = vipr(&["sample", "fit/params.json", "--n", "5", "--seed", "2"], dir.path());
    let b = vipr(&["sample", "fit/params.json", "--n", "5", "--seed", "2"], dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 5);
}

#[test]
fn init_from_tree_file() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "3", "40");
    std::fs::write(
        dir.path().join("init.nwk"),
        "((t0:0.1,t1:0.1):0.2,t2:0.3);\n((t0:0.2,t2:0.2):0.1,t1:0.3);\n",
    )
    .unwrap();
    let out = vipr(
        &["infer", "sim/alignment.fasta", "--init", "trees=init.nwk", "--iters", "5", "--n-tree-samples", "5", "--out", "fit"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = vipr(&["infer", "sim/alignment.fasta", "--init", "trees=nope.nwk"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "3", "30");
    let out = vipr(
        &[
            "infer", "sim/alignment.fasta", "--sweep", "--sweep-rates", "0.01,0.03", "--sweep-restarts", "2",
            "--iters", "20", "--n-tree-samples", "5", "--deterministic", "--out", "fit",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let board = std::fs::read_to_string(dir.path().join("fit/sweep.csv")).unwrap();
    assert_eq!(board.lines().count(), 1 + 4);
}

#[test]
fn bench_scaling_smallest_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = vipr(&["bench-scaling", "--taxa-list", "3", "--min-time-ms", "5", "--out", "b"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b/scaling.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let secs: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(secs > 0.0, "{r}");
    }
}

#[test]
fn check_rejects_unknown_names() {
    let out = vipr(&["check", "--only", "density,nonsense"], Path::new("."));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fast_single_check_passes() {
    let out = vipr(&["check", "--only", "likelihood-oracle,prior-normalization"], Path::new("."));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8(out.stdout).unwrap().contains("2/2 checks passed"));
}
