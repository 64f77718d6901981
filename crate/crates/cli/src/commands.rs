use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use vipr::estimators::{draw_weighted_trees, estimate_mll, mll_from_log_weights, MllEstimate};
use vipr::numeric::log_log_slope;
use vipr::rng::{substream, STREAM_EVAL, STREAM_SAMPLE};
use vipr::synthetic::{simulate_coalescent, simulate_sequences};
use vipr::trainer::{
    initialize_from_distances, initialize_from_trees, sweep, trace_to_csv, train_with_observer, RunConfig,
    TraceRecord,
};
use vipr::tree::taxon_set;
use vipr::validation::{self, time_density_gradient, time_estimator_iteration, TimingBudget};
use vipr::variational::sample_tree;
use vipr::{parse_fasta, Alignment, Error, PriorConfig, UltrametricTree, VariationalParams};

use crate::args::{BenchArgs, CheckArgs, InferArgs, InitSource, MllArgs, SampleArgs, SimulateArgs};
use crate::error::CliError;
use crate::plot;

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(format!("cannot read {}", path.display()), e))
}

fn read_alignment(path: &Path) -> Result<Alignment, CliError> {
    parse_fasta(&read_bytes(path)?).map_err(|e| CliError::input(path.display(), e))
}

fn read_params(path: &Path) -> Result<VariationalParams, CliError> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| CliError::input(path.display(), e))?;
    VariationalParams::from_json(&text).map_err(|e| CliError::input(path.display(), e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::failed(format!("cannot create {}", dir.display()), e))
}

/// Write through a temporary file so readers never see a partial file.
fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::failed(format!("cannot write {}", path.display()), e))
}

fn prior_from(pop_size: f64, problems: &mut Vec<String>) -> Option<PriorConfig> {
    match PriorConfig::new(pop_size) {
        Ok(p) => Some(p),
        Err(e) => {
            problems.push(format!("--pop-size: {e}"));
            None
        }
    }
}

fn report_problems(problems: Vec<String>) -> Result<(), CliError> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::BadInput(problems.join("; ")))
    }
}

/// Put the alignment rows in the order of the parameter taxa.
fn match_taxa(params: &VariationalParams, a: Alignment) -> Result<Alignment, CliError> {
    if params.taxa().as_ref() == a.taxa() {
        return Ok(a);
    }
    if params.n_taxa() != a.n_taxa() {
        return Err(CliError::BadInput(format!(
            "parameters have {} taxa but the alignment has {}",
            params.n_taxa(),
            a.n_taxa()
        )));
    }
    a.subset_taxa(params.taxa()).map_err(|e| CliError::input("alignment and parameters disagree", e))
}

fn train_error(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(_) | Error::TaxaMismatch(_) => CliError::BadInput(e.to_string()),
        _ => CliError::Aborted(e.to_string()),
    }
}

fn read_init_trees(path: &Path, a: &Alignment) -> Result<Vec<UltrametricTree>, CliError> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| CliError::input(path.display(), e))?;
    let taxa = taxon_set(a.taxa());
    text.split_inclusive(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, s)| {
            UltrametricTree::from_newick_with_taxa(s, taxa.clone())
                .map_err(|e| CliError::input(format!("{} tree {}", path.display(), i + 1), e))
        })
        .collect()
}

fn run_config(args: &InferArgs, problems: &mut Vec<String>) -> RunConfig {
    let run = RunConfig {
        estimator: args.estimator,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        max_iterations: args.iters,
        time_budget: args.time_budget.filter(|b| b.is_finite() && *b > 0.0).map(Duration::from_secs_f64),
        eval_every: args.eval_every,
        eval_samples: args.eval_samples,
        seed: args.seed,
        deterministic: args.deterministic,
    };
    if let Err(e) = run.validate() {
        problems.push(e.to_string());
    }
    if let Some(b) = args.time_budget {
        if !(b.is_finite() && b > 0.0) {
            problems.push(format!("--time-budget must be positive, got {b}"));
        }
        if args.deterministic {
            problems.push("--time-budget conflicts with --deterministic".into());
        }
    }
    if args.iters == 0 {
        problems.push("--iters must be at least 1".into());
    }
    if args.sweep {
        if args.sweep_rates.is_empty() || args.sweep_rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            problems.push("--sweep-rates must be positive numbers".into());
        }
        if args.sweep_restarts == 0 {
            problems.push("--sweep-restarts must be at least 1".into());
        }
    }
    if args.n_tree_samples < 2 {
        problems.push("--n-tree-samples must be at least 2".into());
    }
    run
}

fn sweep_csv(entries: &[vipr::trainer::SweepEntry]) -> String {
    let mut out = String::from("learning_rate,restart,seed,statistic,error\n");
    for e in entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.learning_rate,
            e.restart,
            e.seed,
            e.statistic,
            e.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
        );
    }
    out
}

pub fn infer(args: &InferArgs) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let run = run_config(args, &mut problems);
    let prior = prior_from(args.pop_size, &mut problems);
    report_problems(problems)?;
    let prior = prior.expect("checked above");
    let a = read_alignment(&args.fasta)?;
    let init = match &args.init {
        InitSource::Distances => initialize_from_distances(&a).map_err(|e| CliError::input("initialization", e))?,
        InitSource::Trees(path) => initialize_from_trees(&read_init_trees(path, &a)?)
            .map_err(|e| CliError::input(format!("initialization from {}", path.display()), e))?,
    };
    create_dir(&args.out)?;
    let trace_path = args.out.join("trace.csv");
    let params_path = args.out.join("params.json");
    log::info!(
        "{} taxa, {} sites ({} patterns)",
        a.n_taxa(),
        a.n_sites(),
        a.n_patterns()
    );

    let (params, trace) = if args.sweep {
        let res = sweep(&run, &args.sweep_rates, args.sweep_restarts, &a, &prior, &init).map_err(train_error)?;
        write_file(&args.out.join("sweep.csv"), &sweep_csv(&res.leaderboard))?;
        println!(
            "sweep: best learning rate {} (restart {}), statistic {:.4}",
            res.best_entry.learning_rate, res.best_entry.restart, res.best_entry.statistic
        );
        (res.best.params, res.best.trace)
    } else {
        let mut so_far: Vec<TraceRecord> = Vec::new();
        let res = train_with_observer(&run, &a, &prior, init, |rec, params| {
            so_far.push(rec.clone());
            log::info!("iteration {} elbo {:.4} mll {:?}", rec.iteration, rec.elbo, rec.mll);
            write_file(&trace_path, &trace_to_csv(&so_far))
                .and_then(|_| write_file(&params_path, &params.to_json()))
                .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
        })
        .map_err(train_error)?;
        if res.skipped > 0 {
            log::warn!("{} iterations skipped", res.skipped);
        }
        (res.params, res.trace)
    };
    write_file(&trace_path, &trace_to_csv(&trace))?;
    write_file(&params_path, &params.to_json())?;

    let mut rng = substream(args.seed, &[STREAM_SAMPLE]);
    let samples = draw_weighted_trees(&params, &a, &prior, args.n_tree_samples, &mut rng)
        .map_err(|e| CliError::Aborted(format!("posterior sampling failed: {e}")))?;
    let mut trees = String::new();
    let mut metrics = String::from("sample,tree_length,log_likelihood\n");
    for (i, s) in samples.iter().enumerate() {
        trees.push_str(&s.tree.to_newick());
        trees.push('\n');
        let _ = writeln!(metrics, "{i},{},{}", s.tree.tree_length(), s.log_likelihood);
    }
    write_file(&args.out.join("trees.nwk"), &trees)?;
    write_file(&args.out.join("metrics.csv"), &metrics)?;
    if args.plot {
        let lengths: Vec<f64> = samples.iter().map(|s| s.tree.tree_length()).collect();
        let lls: Vec<f64> = samples.iter().map(|s| s.log_likelihood).collect();
        write_file(&args.out.join("plot.svg"), &plot::render(&trace, &lengths, &lls))?;
    }
    let weights: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    match mll_from_log_weights(&weights) {
        Ok(m) => println!(
            "marginal log-likelihood {:.4} ± {:.4} ({} samples, ESS {:.1})",
            m.estimate, m.std_error, m.n_samples, m.effective_sample_size
        ),
        Err(e) => log::warn!("final marginal-likelihood estimate failed: {e}"),
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn mll(args: &MllArgs) -> Result<MllEstimate, CliError> {
    let mut problems = Vec::new();
    let prior = prior_from(args.pop_size, &mut problems);
    if args.n_samples < 2 {
        problems.push("--n-samples must be at least 2".into());
    }
    report_problems(problems)?;
    let params = read_params(&args.params)?;
    let a = match_taxa(&params, read_alignment(&args.fasta)?)?;
    let mut rng = substream(args.seed, &[STREAM_EVAL]);
    let m = estimate_mll(&params, &a, &prior.expect("checked above"), args.n_samples, &mut rng)
        .map_err(|e| CliError::failed("importance sampling", e))?;
    if args.json {
        let text = serde_json::to_string(&m).map_err(|e| CliError::failed("json", e))?;
        println!("{text}");
    } else {
        println!(
            "marginal log-likelihood {:.4} ± {:.4} ({} samples, ESS {:.1})",
            m.estimate, m.std_error, m.n_samples, m.effective_sample_size
        );
    }
    Ok(m)
}

pub fn sample(args: &SampleArgs) -> Result<(), CliError> {
    let params = read_params(&args.params)?;
    let mut rng = substream(args.seed, &[STREAM_SAMPLE]);
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for _ in 0..args.n {
        let s = sample_tree(&params, &mut rng).map_err(|e| CliError::failed("sampling", e))?;
        writeln!(out, "{}", s.tree().to_newick()).map_err(|e| CliError::failed("stdout", e))?;
    }
    out.flush().map_err(|e| CliError::failed("stdout", e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    n_taxa: usize,
    n_sites: usize,
    pop_size: f64,
    alignment: &'a str,
    true_tree: &'a str,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let prior = prior_from(args.pop_size, &mut problems);
    if args.taxa < 2 {
        problems.push("--taxa must be at least 2".into());
    }
    report_problems(problems)?;
    let mut rng = substream(args.seed, &[]);
    let tree = simulate_coalescent(args.taxa, prior.expect("checked above").n_e, &mut rng)
        .map_err(|e| CliError::failed("simulation", e))?;
    let a = simulate_sequences(&tree, args.sites, &mut rng).map_err(|e| CliError::failed("simulation", e))?;
    create_dir(&args.out)?;
    let manifest = Manifest {
        seed: args.seed,
        n_taxa: args.taxa,
        n_sites: args.sites,
        pop_size: args.pop_size,
        alignment: "alignment.fasta",
        true_tree: "true_tree.nwk",
    };
    write_file(&args.out.join("alignment.fasta"), &a.to_fasta())?;
    write_file(&args.out.join("true_tree.nwk"), &format!("{}\n", tree.to_newick()))?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::failed("json", e))?;
    write_file(&args.out.join("manifest.json"), &format!("{json}\n"))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn check(args: &CheckArgs) -> Result<(), CliError> {
    let names: Vec<String> = if args.only.is_empty() {
        validation::check_names().into_iter().map(String::from).collect()
    } else {
        args.only.clone()
    };
    let unknown: Vec<&str> = names
        .iter()
        .map(String::as_str)
        .filter(|n| !validation::check_names().contains(n))
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::BadInput(format!(
            "unknown check(s) {} (available: {})",
            unknown.join(", "),
            validation::check_names().join(", ")
        )));
    }
    let mut failed = 0;
    for name in &names {
        let r = validation::run_check(name, args.level, args.seed).map_err(|e| CliError::input("--only", e))?;
        println!("{r}");
        if args.verbose || !r.passed {
            for d in &r.details {
                println!("    {d}");
            }
        }
        if !r.passed {
            failed += 1;
        }
    }
    println!("{}/{} checks passed", names.len() - failed, names.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} check(s) failed")))
    }
}

pub const DENSITY_PATH: &str = "density_gradient";

pub fn bench_scaling(args: &BenchArgs) -> Result<(), CliError> {
    let mut problems = Vec::new();
    if args.taxa_list.is_empty() {
        problems.push("--taxa-list is empty".into());
    }
    if let Some(n) = args.taxa_list.iter().find(|&&n| n < 2) {
        problems.push(format!("--taxa-list entries must be at least 2, got {n}"));
    }
    for e in &args.estimators {
        if args.batch_size < e.min_batch() {
            problems.push(format!("--batch-size {} is too small for {e}", args.batch_size));
        }
    }
    report_problems(problems)?;
    create_dir(&args.out)?;
    let budget = TimingBudget::new(Duration::from_millis(args.min_time_ms), args.iters);
    let mut paths: Vec<String> = vec![DENSITY_PATH.into()];
    paths.extend(args.estimators.iter().map(|e| e.to_string()));
    let mut rows = String::from("n_taxa,path,seconds_per_iter\n");
    let mut table: Vec<Vec<f64>> = vec![Vec::new(); paths.len()];
    for &n in &args.taxa_list {
        let secs = time_density_gradient(n, budget, args.seed).map_err(|e| CliError::failed("timing", e))?;
        table[0].push(secs);
        for (j, e) in args.estimators.iter().enumerate() {
            let s = time_estimator_iteration(n, *e, args.batch_size, args.sites, budget, args.seed)
                .map_err(|err| CliError::failed(format!("timing {e}"), err))?;
            table[j + 1].push(s);
        }
        for (p, col) in paths.iter().zip(&table) {
            let _ = writeln!(rows, "{n},{p},{:e}", col.last().expect("just pushed"));
            println!("N={n:<4} {p:<18} {:.3e} s/iter", col.last().expect("just pushed"));
        }
    }
    let xs: Vec<f64> = args.taxa_list.iter().map(|&n| n as f64).collect();
    let mut slopes = String::from("path,slope\n");
    for (p, col) in paths.iter().zip(&table) {
        let slope = if args.taxa_list.len() >= 2 { log_log_slope(&xs, col) } else { f64::NAN };
        let _ = writeln!(slopes, "{p},{slope}");
        println!("slope {p:<18} {slope:.3}");
    }
    write_file(&args.out.join("scaling.csv"), &rows)?;
    write_file(&args.out.join("slopes.csv"), &slopes)?;
    Ok(())
}
