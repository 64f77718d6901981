//! Adam ascent on the ELBO, initialization, and learning-rate sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{Alignment, MISSING};
use crate::error::{Error, Result};
use crate::estimators::{estimate_mll, evaluate_batch, grad_loor, grad_reparam, grad_vimco, GradientEstimate};
use crate::numeric::{mean, sample_variance};
use crate::prior::PriorConfig;
use crate::rng::{derive_seed, substream, STREAM_EVAL, STREAM_TRAIN};
use crate::tree::{n_pairs, pair_of, taxon_set, UltrametricTree};
use crate::variational::VariationalParams;

pub const SIGMA_FLOOR: f64 = 0.01;
pub const DISTANCE_T_FLOOR: f64 = 1e-4;
pub const DISTANCE_SIGMA: f64 = 0.5;
pub const DISTANCE_P_MAX: f64 = 0.74;
pub const MAX_CONSECUTIVE_SKIPS: usize = 50;
pub const DEFAULT_SWEEP_RATES: [f64; 4] = [0.001, 0.003, 0.01, 0.03];
pub const DEFAULT_SWEEP_RESTARTS: usize = 10;
/// Runs are ranked by the mean of this many trailing MLL estimates.
pub const SELECTION_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
        }
    }
}

/// Bias-corrected Adam, ascending. A non-finite gradient leaves state and
/// parameters untouched and returns an error.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grad.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: state has {} entries, params {}, gradient {}",
            state.m.len(),
            params.len(),
            grad.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] += state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Per pair: mean and standard deviation of the log coalescent times across
/// the trees, with the deviation floored at [`SIGMA_FLOOR`].
pub fn initialize_from_trees(trees: &[UltrametricTree]) -> Result<VariationalParams> {
    if trees.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 trees to initialize".into()));
    }
    let taxa = trees[0].taxa().clone();
    if let Some(bad) = trees.iter().position(|t| t.taxa() != &taxa) {
        return Err(Error::TaxaMismatch(format!("tree {bad} has a different taxon set")));
    }
    let p = n_pairs(taxa.len());
    let logs: Vec<Vec<f64>> = trees
        .iter()
        .map(|t| {
            t.pair_times()
                .into_iter()
                .map(|x| {
                    if x > 0.0 {
                        Ok(x.ln())
                    } else {
                        Err(Error::InvalidArgument("tree has a zero coalescent time".into()))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut mu = Vec::with_capacity(p);
    let mut sigma = Vec::with_capacity(p);
    for i in 0..p {
        let xs: Vec<f64> = logs.iter().map(|l| l[i]).collect();
        mu.push(mean(&xs));
        sigma.push(sample_variance(&xs).sqrt().max(SIGMA_FLOOR));
    }
    VariationalParams::new(taxa, mu, sigma)
}

/// Jukes-Cantor distance from a mismatch proportion, clamped below
/// saturation.
pub fn jc_distance(p_hat: f64) -> f64 {
    let p = p_hat.clamp(0.0, DISTANCE_P_MAX);
    -0.75 * (1.0 - 4.0 / 3.0 * p).ln()
}

/// `mu = ln max(d / 2, t_floor)` from pairwise Jukes-Cantor distances and a
/// global `sigma`.
pub fn initialize_from_distances(a: &Alignment) -> Result<VariationalParams> {
    let n = a.n_taxa();
    let rows: Vec<Vec<u8>> = (0..n).map(|i| a.row(i)).collect();
    let mu = (0..n_pairs(n))
        .map(|idx| {
            let (u, v) = pair_of(idx, n);
            let (mut same, mut diff) = (0usize, 0usize);
            for (x, y) in rows[u].iter().zip(&rows[v]) {
                if *x != MISSING && *y != MISSING {
                    if x == y {
                        same += 1;
                    } else {
                        diff += 1;
                    }
                }
            }
            if same + diff == 0 {
                return DISTANCE_T_FLOOR.ln();
            }
            let d = jc_distance(diff as f64 / (same + diff) as f64);
            (0.5 * d).max(DISTANCE_T_FLOOR).ln()
        })
        .collect();
    VariationalParams::new(taxon_set(a.taxa()), mu, vec![DISTANCE_SIGMA; n_pairs(n)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Loor,
    Reparam,
    Vimco,
}

impl Estimator {
    pub fn min_batch(self) -> usize {
        match self {
            Estimator::Reparam => 1,
            _ => 2,
        }
    }

    pub fn estimate(self, batch: &crate::estimators::BatchEvaluation) -> Result<GradientEstimate> {
        match self {
            Estimator::Loor => grad_loor(batch),
            Estimator::Reparam => grad_reparam(batch),
            Estimator::Vimco => grad_vimco(batch),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Loor => "loor",
            Estimator::Reparam => "reparam",
            Estimator::Vimco => "vimco",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loor" => Ok(Estimator::Loor),
            "reparam" => Ok(Estimator::Reparam),
            "vimco" => Ok(Estimator::Vimco),
            _ => Err(Error::InvalidArgument(format!(
                "unknown estimator `{s}` (expected loor, reparam or vimco)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub estimator: Estimator,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// ignored in deterministic mode
    pub time_budget: Option<Duration>,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seed: u64,
    /// wallclock values are written as 0 and the time budget is off, so
    /// traces are reproducible byte for byte
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Loor,
            batch_size: 10,
            learning_rate: 0.01,
            max_iterations: 2000,
            time_budget: None,
            eval_every: 10,
            eval_samples: 50,
            seed: 0,
            deterministic: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size < self.estimator.min_batch() {
            problems.push(format!(
                "batch size {} is too small for {} (minimum {})",
                self.batch_size,
                self.estimator,
                self.estimator.min_batch()
            ));
        }
        if self.eval_every == 0 {
            problems.push("eval cadence must be at least 1".into());
        }
        if self.eval_samples < 2 {
            problems.push("eval sample count must be at least 2".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning rate {} is invalid", self.learning_rate));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub elapsed_s: f64,
    /// mean batch ELBO over the iterations since the previous record
    pub elbo: f64,
    pub mll: Option<f64>,
    pub mll_se: Option<f64>,
    pub grad_norm: f64,
}

pub const TRACE_HEADER: &str = "iteration,elapsed_s,elbo,mll,mll_se,grad_norm";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            self.elapsed_s,
            self.elbo,
            opt(self.mll),
            opt(self.mll_se),
            self.grad_norm
        )
    }
}

pub fn trace_to_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: VariationalParams,
    pub trace: Vec<TraceRecord>,
    /// batch ELBO per iteration; NaN where the iteration was skipped
    pub elbo_history: Vec<f64>,
    pub skipped: usize,
}

impl TrainResult {
    /// Mean of the last [`SELECTION_WINDOW`] finite MLL estimates.
    pub fn selection_statistic(&self) -> f64 {
        let tail: Vec<f64> = self
            .trace
            .iter()
            .rev()
            .filter_map(|r| r.mll.filter(|m| m.is_finite()))
            .take(SELECTION_WINDOW)
            .collect();
        if tail.is_empty() {
            f64::NEG_INFINITY
        } else {
            mean(&tail)
        }
    }
}

/// Trailing moving average; entry `i` averages `xs[i+1-window ..= i]`
/// (shorter at the start), ignoring NaN.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let vals: Vec<f64> = xs[lo..=i].iter().copied().filter(|x| !x.is_nan()).collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                mean(&vals)
            }
        })
        .collect()
}

pub fn train(run: &RunConfig, a: &Alignment, prior: &PriorConfig, init: VariationalParams) -> Result<TrainResult> {
    train_with_observer(run, a, prior, init, |_, _| Ok(()))
}

/// The training loop. `observer` sees every trace record with the current
/// parameters (checkpoint writing hooks in here).
pub fn train_with_observer<F>(
    run: &RunConfig,
    a: &Alignment,
    prior: &PriorConfig,
    init: VariationalParams,
    mut observer: F,
) -> Result<TrainResult>
where
    F: FnMut(&TraceRecord, &VariationalParams) -> Result<()>,
{
    run.validate()?;
    if init.taxa().as_ref() != a.taxa() {
        return Err(Error::TaxaMismatch(
            "initial parameters and alignment name different taxa".into(),
        ));
    }
    let start = Instant::now();
    let mut rng_train = substream(run.seed, &[STREAM_TRAIN]);
    let mut rng_eval = substream(run.seed, &[STREAM_EVAL]);
    let mut params = init;
    let mut adam = AdamState::new(params.dim(), run.learning_rate);
    let mut trace = Vec::new();
    let mut history = Vec::with_capacity(run.max_iterations);
    let mut skipped = 0;
    let mut consecutive = 0;
    let mut last_norm = 0.0;
    let mut since_record = Vec::new();

    for it in 1..=run.max_iterations {
        if !run.deterministic {
            if let Some(b) = run.time_budget {
                if start.elapsed() >= b {
                    break;
                }
            }
        }
        let step = evaluate_batch(
            &params,
            a,
            prior,
            run.batch_size,
            &mut rng_train,
            run.estimator == Estimator::Reparam,
        )
        .and_then(|batch| run.estimator.estimate(&batch))
        .and_then(|est| {
            let mut v = params.to_vector();
            let mut trial = adam.clone();
            adam_step(&mut trial, &mut v, &est.grad)?;
            let next = params.with_vector(&v)?;
            Ok((est, trial, next))
        });
        match step {
            Ok((est, trial, next)) => {
                adam = trial;
                params = next;
                consecutive = 0;
                last_norm = est.norm();
                history.push(est.elbo_estimate);
                since_record.push(est.elbo_estimate);
            }
            Err(e) => {
                skipped += 1;
                consecutive += 1;
                history.push(f64::NAN);
                log::warn!("iteration {it} skipped: {e}");
                if consecutive > MAX_CONSECUTIVE_SKIPS {
                    return Err(Error::TrainingAborted(format!(
                        "{consecutive} consecutive iterations failed at iteration {it}; last error: {e}"
                    )));
                }
            }
        }
        if it % run.eval_every == 0 || it == run.max_iterations {
            let (mll, mll_se) = match estimate_mll(&params, a, prior, run.eval_samples, &mut rng_eval) {
                Ok(m) => (Some(m.estimate), Some(m.std_error)),
                Err(e) => {
                    log::warn!("MLL estimate failed at iteration {it}: {e}");
                    (None, None)
                }
            };
            let elbo = if since_record.is_empty() { f64::NAN } else { mean(&since_record) };
            since_record.clear();
            let record = TraceRecord {
                iteration: it,
                elapsed_s: if run.deterministic { 0.0 } else { start.elapsed().as_secs_f64() },
                elbo,
                mll,
                mll_se,
                grad_norm: last_norm,
            };
            observer(&record, &params)?;
            trace.push(record);
        }
    }
    Ok(TrainResult {
        params,
        trace,
        elbo_history: history,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub learning_rate: f64,
    pub restart: usize,
    pub seed: u64,
    pub statistic: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best: TrainResult,
    pub best_entry: SweepEntry,
    /// sorted by statistic, best first; failed runs last
    pub leaderboard: Vec<SweepEntry>,
}

/// Train every `(rate, restart)` cell with its own seed and keep the run with
/// the highest mean of its last ten MLL estimates.
pub fn sweep(
    template: &RunConfig,
    rates: &[f64],
    restarts: usize,
    a: &Alignment,
    prior: &PriorConfig,
    init: &VariationalParams,
) -> Result<SweepResult> {
    if rates.is_empty() || restarts == 0 {
        return Err(Error::InvalidArgument("sweep needs at least one rate and one restart".into()));
    }
    let cells: Vec<(f64, usize, u64)> = rates
        .iter()
        .enumerate()
        .flat_map(|(ri, &lr)| {
            (0..restarts).map(move |r| (lr, r, derive_seed(template.seed, &[ri as u64, r as u64])))
        })
        .collect();
    let runs: Vec<(SweepEntry, Option<TrainResult>)> = cells
        .par_iter()
        .map(|&(lr, restart, seed)| {
            let run = RunConfig {
                learning_rate: lr,
                seed,
                ..template.clone()
            };
            match train(&run, a, prior, init.clone()) {
                Ok(res) => (
                    SweepEntry {
                        learning_rate: lr,
                        restart,
                        seed,
                        statistic: res.selection_statistic(),
                        error: None,
                    },
                    Some(res),
                ),
                Err(e) => (
                    SweepEntry {
                        learning_rate: lr,
                        restart,
                        seed,
                        statistic: f64::NEG_INFINITY,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].1.is_some()).collect();
    if order.is_empty() {
        let msgs: Vec<String> = runs.iter().filter_map(|r| r.0.error.clone()).collect();
        return Err(Error::TrainingAborted(format!("every sweep run failed: {}", msgs.join(" | "))));
    }
    order.sort_by(|&i, &j| runs[j].0.statistic.total_cmp(&runs[i].0.statistic).then(i.cmp(&j)));
    let failed = (0..runs.len()).filter(|&i| runs[i].1.is_none());
    let leaderboard: Vec<SweepEntry> = order.iter().copied().chain(failed).map(|i| runs[i].0.clone()).collect();
    let winner = order[0];
    let best_entry = runs[winner].0.clone();
    let best = runs.into_iter().nth(winner).and_then(|r| r.1).expect("winner trained");
    Ok(SweepResult {
        best,
        best_entry,
        leaderboard,
    })
}
