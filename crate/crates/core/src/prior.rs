//! Kingman coalescent prior with constant effective population size.
//!
//! While `k` lineages remain the next merge arrives at rate
//! `λ_k = C(k, 2) / N_e`. With `t_0 = 0`, event `n` (1-based) ends the epoch
//! with `k = N - n + 1` lineages, so its hold time is `t_n - t_{n-1}`. The
//! density over ranked, labelled trees is
//! `2^(N-1) / (N! (N-1)!) · Π_k λ_k exp(-λ_k h_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ln_factorial;
use crate::tree::UltrametricTree;

pub const DEFAULT_POP_SIZE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub n_e: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            n_e: DEFAULT_POP_SIZE,
        }
    }
}

impl PriorConfig {
    pub fn new(n_e: f64) -> Result<Self> {
        if !(n_e.is_finite() && n_e > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "effective population size must be positive, got {n_e}"
            )));
        }
        Ok(Self { n_e })
    }

    /// Coalescence rate with `k` lineages.
    pub fn rate(&self, k: usize) -> f64 {
        (k * (k - 1)) as f64 / 2.0 / self.n_e
    }

    /// Rate for the epoch ending at event `n` (0-based) in an `N`-taxon tree.
    pub fn event_rate(&self, n_taxa: usize, event: usize) -> f64 {
        self.rate(n_taxa - event)
    }
}

/// `ln(2^(N-1) / (N! (N-1)!))`: minus the log-count of ranked labelled
/// topologies.
pub fn log_topology_prefactor(n_taxa: usize) -> f64 {
    (n_taxa - 1) as f64 * std::f64::consts::LN_2 - ln_factorial(n_taxa) - ln_factorial(n_taxa - 1)
}

fn check_times(times: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("coalescent time {i} is {t}")));
        }
        if t < prev {
            return Err(Error::InvalidArgument(format!(
                "negative hold time before event {i}: {t} < {prev}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Log prior density of a sequence of event times (topology enters only
/// through `N`).
pub fn log_prior_of_times(times: &[f64], cfg: &PriorConfig) -> Result<f64> {
    check_times(times)?;
    let n = times.len() + 1;
    let mut acc = log_topology_prefactor(n);
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let lambda = cfg.event_rate(n, i);
        acc += lambda.ln() - lambda * (t - prev);
        prev = t;
    }
    Ok(acc)
}

pub fn log_prior(tree: &UltrametricTree, cfg: &PriorConfig) -> Result<f64> {
    log_prior_of_times(tree.times(), cfg)
}

/// `d ln p(tau, t) / d t_n` for every event.
pub fn log_prior_time_gradient(tree: &UltrametricTree, cfg: &PriorConfig) -> Vec<f64> {
    let n = tree.n_taxa();
    (0..n - 1)
        .map(|i| {
            let own = cfg.event_rate(n, i);
            let next = if i + 2 < n { cfg.event_rate(n, i + 1) } else { 0.0 };
            next - own
        })
        .collect()
}
