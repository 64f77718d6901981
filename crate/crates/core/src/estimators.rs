//! ELBO estimates, the three gradient estimators and importance-sampling
//! marginal likelihood.
//!
//! Every sample carries `f = ln p(Y, tau, t) - ln q(tau, t)`. Gradients are
//! laid out like [`VariationalParams::to_vector`]: `mu ++ log_sigma`.

use rand::Rng;
use rayon::prelude::*;

use crate::alignment::Alignment;
use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood, log_likelihood_and_time_gradient};
use crate::numeric::{logaddexp, logsumexp, mean, softmax};
use crate::prior::{log_prior, log_prior_time_gradient, PriorConfig};
use crate::rng::substream;
use crate::tree::UltrametricTree;
use crate::variational::{
    log_density, log_density_gradient, pathwise_time_jacobian, sample_tree, SampledTree,
    VariationalParams,
};

/// Redraws allowed per sample when the reparameterization path hits a tie.
const MAX_TIE_REDRAWS: usize = 100;

#[derive(Debug, Clone)]
pub struct Sample {
    pub draw: SampledTree,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub log_q: f64,
    pub f: f64,
    pub grad_log_q: Vec<f64>,
    /// total derivative of `f` in the parameters at fixed noise
    pub pathwise_grad: Option<Vec<f64>>,
}

impl Sample {
    pub fn tree(&self) -> &UltrametricTree {
        self.draw.tree()
    }
}

#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    pub samples: Vec<Sample>,
}

impl BatchEvaluation {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn f_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.f).collect()
    }

    fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.grad_log_q.len())
    }
}

#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    /// batch mean of `f`
    pub elbo_estimate: f64,
    /// the quantity whose gradient is estimated: the ELBO, or `L_K` for VIMCO
    pub objective: f64,
    pub f_values: Vec<f64>,
    /// per-sample multipliers of `∇ ln q` excluding the importance-weight term
    pub learning_signals: Vec<f64>,
    pub effective_sample_size: f64,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn check_taxa(params: &VariationalParams, a: &Alignment) -> Result<()> {
    if params.taxa().as_ref() != a.taxa() {
        return Err(Error::TaxaMismatch(
            "alignment and variational parameters name different taxa (or a different order)".into(),
        ));
    }
    Ok(())
}

fn evaluate_one(
    params: &VariationalParams,
    a: &Alignment,
    prior: &PriorConfig,
    rng: &mut impl Rng,
    needs_pathwise: bool,
) -> Result<Sample> {
    let mut redraws = 0;
    let draw = loop {
        let draw = sample_tree(params, rng)?;
        if !needs_pathwise || !draw.linkage.has_ties(&draw.matrix) {
            break draw;
        }
        redraws += 1;
        if redraws > MAX_TIE_REDRAWS {
            return Err(Error::NonFinite("clustering ties on every redraw".into()));
        }
    };
    evaluate_draw(params, a, prior, draw, needs_pathwise)
}

/// Everything the estimators need for one drawn tree. With `needs_pathwise`
/// the total derivative of `f` at fixed noise is included.
pub fn evaluate_draw(
    params: &VariationalParams,
    a: &Alignment,
    prior: &PriorConfig,
    draw: SampledTree,
    needs_pathwise: bool,
) -> Result<Sample> {
    let tree = draw.tree();
    let dq = log_density_gradient(params, tree)?;
    let lp = log_prior(tree, prior)?;
    let (ll, pathwise_grad) = if needs_pathwise {
        let (ll, mut dt) = log_likelihood_and_time_gradient(a, tree)?;
        for ((g, p), q) in dt.iter_mut().zip(log_prior_time_gradient(tree, prior)).zip(&dq.times) {
            *g += p - q;
        }
        let half = params.n_pairs();
        let mut g: Vec<f64> = dq.params.iter().map(|x| -x).collect();
        for e in pathwise_time_jacobian(params, tree, &draw.noise)? {
            g[e.pair] += dt[e.event] * e.dt_dmu;
            g[half + e.pair] += dt[e.event] * e.dt_dlog_sigma;
        }
        (ll, Some(g))
    } else {
        (log_likelihood(a, tree)?, None)
    };
    let f = ll + lp - dq.log_q;
    Ok(Sample {
        log_likelihood: ll,
        log_prior: lp,
        log_q: dq.log_q,
        f,
        grad_log_q: dq.params,
        pathwise_grad,
        draw,
    })
}

/// `f = ln p(Y, tau, t) - ln q(tau, t)` for a given tree.
pub fn log_weight(params: &VariationalParams, a: &Alignment, prior: &PriorConfig, tree: &UltrametricTree) -> Result<f64> {
    Ok(log_likelihood(a, tree)? + log_prior(tree, prior)? - log_density(params, tree)?.log_q)
}

/// Draw `k` trees and evaluate everything the estimators need. Each sample
/// has its own random stream derived from one draw of `rng`, so results do
/// not depend on thread scheduling.
pub fn evaluate_batch<R: Rng + ?Sized>(
    params: &VariationalParams,
    a: &Alignment,
    prior: &PriorConfig,
    k: usize,
    rng: &mut R,
    needs_pathwise: bool,
) -> Result<BatchEvaluation> {
    if k == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    check_taxa(params, a)?;
    let seed: u64 = rng.random();
    let samples = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut r = substream(seed, &[i as u64]);
            let s = evaluate_one(params, a, prior, &mut r, needs_pathwise)
                .map_err(|e| Error::NonFinite(format!("sample {i}: {e}")))?;
            if !s.f.is_finite() {
                return Err(Error::NonFinite(format!("sample {i}: f = {}", s.f)));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchEvaluation { samples })
}

/// A tree drawn from `q` with its log importance weight.
#[derive(Debug, Clone)]
pub struct WeightedTree {
    pub tree: UltrametricTree,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub log_q: f64,
    pub log_weight: f64,
}

/// Draw `n` trees and their log weights without any gradient work.
pub fn draw_weighted_trees<R: Rng + ?Sized>(
    params: &VariationalParams,
    a: &Alignment,
    prior: &PriorConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<WeightedTree>> {
    check_taxa(params, a)?;
    let seed: u64 = rng.random();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = substream(seed, &[i as u64]);
            let draw = sample_tree(params, &mut r)?;
            let tree = draw.linkage.tree;
            let ll = log_likelihood(a, &tree)?;
            let lp = log_prior(&tree, prior)?;
            let lq = log_density(params, &tree)?.log_q;
            Ok(WeightedTree {
                tree,
                log_likelihood: ll,
                log_prior: lp,
                log_q: lq,
                log_weight: ll + lp - lq,
            })
        })
        .collect()
}

/// Batch mean of `f`.
pub fn elbo_estimate(batch: &BatchEvaluation) -> f64 {
    mean(&batch.f_values())
}

/// `logsumexp(f) - ln K`.
pub fn multisample_elbo_estimate(batch: &BatchEvaluation) -> f64 {
    multisample_bound(&batch.f_values())
}

pub fn multisample_bound(f: &[f64]) -> f64 {
    logsumexp(f) - (f.len() as f64).ln()
}

/// `(Σ w)^2 / Σ w^2` for `w = exp(f)`.
pub fn effective_sample_size(f: &[f64]) -> f64 {
    let doubled: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
    (2.0 * logsumexp(f) - logsumexp(&doubled)).exp()
}

fn weighted_sum(batch: &BatchEvaluation, signals: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; batch.dim()];
    for (s, &w) in batch.samples.iter().zip(signals) {
        for (g, d) in grad.iter_mut().zip(&s.grad_log_q) {
            *g += w * d;
        }
    }
    grad
}

fn require_two(batch: &BatchEvaluation) -> Result<()> {
    if batch.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "estimator needs at least 2 samples, got {}",
            batch.len()
        )));
    }
    Ok(())
}

fn finish(batch: &BatchEvaluation, grad: Vec<f64>, objective: f64, signals: Vec<f64>) -> Result<GradientEstimate> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient estimate".into()));
    }
    let f = batch.f_values();
    Ok(GradientEstimate {
        grad,
        elbo_estimate: mean(&f),
        objective,
        effective_sample_size: effective_sample_size(&f),
        f_values: f,
        learning_signals: signals,
    })
}

/// Leave-one-out REINFORCE signals `f_k - mean_{l≠k} f_l`, written as
/// `(K f_k - Σ f) / (K - 1)`.
pub fn loor_signals(f: &[f64]) -> Vec<f64> {
    let k = f.len() as f64;
    let total: f64 = f.iter().sum();
    f.iter().map(|x| (k * x - total) / (k - 1.0)).collect()
}

pub fn grad_loor(batch: &BatchEvaluation) -> Result<GradientEstimate> {
    require_two(batch)?;
    let signals = loor_signals(&batch.f_values());
    let k = batch.len() as f64;
    let grad = weighted_sum(batch, &signals).into_iter().map(|g| g / k).collect();
    let elbo = elbo_estimate(batch);
    finish(batch, grad, elbo, signals)
}

/// Average of the per-sample pathwise gradients. Biased: the topology is
/// piecewise constant in the parameters and that part is ignored.
pub fn grad_reparam(batch: &BatchEvaluation) -> Result<GradientEstimate> {
    let mut grad = vec![0.0; batch.dim()];
    for (i, s) in batch.samples.iter().enumerate() {
        let g = s.pathwise_grad.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("sample {i} was drawn without pathwise terms"))
        })?;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    let k = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    let elbo = elbo_estimate(batch);
    finish(batch, grad, elbo, vec![0.0; batch.len()])
}

/// VIMCO learning signals `L̂ - L̂^{(-k)}`, where `L̂^{(-k)}` replaces `f_k` by
/// the mean of the other values.
pub fn vimco_signals(f: &[f64]) -> Vec<f64> {
    let k = f.len();
    let total: f64 = f.iter().sum();
    let full = logsumexp(f);
    let mut tmp = f.to_vec();
    (0..k)
        .map(|i| {
            tmp[i] = (total - f[i]) / (k as f64 - 1.0);
            let loo = logsumexp(&tmp);
            tmp[i] = f[i];
            full - loo
        })
        .collect()
}

/// Score-function estimator of `∇ L_K` with leave-one-out baselines:
/// `Σ_k (signal_k - softmax(f)_k) ∇ ln q_k`.
pub fn grad_vimco(batch: &BatchEvaluation) -> Result<GradientEstimate> {
    require_two(batch)?;
    let f = batch.f_values();
    let signals = vimco_signals(&f);
    let weights = softmax(&f);
    let coef: Vec<f64> = signals.iter().zip(&weights).map(|(s, w)| s - w).collect();
    let grad = weighted_sum(batch, &coef);
    finish(batch, grad, multisample_bound(&f), signals)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MllEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub effective_sample_size: f64,
    pub n_samples: usize,
}

/// `logsumexp(f) - ln n` with a jackknife standard error over the
/// leave-one-out estimates.
pub fn mll_from_log_weights(f: &[f64]) -> Result<MllEstimate> {
    let n = f.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 importance samples".into()));
    }
    if f.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::NonFinite("log importance weight".into()));
    }
    let estimate = multisample_bound(f);
    if estimate == f64::NEG_INFINITY {
        return Err(Error::NonFinite("every importance weight is zero".into()));
    }
    let mut prefix = vec![f64::NEG_INFINITY; n + 1];
    let mut suffix = vec![f64::NEG_INFINITY; n + 1];
    for i in 0..n {
        prefix[i + 1] = logaddexp(prefix[i], f[i]);
        suffix[n - 1 - i] = logaddexp(suffix[n - i], f[n - 1 - i]);
    }
    let ln_m = ((n - 1) as f64).ln();
    let loo: Vec<f64> = (0..n).map(|i| logaddexp(prefix[i], suffix[i + 1]) - ln_m).collect();
    let m = mean(&loo);
    let std_error = if loo.iter().all(|x| x.is_finite()) {
        ((n as f64 - 1.0) / n as f64 * loo.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(MllEstimate {
        estimate,
        std_error,
        effective_sample_size: effective_sample_size(f),
        n_samples: n,
    })
}

pub fn estimate_mll<R: Rng + ?Sized>(
    params: &VariationalParams,
    a: &Alignment,
    prior: &PriorConfig,
    n_samples: usize,
    rng: &mut R,
) -> Result<MllEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 importance samples".into()));
    }
    let w: Vec<f64> = draw_weighted_trees(params, a, prior, n_samples, rng)?
        .into_iter()
        .map(|s| s.log_weight)
        .collect();
    mll_from_log_weights(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::parse_fasta;
    use crate::tree::default_taxa;
    use approx::assert_relative_eq;

    fn fake_batch(f: &[f64], grads: &[Vec<f64>]) -> BatchEvaluation {
        let params = VariationalParams::uniform(default_taxa(2), 0.0, 1.0).unwrap();
        let mut rng = substream(0, &[]);
        let samples = f
            .iter()
            .zip(grads)
            .map(|(&f, g)| Sample {
                draw: sample_tree(&params, &mut rng).unwrap(),
                log_likelihood: 0.0,
                log_prior: 0.0,
                log_q: 0.0,
                f,
                grad_log_q: g.clone(),
                pathwise_grad: Some(g.clone()),
            })
            .collect();
        BatchEvaluation { samples }
    }

    #[test]
    fn elbo_and_multisample_bound() {
        let b = fake_batch(&[1.0, 2.0, 3.0], &vec![vec![0.0, 0.0]; 3]);
        assert_eq!(elbo_estimate(&b), 2.0);
        let one = fake_batch(&[-4.5], &[vec![0.0, 0.0]]);
        assert_eq!(elbo_estimate(&one), -4.5);
        assert_eq!(multisample_elbo_estimate(&one), -4.5);
        let same = fake_batch(&[0.7; 5], &vec![vec![0.0, 0.0]; 5]);
        assert_relative_eq!(multisample_elbo_estimate(&same), 0.7, max_relative = 1e-15);
    }

    #[test]
    fn loor_signals_and_symmetry() {
        assert_eq!(loor_signals(&[1.0, 4.0]), vec![-3.0, 3.0]);
        let grads = vec![vec![1.0, -2.0], vec![0.5, 3.0], vec![-1.0, 0.25]];
        let flat = fake_batch(&[2.0; 3], &grads);
        assert!(grad_loor(&flat).unwrap().grad.iter().all(|g| *g == 0.0));
        assert!(grad_loor(&fake_batch(&[1.0], &grads[..1])).is_err());
    }

    #[test]
    fn shift_invariance() {
        let grads = vec![vec![1.0, -2.0], vec![0.5, 3.0], vec![-1.0, 0.25], vec![2.0, 2.0]];
        let f = [0.25, -1.5, 2.0, 0.75];
        let shifted: Vec<f64> = f.iter().map(|x| x + 8.0).collect();
        let (a, b) = (fake_batch(&f, &grads), fake_batch(&shifted, &grads));
        assert_eq!(grad_loor(&a).unwrap().grad, grad_loor(&b).unwrap().grad);
        let (va, vb) = (grad_vimco(&a).unwrap(), grad_vimco(&b).unwrap());
        for (x, y) in va.learning_signals.iter().zip(&vb.learning_signals) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in va.grad.iter().zip(&vb.grad) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn vimco_cases() {
        let grads = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let flat = grad_vimco(&fake_batch(&[-3.0; 3], &grads)).unwrap();
        assert!(flat.learning_signals.iter().all(|s| *s == 0.0));
        // only the importance-weight term remains: -(1/K) Σ ∇ ln q
        assert_relative_eq!(flat.grad[0], -2.0 / 3.0, max_relative = 1e-14);
        // K = 2: the held-out slot is filled with the other value
        let s = vimco_signals(&[0.0, 1.0]);
        let full = logsumexp(&[0.0, 1.0]);
        assert_relative_eq!(s[0], full - logsumexp(&[1.0, 1.0]), max_relative = 1e-15);
        assert_relative_eq!(s[1], full - logsumexp(&[0.0, 0.0]), max_relative = 1e-15);
    }

    #[test]
    fn mll_constant_weights_and_errors() {
        let m = mll_from_log_weights(&[-7.25; 50]).unwrap();
        assert_relative_eq!(m.estimate, -7.25, max_relative = 1e-14);
        assert!(m.std_error < 1e-12);
        assert_relative_eq!(m.effective_sample_size, 50.0, max_relative = 1e-12);
        assert!(mll_from_log_weights(&[f64::NEG_INFINITY; 3]).is_err());
        assert!(mll_from_log_weights(&[0.0]).is_err());
    }

    #[test]
    fn jackknife_matches_direct_recomputation() {
        let f = [0.1, -2.0, 3.5, 0.7, -0.4, 1.9];
        let m = mll_from_log_weights(&f).unwrap();
        let loo: Vec<f64> = (0..f.len())
            .map(|i| {
                let rest: Vec<f64> = f.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect();
                multisample_bound(&rest)
            })
            .collect();
        let mu = mean(&loo);
        let se = (5.0 / 6.0 * loo.iter().map(|x| (x - mu).powi(2)).sum::<f64>()).sqrt();
        assert_relative_eq!(m.std_error, se, max_relative = 1e-12);
    }

    #[test]
    fn batches_replay_exactly() {
        let a = parse_fasta(b">t0\nACGTAC\n>t1\nACGTTC\n>t2\nAAGTTC\n").unwrap();
        let params = VariationalParams::uniform(default_taxa(3), -1.0, 0.5).unwrap();
        let prior = PriorConfig::default();
        let run = || {
            let b = evaluate_batch(&params, &a, &prior, 8, &mut substream(42, &[]), true).unwrap();
            (b.f_values(), grad_reparam(&b).unwrap().grad, grad_loor(&b).unwrap().grad)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn taxa_must_match() {
        let a = parse_fasta(b">x\nA\n>y\nA\n").unwrap();
        let params = VariationalParams::uniform(default_taxa(2), 0.0, 1.0).unwrap();
        assert!(evaluate_batch(&params, &a, &PriorConfig::default(), 2, &mut substream(1, &[]), false).is_err());
    }
}
