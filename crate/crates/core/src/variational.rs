//! The variational family over ranked, timed trees.
//!
//! Each unordered taxon pair `{u, v}` gets an independent positive random
//! time `t^{u,v}`; a tree is the single-linkage clustering of that matrix.
//! For event `n` with sides `W_n`, `Z_n` the density factor is
//!
//! ```text
//! (Σ_{w∈W_n, z∈Z_n} q^{w,z}(t_n) / Q^{w,z}(t_n)) · Π_{w∈W_n, z∈Z_n} Q^{w,z}(t_n)
//! ```
//!
//! where `q` is the pair density and `Q` its survival function. Every pair
//! appears in exactly one event, so density and gradient cost `O(N^2)`.
//!
//! Parameters are optimized as `(mu, log_sigma)` of per-pair log-normals.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{std_normal_hazard, std_normal_log_survival, HALF_LN_2PI};
use crate::tree::{
    n_pairs, pair_index, pair_of, single_linkage_detailed, Linkage, PairMatrix, TaxonSet,
    UltrametricTree,
};

/// Gradient of a per-pair log quantity with respect to the pair's two
/// unconstrained parameters and to the evaluation time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairGrad {
    pub params: [f64; 2],
    pub time: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairEval {
    pub log_pdf: f64,
    pub log_survival: f64,
    pub grad_log_pdf: PairGrad,
    pub grad_log_survival: PairGrad,
}

/// A continuous distribution on `(0, ∞)` for one matrix entry, with two
/// unconstrained parameters and a reparameterization from standard normal
/// noise.
pub trait PairDistribution {
    /// Log density and log survival at `t`; gradients are filled only when
    /// `with_grad` is set.
    fn evaluate(&self, t: f64, with_grad: bool) -> PairEval;

    /// Map standard normal noise to a draw.
    fn transform(&self, z: f64) -> f64;

    /// `d t / d params` at fixed noise.
    fn pathwise(&self, z: f64) -> [f64; 2];
}

/// A family assigning a [`PairDistribution`] to every flat pair index.
pub trait PairFamily {
    type Dist: PairDistribution;

    fn n_taxa(&self) -> usize;

    fn pair(&self, idx: usize) -> Self::Dist;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
    pub log_sigma: f64,
}

impl LogNormal {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            log_sigma: sigma.ln(),
        }
    }
}

impl PairDistribution for LogNormal {
    #[inline]
    fn evaluate(&self, t: f64, with_grad: bool) -> PairEval {
        let log_t = t.ln();
        let z = (log_t - self.mu) / self.sigma;
        let log_pdf = -log_t - self.log_sigma - HALF_LN_2PI - 0.5 * z * z;
        let log_survival = std_normal_log_survival(z);
        if !with_grad {
            return PairEval {
                log_pdf,
                log_survival,
                ..Default::default()
            };
        }
        let h = std_normal_hazard(z);
        let inv_st = 1.0 / (self.sigma * t);
        PairEval {
            log_pdf,
            log_survival,
            grad_log_pdf: PairGrad {
                params: [z / self.sigma, z * z - 1.0],
                time: -(1.0 + z / self.sigma) / t,
            },
            grad_log_survival: PairGrad {
                params: [h / self.sigma, h * z],
                time: -h * inv_st,
            },
        }
    }

    #[inline]
    fn transform(&self, z: f64) -> f64 {
        (self.mu + self.sigma * z).exp()
    }

    #[inline]
    fn pathwise(&self, z: f64) -> [f64; 2] {
        let t = self.transform(z);
        [t, t * self.sigma * z]
    }
}

fn check_lognormal_args(t: f64, sigma: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Log-normal log density.
pub fn lognormal_logpdf(t: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_lognormal_args(t, sigma)?;
    Ok(LogNormal::new(mu, sigma).evaluate(t, false).log_pdf)
}

/// Log-normal log survival `ln P(T > t)`.
pub fn lognormal_log_survival(t: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_lognormal_args(t, sigma)?;
    Ok(LogNormal::new(mu, sigma).evaluate(t, false).log_survival)
}

/// Per-pair `(mu, sigma)` of the log-normal family. `sigma` is optimized on
/// the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    taxa: TaxonSet,
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
    sigma: Vec<f64>,
}

impl PairFamily for VariationalParams {
    type Dist = LogNormal;

    fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    #[inline]
    fn pair(&self, idx: usize) -> LogNormal {
        LogNormal {
            mu: self.mu[idx],
            sigma: self.sigma[idx],
            log_sigma: self.log_sigma[idx],
        }
    }
}

impl VariationalParams {
    pub fn new(taxa: TaxonSet, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let log_sigma = sigma.iter().map(|s| s.ln()).collect();
        Self::from_log_sigma(taxa, mu, log_sigma)
    }

    pub fn from_log_sigma(taxa: TaxonSet, mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        let n = taxa.len();
        if n < 2 {
            return Err(Error::InvalidArgument("need at least 2 taxa".into()));
        }
        let p = n_pairs(n);
        if mu.len() != p || log_sigma.len() != p {
            return Err(Error::InvalidArgument(format!(
                "expected {p} pair parameters, got {} mu and {} sigma",
                mu.len(),
                log_sigma.len()
            )));
        }
        let mut out = Self {
            taxa,
            mu: Vec::new(),
            log_sigma: Vec::new(),
            sigma: Vec::new(),
        };
        let mut flat = mu;
        flat.extend(log_sigma);
        out.set_vector(&flat)?;
        Ok(out)
    }

    /// Same `(mu, sigma)` for every pair.
    pub fn uniform(taxa: TaxonSet, mu: f64, sigma: f64) -> Result<Self> {
        let p = n_pairs(taxa.len());
        Self::new(taxa, vec![mu; p], vec![sigma; p])
    }

    pub fn taxa(&self) -> &TaxonSet {
        &self.taxa
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn log_sigma(&self) -> &[f64] {
        &self.log_sigma
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Number of unconstrained parameters, `2 · C(N, 2)`.
    pub fn dim(&self) -> usize {
        2 * self.mu.len()
    }

    /// Unconstrained parameter vector `mu ++ log_sigma`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.log_sigma);
        v
    }

    pub fn set_vector(&mut self, v: &[f64]) -> Result<()> {
        let p = n_pairs(self.taxa.len());
        if v.len() != 2 * p {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, expected {}",
                v.len(),
                2 * p
            )));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("variational parameter {bad}")));
        }
        self.mu = v[..p].to_vec();
        self.log_sigma = v[p..].to_vec();
        self.sigma = self.log_sigma.iter().map(|l| l.exp()).collect();
        if let Some(s) = self.sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::NonFinite(format!("sigma = {s}")));
        }
        Ok(())
    }

    pub fn with_vector(&self, v: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_vector(v)?;
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let n = self.taxa.len();
        Checkpoint {
            taxa: self.taxa.to_vec(),
            pairs: (0..self.n_pairs())
                .map(|i| {
                    let (u, v) = pair_of(i, n);
                    PairEntry {
                        u: self.taxa[u].clone(),
                        v: self.taxa[v].clone(),
                        mu: self.mu[i],
                        sigma: self.sigma[i],
                    }
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let taxa: TaxonSet = c.taxa.iter().cloned().collect();
        let n = taxa.len();
        if n < 2 {
            return Err(Error::InvalidArgument("checkpoint has fewer than 2 taxa".into()));
        }
        let id = |name: &str| {
            taxa.iter()
                .position(|t| t == name)
                .ok_or_else(|| Error::UnknownTaxon(name.to_string()))
        };
        let p = n_pairs(n);
        let mut mu = vec![f64::NAN; p];
        let mut sigma = vec![f64::NAN; p];
        for e in &c.pairs {
            let (u, v) = (id(&e.u)?, id(&e.v)?);
            if u == v {
                return Err(Error::InvalidArgument(format!("self pair `{}`", e.u)));
            }
            let i = pair_index(u, v, n);
            if !mu[i].is_nan() {
                return Err(Error::InvalidArgument(format!("pair {{{}, {}}} listed twice", e.u, e.v)));
            }
            mu[i] = e.mu;
            sigma[i] = e.sigma;
        }
        if let Some(i) = mu.iter().position(|m| m.is_nan()) {
            let (u, v) = pair_of(i, n);
            return Err(Error::InvalidArgument(format!(
                "pair {{{}, {}}} missing from checkpoint",
                taxa[u], taxa[v]
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {s}")));
        }
        Self::new(taxa, mu, sigma)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(text)?)
    }

    /// Matrix of pair medians `exp(mu)`.
    pub fn median_matrix(&self) -> Result<PairMatrix> {
        PairMatrix::new(self.taxa.len(), self.mu.iter().map(|m| m.exp()).collect())
    }
}

/// JSON checkpoint: `{taxa: [...], pairs: [{u, v, mu, sigma}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub taxa: Vec<String>,
    pub pairs: Vec<PairEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub u: String,
    pub v: String,
    pub mu: f64,
    pub sigma: f64,
}

/// A tree drawn from the family together with the matrix and the standard
/// normal noise that produced it.
#[derive(Debug, Clone)]
pub struct SampledTree {
    pub linkage: Linkage,
    pub matrix: PairMatrix,
    pub noise: Vec<f64>,
}

impl SampledTree {
    pub fn tree(&self) -> &UltrametricTree {
        &self.linkage.tree
    }
}

/// Build the matrix `t = g(z)` for given noise and cluster it.
pub fn tree_from_noise<F: PairFamily>(family: &F, taxa: TaxonSet, noise: Vec<f64>) -> Result<SampledTree> {
    let values = noise
        .iter()
        .enumerate()
        .map(|(i, &z)| family.pair(i).transform(z))
        .collect();
    let matrix = PairMatrix::new(family.n_taxa(), values)?;
    let linkage = single_linkage_detailed(&matrix, taxa)?;
    Ok(SampledTree {
        linkage,
        matrix,
        noise,
    })
}

/// Draw standard normal noise for every pair, map it through the pair
/// distributions and cluster.
pub fn sample_tree<R: Rng + ?Sized>(params: &VariationalParams, rng: &mut R) -> Result<SampledTree> {
    let noise: Vec<f64> = (0..params.n_pairs()).map(|_| rng.sample(StandardNormal)).collect();
    tree_from_noise(params, params.taxa.clone(), noise)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub event: usize,
    pub log_pdf: f64,
    pub log_survival: f64,
}

/// `ln q(tau, t)` with its per-event and per-pair pieces.
#[derive(Debug, Clone)]
pub struct DensityBreakdown {
    pub log_q: f64,
    pub event_terms: Vec<f64>,
    /// indexed by flat pair index
    pub pair_terms: Vec<PairTerm>,
}

/// Gradient of `ln q(tau, t)` at a fixed tree: with respect to the
/// parameters (`mu ++ log_sigma` layout) and to each event time.
#[derive(Debug, Clone)]
pub struct DensityGradient {
    pub log_q: f64,
    pub params: Vec<f64>,
    pub times: Vec<f64>,
}

fn check_tree<F: PairFamily>(family: &F, tree: &UltrametricTree) -> Result<()> {
    if tree.n_taxa() != family.n_taxa() {
        return Err(Error::TaxaMismatch(format!(
            "tree has {} taxa, parameters have {}",
            tree.n_taxa(),
            family.n_taxa()
        )));
    }
    if let Some(t) = tree.times().iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "density requires positive event times, got {t}"
        )));
    }
    Ok(())
}

/// Evaluate the closed-form tree density in log space.
pub fn log_density_of<F: PairFamily>(family: &F, tree: &UltrametricTree) -> Result<DensityBreakdown> {
    check_tree(family, tree)?;
    let n = tree.n_taxa();
    let mut pair_terms = vec![
        PairTerm {
            event: usize::MAX,
            log_pdf: 0.0,
            log_survival: 0.0
        };
        n_pairs(n)
    ];
    let mut event_terms = Vec::with_capacity(n - 1);
    let mut ratios = Vec::new();
    for (k, ((w, z), &t)) in tree.bipartitions().iter().zip(tree.times()).enumerate() {
        ratios.clear();
        let mut surv = 0.0;
        for a in w.iter() {
            for b in z.iter() {
                let idx = pair_index(a, b, n);
                let e = family.pair(idx).evaluate(t, false);
                ratios.push(e.log_pdf - e.log_survival);
                surv += e.log_survival;
                pair_terms[idx] = PairTerm {
                    event: k,
                    log_pdf: e.log_pdf,
                    log_survival: e.log_survival,
                };
            }
        }
        event_terms.push(crate::numeric::logsumexp(&ratios) + surv);
    }
    let log_q: f64 = event_terms.iter().sum();
    if !log_q.is_finite() {
        return Err(Error::NonFinite(format!("log density is {log_q}")));
    }
    Ok(DensityBreakdown {
        log_q,
        event_terms,
        pair_terms,
    })
}

/// Analytic gradient of `ln q(tau, t)`. Within an event, a pair's ratio term
/// enters through its softmax share of the log-sum-exp and its survival
/// enters directly.
pub fn log_density_gradient_of<F: PairFamily>(
    family: &F,
    tree: &UltrametricTree,
) -> Result<DensityGradient> {
    check_tree(family, tree)?;
    let n = tree.n_taxa();
    let p = n_pairs(n);
    let mut params = vec![0.0; 2 * p];
    let mut times = vec![0.0; n - 1];
    let mut log_q = 0.0;
    let mut buf: Vec<(usize, PairEval)> = Vec::new();
    for (k, ((w, z), &t)) in tree.bipartitions().iter().zip(tree.times()).enumerate() {
        buf.clear();
        let mut max = f64::NEG_INFINITY;
        let mut surv = 0.0;
        for a in w.iter() {
            for b in z.iter() {
                let idx = pair_index(a, b, n);
                let e = family.pair(idx).evaluate(t, true);
                max = max.max(e.log_pdf - e.log_survival);
                surv += e.log_survival;
                buf.push((idx, e));
            }
        }
        let total: f64 = buf
            .iter()
            .map(|(_, e)| (e.log_pdf - e.log_survival - max).exp())
            .sum();
        log_q += max + total.ln() + surv;
        let mut dt = 0.0;
        for (idx, e) in &buf {
            let share = (e.log_pdf - e.log_survival - max).exp() / total;
            let (gp, gs) = (&e.grad_log_pdf, &e.grad_log_survival);
            params[*idx] = share * (gp.params[0] - gs.params[0]) + gs.params[0];
            params[p + idx] = share * (gp.params[1] - gs.params[1]) + gs.params[1];
            dt += share * (gp.time - gs.time) + gs.time;
        }
        times[k] = dt;
    }
    if !log_q.is_finite() || params.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("log density gradient".into()));
    }
    Ok(DensityGradient { log_q, params, times })
}

pub fn log_density(params: &VariationalParams, tree: &UltrametricTree) -> Result<DensityBreakdown> {
    log_density_of(params, tree)
}

pub fn log_density_gradient(params: &VariationalParams, tree: &UltrametricTree) -> Result<DensityGradient> {
    log_density_gradient_of(params, tree)
}

/// For one event: the pair whose matrix entry realized the event time and
/// the partials of that time with respect to the pair's parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwiseEntry {
    pub event: usize,
    pub pair: usize,
    pub dt_dmu: f64,
    pub dt_dlog_sigma: f64,
}

/// Pathwise derivatives of the event times at fixed noise. All other pairs
/// have zero partials into the times (the selection is locally constant).
pub fn pathwise_time_jacobian(
    params: &VariationalParams,
    tree: &UltrametricTree,
    noise: &[f64],
) -> Result<Vec<PathwiseEntry>> {
    let n = tree.n_taxa();
    if noise.len() != params.n_pairs() || n != params.n_taxa() {
        return Err(Error::InvalidArgument("noise / tree / parameter sizes disagree".into()));
    }
    let mut out = Vec::with_capacity(n - 1);
    for (k, ((w, z), &t)) in tree.bipartitions().iter().zip(tree.times()).enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for a in w.iter() {
            for b in z.iter() {
                let idx = pair_index(a, b, n);
                let v = params.pair(idx).transform(noise[idx]);
                if best.is_none_or(|(_, bv)| v < bv) {
                    best = Some((idx, v));
                }
            }
        }
        let (idx, v) = best.expect("nonempty bipartition");
        if (v - t).abs() > 1e-12 * t.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!(
                "event {k}: noise gives {v} but the tree has time {t}"
            )));
        }
        let [dmu, dls] = params.pair(idx).pathwise(noise[idx]);
        out.push(PathwiseEntry {
            event: k,
            pair: idx,
            dt_dmu: dmu,
            dt_dlog_sigma: dls,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::tree::{default_taxa, single_linkage};
    use approx::assert_relative_eq;

    #[test]
    fn lognormal_median_and_constants() {
        assert_eq!(lognormal_log_survival(1.3f64.exp(), 1.3, 0.7).unwrap(), 0.5f64.ln());
        assert_relative_eq!(
            lognormal_logpdf(1.0, 0.0, 1.0).unwrap(),
            -0.918_938_533_204_672_7,
            max_relative = 1e-15
        );
        assert!(lognormal_log_survival(1e-300, 0.0, 1.0).unwrap().abs() < 1e-300);
        assert!(lognormal_logpdf(0.0, 0.0, 1.0).is_err());
        assert!(lognormal_logpdf(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn two_taxa_density_is_pair_logpdf() {
        let taxa = default_taxa(2);
        let params = VariationalParams::new(taxa.clone(), vec![0.4], vec![0.3]).unwrap();
        let tree = single_linkage(&PairMatrix::new(2, vec![1.7]).unwrap(), taxa).unwrap();
        let d = log_density(&params, &tree).unwrap();
        assert_relative_eq!(d.log_q, lognormal_logpdf(1.7, 0.4, 0.3).unwrap(), max_relative = 1e-14);
        let g = log_density_gradient(&params, &tree).unwrap();
        let z = (1.7f64.ln() - 0.4) / 0.3;
        assert_relative_eq!(g.params[0], z / 0.3, max_relative = 1e-12);
    }

    #[test]
    fn breakdown_sums_to_total() {
        let taxa = default_taxa(5);
        let params = VariationalParams::from_log_sigma(
            taxa.clone(),
            (0..10).map(|i| -1.0 + 0.1 * i as f64).collect(),
            (0..10).map(|i| -0.5 + 0.05 * i as f64).collect(),
        )
        .unwrap();
        let s = sample_tree(&params, &mut substream(1, &[])).unwrap();
        let d = log_density(&params, s.tree()).unwrap();
        assert!((d.event_terms.iter().sum::<f64>() - d.log_q).abs() < 1e-12);
        assert!(d.pair_terms.iter().all(|p| p.event < 4));
        let g = log_density_gradient(&params, s.tree()).unwrap();
        assert_relative_eq!(g.log_q, d.log_q, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_sigma_gives_median_tree() {
        let taxa = default_taxa(4);
        let mu = vec![0.1, 0.5, -0.3, 0.9, 0.2, 0.7];
        let params = VariationalParams::new(taxa.clone(), mu, vec![1e-12; 6]).unwrap();
        let s = sample_tree(&params, &mut substream(3, &[])).unwrap();
        let expect = single_linkage(&params.median_matrix().unwrap(), taxa).unwrap();
        assert_eq!(s.tree().bipartitions(), expect.bipartitions());
        for (a, b) in s.tree().times().iter().zip(expect.times()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-9);
        }
    }

    #[test]
    fn pathwise_entries() {
        let taxa = default_taxa(5);
        let params = VariationalParams::uniform(taxa, -0.5, 0.6).unwrap();
        let s = sample_tree(&params, &mut substream(9, &[])).unwrap();
        let jac = pathwise_time_jacobian(&params, s.tree(), &s.noise).unwrap();
        for (e, &t) in jac.iter().zip(s.tree().times()) {
            assert_relative_eq!(e.dt_dmu, t, max_relative = 1e-14);
            assert_eq!(e.pair, s.linkage.selected[e.event]);
            // finite difference of the selected entry at fixed noise
            let h = 1e-6;
            let ln = params.pair(e.pair);
            let up = LogNormal::new(ln.mu + h, ln.sigma).transform(s.noise[e.pair]);
            let dn = LogNormal::new(ln.mu - h, ln.sigma).transform(s.noise[e.pair]);
            assert!(((up - dn) / (2.0 * h) - e.dt_dmu).abs() < 1e-8);
        }
        let mut wrong = s.noise.clone();
        wrong[jac[0].pair] += 0.5;
        assert!(pathwise_time_jacobian(&params, s.tree(), &wrong).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let taxa = default_taxa(4);
        let params = VariationalParams::new(
            taxa,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        )
        .unwrap();
        let json = params.to_json();
        let back = VariationalParams::from_json(&json).unwrap();
        assert_eq!(back.mu(), params.mu());
        assert_eq!(back.sigma(), params.sigma());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["pairs"][0]["u"], "t0");
        assert_eq!(v["pairs"][0]["v"], "t1");
        let mut c = params.to_checkpoint();
        c.pairs.pop();
        assert!(VariationalParams::from_checkpoint(&c).is_err());
        let mut c = params.to_checkpoint();
        c.pairs[0].sigma = -1.0;
        assert!(VariationalParams::from_checkpoint(&c).is_err());
    }

    #[test]
    fn far_below_median_pairs_have_vanishing_gradient() {
        // pair {t1, t2} has its median near e^5 but coalesces at the root
        // (t ~ 0.008) alongside a pair centred there
        let taxa = default_taxa(3);
        let c = 0.007f64.ln();
        let params = VariationalParams::new(taxa.clone(), vec![c, c, 5.0], vec![0.3; 3]).unwrap();
        let tree = single_linkage(&PairMatrix::new(3, vec![0.006, 0.008, 0.009]).unwrap(), taxa).unwrap();
        let g = log_density_gradient(&params, &tree).unwrap();
        assert!(g.params[2].abs() < 1e-100 && g.params[5].abs() < 1e-100, "{:?}", g.params);
        assert!(g.params[1].abs() > 1e-3);
    }
}
