//! Oracle suites shared by the `check` command and the acceptance tests.
//!
//! Every check returns a [`CheckReport`] instead of panicking so callers can
//! print one line per criterion. Sizes depend on [`Level`]; tolerances do not.

use std::fmt;
use std::hint::black_box;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use crate::alignment::{Alignment, MISSING};
use crate::error::{Error, Result};
use crate::estimators::{
    draw_weighted_trees, evaluate_batch, evaluate_draw, log_weight,
    mll_from_log_weights,
};
use crate::likelihood::{brute_force_log_likelihood, log_likelihood, log_likelihood_time_gradient};
use crate::numeric::{log_log_slope, logsumexp, mean, sample_variance};
use crate::prior::{log_prior, PriorConfig};
use crate::quadrature::{gauss_legendre, CompositeRule};
use crate::rng::{derive_seed, substream, StreamRng};
use crate::synthetic::{exact_evidence, ranked_topologies, simulate_coalescent, simulate_sequences};
use crate::trainer::{
    initialize_from_distances, moving_average, sweep, train, Estimator, RunConfig,
};
use crate::tree::{default_taxa, n_pairs, Clade, UltrametricTree};
use crate::variational::{
    log_density, log_density_gradient, sample_tree, tree_from_noise, VariationalParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// reduced sample sizes, seconds per check
    Fast,
    /// the sizes of the acceptance criteria
    Full,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            _ => Err(Error::InvalidArgument(format!("unknown level `{s}` (fast or full)"))),
        }
    }
}

impl Level {
    fn pick<T>(self, fast: T, full: T) -> T {
        match self {
            Level::Fast => fast,
            Level::Full => full,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub details: Vec<String>,
    pub seconds: f64,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.summary,
            self.seconds
        )
    }
}

fn report(name: &str, start: Instant, body: impl FnOnce() -> Result<(bool, String, Vec<String>)>) -> CheckReport {
    let (passed, summary, details) = match body() {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}"), Vec::new()),
    };
    CheckReport {
        name: name.to_string(),
        passed,
        summary,
        details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn random_params(n: usize, rng: &mut StreamRng, mu: (f64, f64), sigma: (f64, f64)) -> VariationalParams {
    let p = n_pairs(n);
    let m = (0..p).map(|_| rng.random_range(mu.0..mu.1)).collect();
    let s = (0..p).map(|_| rng.random_range(sigma.0..sigma.1)).collect();
    VariationalParams::new(default_taxa(n), m, s).expect("valid random parameters")
}

fn random_alignment(n: usize, m: usize, rng: &mut StreamRng) -> Alignment {
    let rows = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| if rng.random_bool(0.1) { MISSING } else { rng.random_range(0..4u8) })
                .collect()
        })
        .collect();
    Alignment::from_rows(default_taxa(n).to_vec(), rows).expect("valid random alignment")
}

fn same_split(a: &(Clade, Clade), b: &(Clade, Clade)) -> bool {
    (a.0 == b.0 && a.1 == b.1) || (a.0 == b.1 && a.1 == b.0)
}

/// Same ranked topology: identical bipartition at every event.
pub fn same_ranked_topology(a: &UltrametricTree, b: &UltrametricTree) -> bool {
    a.n_taxa() == b.n_taxa()
        && a.bipartitions()
            .iter()
            .zip(b.bipartitions())
            .all(|(x, y)| same_split(x, y))
}

/// Ordered-time grid for `N = 3` in log-time coordinates: nodes
/// `(t1, t2, weight)` with `t1 < t2` and the Jacobian `t1 t2` folded into the
/// weight. Fixed for a given range, so objectives built on it are smooth in
/// the variational parameters.
pub fn ordered_log_grid(lo: f64, hi: f64, panels: usize, order: usize) -> Vec<(f64, f64, f64)> {
    let rule = CompositeRule::new(order, panels);
    let mut out = Vec::new();
    for (x1, w1) in rule.points(lo, hi) {
        for (x2, w2) in rule.points(x1, hi) {
            out.push((x1.exp(), x2.exp(), w1 * w2 * (x1 + x2).exp()));
        }
    }
    out
}

fn grid_range(params: &VariationalParams, width: f64) -> (f64, f64) {
    let smax = params.sigma().iter().copied().fold(0.0, f64::max);
    let mlo = params.mu().iter().copied().fold(f64::INFINITY, f64::min);
    let mhi = params.mu().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mlo - width * smax, mhi + width * smax)
}

/// `Σ_tau ∫ q(tau, t) g(tree, ln q) dt` on an [`ordered_log_grid`] (`N = 3`).
pub fn q_expectation_n3<G>(params: &VariationalParams, grid: &[(f64, f64, f64)], mut g: G) -> Result<f64>
where
    G: FnMut(&UltrametricTree, f64) -> Result<f64>,
{
    if params.n_taxa() != 3 {
        return Err(Error::InvalidArgument("grid expectation is for 3 taxa".into()));
    }
    let mut total = 0.0;
    for topo in ranked_topologies(3) {
        for &(t1, t2, w) in grid {
            let tree = UltrametricTree::new(params.taxa().clone(), topo.clone(), vec![t1, t2])?;
            let lq = log_density(params, &tree)?.log_q;
            let q = lq.exp();
            if q > 0.0 {
                total += w * q * g(&tree, lq)?;
            }
        }
    }
    Ok(total)
}

/// Exact ELBO for three taxa by quadrature on a fixed grid.
pub fn exact_elbo_n3(
    params: &VariationalParams,
    a: &Alignment,
    prior: &PriorConfig,
    grid: &[(f64, f64, f64)],
) -> Result<f64> {
    q_expectation_n3(params, grid, |tree, lq| {
        Ok(log_likelihood(a, tree)? + log_prior(tree, prior)? - lq)
    })
}

fn integrate_cell(params: &VariationalParams, reference: &UltrametricTree, delta: f64, nodes: usize) -> Result<f64> {
    let (x, w) = gauss_legendre(nodes);
    let d = reference.times().len();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        let times: Vec<f64> = reference
            .times()
            .iter()
            .zip(&idx)
            .map(|(&t, &i)| {
                let half = delta * t;
                weight *= w[i] * half;
                t + half * x[i]
            })
            .collect();
        let tree = reference.with_times(times)?;
        total += weight * log_density(params, &tree)?.log_q.exp();
        let mut k = 0;
        loop {
            if k == d {
                return Ok(total);
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn in_cell(tree: &UltrametricTree, reference: &UltrametricTree, delta: f64) -> bool {
    tree.times()
        .iter()
        .zip(reference.times())
        .all(|(t, r)| (t - r).abs() <= delta * r)
        && same_ranked_topology(tree, reference)
}

/// Choose a cell `{tau} × Π [t_n (1 - δ), t_n (1 + δ)]` around one of several
/// trees drawn from `q`, keeping cells clear of the ordering constraints and
/// preferring the most probable.
fn pick_cell(params: &VariationalParams, delta: f64, rng: &mut StreamRng) -> Result<(UltrametricTree, f64)> {
    let mut best: Option<(UltrametricTree, f64)> = None;
    for _ in 0..200 {
        let s = sample_tree(params, rng)?;
        let t = s.tree().times();
        let clear = t.windows(2).all(|w| w[1] * (1.0 - delta) > w[0] * (1.0 + delta) * 1.01);
        if !clear {
            continue;
        }
        let p = integrate_cell(params, s.tree(), delta, 6)?;
        if best.as_ref().is_none_or(|b| p > b.1) {
            best = Some((s.linkage.tree, p));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no cell clear of the ordering constraints".into()))
}

/// Monte Carlo cell frequencies from the sampler against the integrated
/// closed-form density, plus the normalization of the density for `N = 3`.
pub fn check_density(level: Level, seed: u64) -> CheckReport {
    let start = Instant::now();
    report("density", start, || {
        let draws: u64 = level.pick(200_000, 10_000_000);
        let mut details = Vec::new();
        let mut ok = true;
        let mut worst: f64 = 0.0;
        for (n, delta) in [(3usize, 0.05), (4, 0.08)] {
            for setting in 0..5u64 {
                let mut rng = substream(seed, &[1, n as u64, setting]);
                let params = random_params(n, &mut rng, (-1.0, 1.0), (0.3, 1.0));
                let (cell, p) = pick_cell(&params, delta, &mut rng)?;
                let chunks = 64u64;
                let per = draws / chunks;
                let hits: u64 = (0..chunks)
                    .into_par_iter()
                    .map(|c| {
                        let mut r = substream(seed, &[2, n as u64, setting, c]);
                        let mut h = 0u64;
                        for _ in 0..per {
                            let s = sample_tree(&params, &mut r)?;
                            if in_cell(s.tree(), &cell, delta) {
                                h += 1;
                            }
                        }
                        Ok(h)
                    })
                    .collect::<Result<Vec<u64>>>()?
                    .iter()
                    .sum();
                let total = (per * chunks) as f64;
                let freq = hits as f64 / total;
                let se = (p * (1.0 - p) / total).sqrt();
                let z = (freq - p) / se;
                worst = worst.max(z.abs());
                ok &= z.abs() <= 3.0;
                details.push(format!(
                    "N={n} setting {setting}: cell probability {p:.6e}, frequency {freq:.6e} ({hits} hits), z = {z:+.2}"
                ));
            }
        }
        let mut norm_err: f64 = 0.0;
        for setting in 0..3u64 {
            let mut rng = substream(seed, &[3, setting]);
            let params = random_params(3, &mut rng, (-1.0, 1.0), (0.3, 1.0));
            let (lo, hi) = grid_range(&params, 10.0);
            let grid = ordered_log_grid(lo, hi, 160, 8);
            let mass = q_expectation_n3(&params, &grid, |_, _| Ok(1.0))?;
            norm_err = norm_err.max((mass - 1.0).abs());
            details.push(format!("N=3 normalization setting {setting}: total mass {mass:.9}"));
        }
        ok &= norm_err <= 1e-3;
        Ok((
            ok,
            format!(
                "10 cells, {draws} draws each: max |z| = {worst:.2} (limit 3); N=3 mass error {norm_err:.2e} (limit 1e-3)"
            ),
            details,
        ))
    })
}

/// Pruning against enumeration of internal states.
pub fn check_likelihood_oracle(_level: Level, seed: u64) -> CheckReport {
    let start = Instant::now();
    report("likelihood-oracle", start, || {
        let mut worst: f64 = 0.0;
        for i in 0..200u64 {
            let mut rng = substream(seed, &[4, i]);
            let n = rng.random_range(2..=6);
            let m = rng.random_range(1..=10);
            let tree = simulate_coalescent(n, rng.random_range(0.05..2.0), &mut rng)?;
            let a = random_alignment(n, m, &mut rng);
            let fast = log_likelihood(&a, &tree)?;
            let brute = brute_force_log_likelihood(&a, &tree)?;
            worst = worst.max((fast - brute).abs() / brute.abs());
        }
        Ok((
            worst <= 1e-10,
            format!("200 instances (N<=6, M<=10): max relative difference {worst:.2e} (limit 1e-10)"),
            Vec::new(),
        ))
    })
}

/// Exact evidence with no data must be 1 for every `N` in 2..=4.
pub fn check_prior_normalization(_level: Level, _seed: u64) -> CheckReport {
    let start = Instant::now();
    report("prior-normalization", start, || {
        let mut worst: f64 = 0.0;
        let mut details = Vec::new();
        for n in 2..=4 {
            let a = Alignment::empty(default_taxa(n).to_vec())?;
            let e = exact_evidence(&a, &PriorConfig::default())?;
            worst = worst.max(e.log_evidence.abs());
            details.push(format!("N={n}: log evidence {:.3e}", e.log_evidence));
        }
        Ok((
            worst <= 1e-3,
            format!("max |log evidence| at M=0 = {worst:.2e} (limit 1e-3)"),
            details,
        ))
    })
}

const GRAD_TOL: f64 = 1e-5;
/// Components smaller than this are compared in absolute terms.
const GRAD_FLOOR: f64 = 1e-2;

/// Analytic gradients against central finite differences: `∇ ln q`, the
/// likelihood time gradient, and per-sample pathwise gradients at fixed
/// noise away from clustering boundaries.
pub fn check_gradients(level: Level, seed: u64) -> CheckReport {
    let start = Instant::now();
    report("gradients", start, || {
        let count = level.pick(20, 100);
        let prior = PriorConfig::default();
        let (mut wq, mut wl, mut wr) = (0.0f64, 0.0f64, 0.0f64);
        let mut boundary = 0;
        let mut accepted = 0;
        let mut attempt = 0u64;
        while accepted < count {
            attempt += 1;
            if attempt > 20 * count as u64 {
                return Err(Error::InvalidArgument("too many instances near clustering boundaries".into()));
            }
            let mut rng = substream(seed, &[5, attempt]);
            let n = rng.random_range(3..=6);
            let m = rng.random_range(1..=10);
            let params = random_params(n, &mut rng, (-2.5, 0.0), (0.2, 1.0));
            let a = random_alignment(n, m, &mut rng);
            let draw = sample_tree(&params, &mut rng)?;
            let tree = draw.tree().clone();

            // ∇ ln q
            let g = log_density_gradient(&params, &tree)?;
            let base = params.to_vector();
            for i in 0..base.len() {
                let h = 1e-5 * base[i].abs().max(1.0);
                let eval = |d: f64| -> Result<f64> {
                    let mut v = base.clone();
                    v[i] += d;
                    Ok(log_density(&params.with_vector(&v)?, &tree)?.log_q)
                };
                let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
                wq = wq.max((fd - g.params[i]).abs() / fd.abs().max(g.params[i].abs()).max(GRAD_FLOOR));
            }

            // likelihood time gradient
            let dt = log_likelihood_time_gradient(&a, &tree)?;
            for k in 0..tree.times().len() {
                let h = 1e-5 * tree.times()[k];
                let eval = |d: f64| -> Result<f64> {
                    let mut t = tree.times().to_vec();
                    t[k] += d;
                    log_likelihood(&a, &tree.with_times(t)?)
                };
                let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
                wl = wl.max((fd - dt[k]).abs() / fd.abs().max(dt[k].abs()).max(GRAD_FLOOR));
            }

            // pathwise at fixed noise
            let noise = draw.noise.clone();
            let selected = draw.linkage.selected.clone();
            let sample = evaluate_draw(&params, &a, &prior, draw, true)?;
            let pg = sample.pathwise_grad.expect("pathwise requested");
            let mut crosses = false;
            let mut errs = Vec::with_capacity(base.len());
            for i in 0..base.len() {
                let h = 1e-5 * base[i].abs().max(1.0);
                let mut eval = |d: f64| -> Result<f64> {
                    let mut v = base.clone();
                    v[i] += d;
                    let p = params.with_vector(&v)?;
                    let s = tree_from_noise(&p, p.taxa().clone(), noise.clone())?;
                    if s.linkage.selected != selected || !same_ranked_topology(s.tree(), &tree) {
                        crosses = true;
                    }
                    log_weight(&p, &a, &prior, s.tree())
                };
                let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
                errs.push((fd - pg[i]).abs() / fd.abs().max(pg[i].abs()).max(GRAD_FLOOR));
            }
            if crosses {
                boundary += 1;
                continue;
            }
            wr = errs.into_iter().fold(wr, f64::max);
            accepted += 1;
        }
        let ok = wq <= GRAD_TOL && wl <= GRAD_TOL && wr <= GRAD_TOL;
        Ok((
            ok,
            format!(
                "{count} instances: max rel error ln q {wq:.1e}, likelihood {wl:.1e}, pathwise {wr:.1e} (limit {GRAD_TOL:.0e}; {boundary} boundary instances skipped)"
            ),
            Vec::new(),
        ))
    })
}

/// The three-taxon, five-site problem shared by the unbiasedness checks.
pub fn unbiasedness_problem(seed: u64) -> Result<(Alignment, PriorConfig, VariationalParams)> {
    let prior = PriorConfig::new(1.0)?;
    let mut rng = substream(seed, &[6]);
    let tree = simulate_coalescent(3, 1.0, &mut rng)?;
    let a = simulate_sequences(&tree, 5, &mut rng)?;
    let params = VariationalParams::new(
        default_taxa(3),
        vec![(0.4f64).ln(), (0.6f64).ln(), (0.5f64).ln()],
        vec![0.5, 0.6, 0.7],
    )?;
    Ok((a, prior, params))
}

struct Moments {
    mean: Vec<f64>,
    se: Vec<f64>,
}

fn moments(rows: &[Vec<f64>]) -> Moments {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean_v = vec![0.0; d];
    let mut se = vec![0.0; d];
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        mean_v[j] = mean(&col);
        se[j] = (sample_variance(&col) / n).sqrt();
    }
    Moments { mean: mean_v, se }
}

fn estimator_draws(
    estimator: Estimator,
    params: &VariationalParams,
    a: &Alignment,
    prior: &PriorConfig,
    batches: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, &[b as u64]);
            let batch = evaluate_batch(params, a, prior, k, &mut rng, false)?;
            Ok(estimator.estimate(&batch)?.grad)
        })
        .collect()
}

/// Mean of many LOOR gradients against finite differences of the exact ELBO,
/// and mean of many VIMCO gradients against finite differences of a
/// common-random-numbers Monte Carlo estimate of `L_K`.
pub fn check_unbiasedness(level: Level, seed: u64) -> CheckReport {
    let start = Instant::now();
    report("estimator-unbiasedness", start, || {
        let (a, prior, params) = unbiasedness_problem(seed)?;
        let batches = level.pick(2_000, 20_000);
        let outer = level.pick(100_000u64, 1_000_000);
        let k = 4;
        let base = params.to_vector();
        let dim = base.len();
        let mut details = Vec::new();

        // LOOR against the quadrature ELBO
        let (lo, hi) = grid_range(&params, 9.0);
        let grid = ordered_log_grid(lo, hi, 100, 6);
        let h = 1e-3;
        let mut exact = vec![0.0; dim];
        for (i, e) in exact.iter_mut().enumerate() {
            let at = |d: f64| -> Result<f64> {
                let mut v = base.clone();
                v[i] += d;
                exact_elbo_n3(&params.with_vector(&v)?, &a, &prior, &grid)
            };
            *e = (at(h)? - at(-h)?) / (2.0 * h);
        }
        let loor = moments(&estimator_draws(Estimator::Loor, &params, &a, &prior, batches, k, derive_seed(seed, &[7]))?);
        let mut max_z_loor: f64 = 0.0;
        for i in 0..dim {
            let z = (loor.mean[i] - exact[i]) / loor.se[i];
            max_z_loor = max_z_loor.max(z.abs());
            details.push(format!(
                "loor[{i}]: mean {:+.5} ± {:.5}, exact {:+.5}, z {z:+.2}",
                loor.mean[i], loor.se[i], exact[i]
            ));
        }

        // VIMCO against finite differences of L_K with common random numbers
        let hv = 0.05;
        let p = params.n_pairs();
        let chunks = 100u64;
        let per = outer / chunks;
        let lk_seed = derive_seed(seed, &[8]);
        let partial: Vec<Vec<Vec<f64>>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = substream(lk_seed, &[c]);
                let shifted: Vec<VariationalParams> = (0..2 * dim)
                    .map(|j| {
                        let mut v = base.clone();
                        v[j / 2] += if j % 2 == 0 { hv } else { -hv };
                        params.with_vector(&v)
                    })
                    .collect::<Result<_>>()?;
                let mut rows = Vec::with_capacity(per as usize);
                for _ in 0..per {
                    let noise: Vec<Vec<f64>> = (0..k)
                        .map(|_| (0..p).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
                        .collect();
                    let mut lk = vec![0.0; 2 * dim];
                    for (j, ps) in shifted.iter().enumerate() {
                        let f: Vec<f64> = noise
                            .iter()
                            .map(|z| {
                                let s = tree_from_noise(ps, ps.taxa().clone(), z.clone())?;
                                log_weight(ps, &a, &prior, s.tree())
                            })
                            .collect::<Result<_>>()?;
                        lk[j] = logsumexp(&f);
                    }
                    rows.push((0..dim).map(|i| (lk[2 * i] - lk[2 * i + 1]) / (2.0 * hv)).collect());
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<f64>> = partial.into_iter().flatten().collect();
        let oracle = moments(&rows);
        let vimco = moments(&estimator_draws(Estimator::Vimco, &params, &a, &prior, batches, k, derive_seed(seed, &[9]))?);
        let mut max_z_vimco: f64 = 0.0;
        for i in 0..dim {
            let se = (vimco.se[i].powi(2) + oracle.se[i].powi(2)).sqrt();
            let z = (vimco.mean[i] - oracle.mean[i]) / se;
            max_z_vimco = max_z_vimco.max(z.abs());
            details.push(format!(
                "vimco[{i}]: mean {:+.5} ± {:.5}, oracle {:+.5} ± {:.5}, z {z:+.2}",
                vimco.mean[i], vimco.se[i], oracle.mean[i], oracle.se[i]
            ));
        }
        Ok((
            max_z_loor <= 3.0 && max_z_vimco <= 3.0,
            format!(
                "{batches} batches of K={k}: LOOR max |z| {max_z_loor:.2}, VIMCO max |z| {max_z_vimco:.2} (limit 3)"
            ),
            details,
        ))
    })
}

/// Pop size for the evidence-recovery problem; used for simulation and prior.
pub const EVIDENCE_POP_SIZE: f64 = 1.0;
/// Pop size for the topology-recovery problem; used for simulation and prior.
pub const TOPOLOGY_POP_SIZE: f64 = 0.1;

/// Train on simulated three-taxon data and compare the importance-sampling
/// evidence with the exact value.
pub fn check_evidence_recovery(level: Level, seed: u64) -> CheckReport {
    let start = Instant::now();
    report("evidence-recovery", start, || {
        let prior = PriorConfig::new(EVIDENCE_POP_SIZE)?;
        let mut rng = substream(seed, &[10]);
        let truth = simulate_coalescent(3, EVIDENCE_POP_SIZE, &mut rng)?;
        let a = simulate_sequences(&truth, 100, &mut rng)?;
        let exact = exact_evidence(&a, &prior)?.log_evidence;
        let run = RunConfig {
            estimator: Estimator::Loor,
            batch_size: 10,
            learning_rate: 0.01,
            max_iterations: level.pick(500, 2000),
            seed,
            deterministic: true,
            ..RunConfig::default()
        };
        let result = train(&run, &a, &prior, initialize_from_distances(&a)?)?;
        let n = level.pick(2_000, 10_000);
        let w: Vec<f64> = draw_weighted_trees(&result.params, &a, &prior, n, &mut substream(seed, &[11]))?
            .into_iter()
            .map(|s| s.log_weight)
            .collect();
        let mll = mll_from_log_weights(&w)?;
        let elbo = mean(&w);
        let elbo_se = (sample_variance(&w) / n as f64).sqrt();
        let gap = (mll.estimate - exact).abs();
        let bound_ok = elbo <= exact + 3.0 * elbo_se;
        let ma = moving_average(&result.elbo_history, 50);
        let progress = ma.last().copied().unwrap_or(f64::NAN) >= ma.get(49).copied().unwrap_or(f64::NAN);
        Ok((
            gap <= 0.2 && bound_ok,
            format!(
                "exact {exact:.4}, IS estimate {:.4} ± {:.4} ({n} samples, |diff| {gap:.4}, limit 0.2), mean ELBO {elbo:.4} ± {elbo_se:.4} (must be <= exact + 3 SE)",
                mll.estimate, mll.std_error
            ),
            vec![format!(
                "ELBO moving average (window 50): iteration 50 {:.4}, final {:.4}, improved: {progress}",
                ma.get(49).copied().unwrap_or(f64::NAN),
                ma.last().copied().unwrap_or(f64::NAN)
            )],
        ))
    })
}

/// Six taxa, 2000 sites: after a small sweep, most posterior samples share the
/// true root split.
pub fn check_topology_recovery(level: Level, seed: u64) -> CheckReport {
    let start = Instant::now();
    report("topology-recovery", start, || {
        let prior = PriorConfig::new(TOPOLOGY_POP_SIZE)?;
        let mut rng = substream(seed, &[12]);
        let truth = simulate_coalescent(6, TOPOLOGY_POP_SIZE, &mut rng)?;
        let a = simulate_sequences(&truth, 2000, &mut rng)?;
        let run = RunConfig {
            max_iterations: level.pick(300, 1000),
            seed,
            deterministic: true,
            ..RunConfig::default()
        };
        let init = initialize_from_distances(&a)?;
        let s = sweep(&run, &[0.01, 0.03], 2, &a, &prior, &init)?;
        let mut r = substream(seed, &[13]);
        let root = truth.root_split();
        let n = 1000;
        let mut hits = 0;
        for _ in 0..n {
            let t = sample_tree(&s.best.params, &mut r)?;
            if same_split(&t.tree().root_split(), &root) {
                hits += 1;
            }
        }
        let share = hits as f64 / n as f64;
        Ok((
            share >= 0.8,
            format!(
                "{hits}/{n} samples share the true root split ({:.1}%, limit 80%); winner lr {} restart {}",
                100.0 * share,
                s.best_entry.learning_rate,
                s.best_entry.restart
            ),
            Vec::new(),
        ))
    })
}

/// How long to repeat a timed call: until both limits are reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingBudget {
    pub min_time: Duration,
    pub min_calls: usize,
}

impl TimingBudget {
    pub fn new(min_time: Duration, min_calls: usize) -> Self {
        Self { min_time, min_calls: min_calls.max(1) }
    }
}

/// Seconds per call of `f` after one warm-up call.
pub fn time_per_call(budget: TimingBudget, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let start = Instant::now();
    let mut count = 0usize;
    while start.elapsed() < budget.min_time || count < budget.min_calls.max(1) {
        f()?;
        count += 1;
    }
    Ok(start.elapsed().as_secs_f64() / count as f64)
}

/// Seconds for one draw from `q` plus its density and gradient.
pub fn time_density_gradient(n: usize, budget: TimingBudget, seed: u64) -> Result<f64> {
    let mut rng = substream(seed, &[14, n as u64]);
    let params = random_params(n, &mut rng, (-2.0, 0.0), (0.3, 0.8));
    time_per_call(budget, || {
        let s = sample_tree(&params, &mut rng)?;
        black_box(log_density_gradient(&params, s.tree())?);
        Ok(())
    })
}

/// Seconds for one training iteration (batch evaluation and estimator) on
/// simulated data.
pub fn time_estimator_iteration(
    n: usize,
    estimator: Estimator,
    batch_size: usize,
    n_sites: usize,
    budget: TimingBudget,
    seed: u64,
) -> Result<f64> {
    let prior = PriorConfig::default();
    let mut rng = substream(seed, &[15, n as u64]);
    let truth = simulate_coalescent(n, prior.n_e, &mut rng)?;
    let a = simulate_sequences(&truth, n_sites, &mut rng)?;
    let params = initialize_from_distances(&a)?;
    time_per_call(budget, || {
        let batch = evaluate_batch(&params, &a, &prior, batch_size, &mut rng, estimator == Estimator::Reparam)?;
        black_box(estimator.estimate(&batch)?);
        Ok(())
    })
}

/// Log-log slope of density+gradient cost over the taxon counts.
pub fn density_scaling_slope(taxa: &[usize], budget: TimingBudget, seed: u64) -> Result<(Vec<f64>, f64)> {
    let secs = taxa
        .iter()
        .map(|&n| time_density_gradient(n, budget, seed))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = taxa.iter().map(|&n| n as f64).collect();
    Ok((secs.clone(), log_log_slope(&xs, &secs)))
}

pub fn check_scaling(_level: Level, seed: u64) -> CheckReport {
    let start = Instant::now();
    report("scaling", start, || {
        let taxa = [8, 16, 32, 64];
        let (secs, slope) = density_scaling_slope(&taxa, TimingBudget::new(Duration::from_millis(200), 1), seed)?;
        Ok((
            (1.6..=2.6).contains(&slope),
            format!("density+gradient log-log slope {slope:.2} over N = 8..64 (limit [1.6, 2.6])"),
            taxa.iter()
                .zip(&secs)
                .map(|(n, s)| format!("N={n}: {:.3e} s", s))
                .collect(),
        ))
    })
}

type CheckFn = fn(Level, u64) -> CheckReport;

const CHECKS: [(&str, CheckFn); 8] = [
    ("density", check_density),
    ("likelihood-oracle", check_likelihood_oracle),
    ("prior-normalization", check_prior_normalization),
    ("gradients", check_gradients),
    ("estimator-unbiasedness", check_unbiasedness),
    ("evidence-recovery", check_evidence_recovery),
    ("topology-recovery", check_topology_recovery),
    ("scaling", check_scaling),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

pub fn run_check(name: &str, level: Level, seed: u64) -> Result<CheckReport> {
    CHECKS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, f)| f(level, seed))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown check `{name}` (one of {})", check_names().join(", "))))
}

/// Every check in criterion order.
pub fn run_all(level: Level, seed: u64) -> Vec<CheckReport> {
    CHECKS.iter().map(|(_, f)| f(level, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_integrates_exponential_pair() {
        // ∫∫_{t1<t2} e^{-t1-t2} dt = 1/2
        let grid = ordered_log_grid(-25.0, 4.5, 200, 8);
        let total: f64 = grid.iter().map(|(a, b, w)| w * (-a - b).exp()).sum();
        assert!((total - 0.5).abs() < 1e-6, "{total}");
    }

    #[test]
    fn cells_integrate_to_positive_mass() {
        let mut rng = substream(1, &[]);
        let params = random_params(3, &mut rng, (-1.0, 1.0), (0.3, 1.0));
        let (_, p) = pick_cell(&params, 0.05, &mut rng).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn fast_checks_pass() {
        for r in [
            check_likelihood_oracle(Level::Fast, 1),
            check_prior_normalization(Level::Fast, 1),
            check_gradients(Level::Fast, 1),
        ] {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn levels_parse() {
        assert_eq!("fast".parse::<Level>().unwrap(), Level::Fast);
        assert!("slow".parse::<Level>().is_err());
    }
}
