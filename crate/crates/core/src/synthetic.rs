//! Generators for ground-truth data and exact small-N evidence.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::alignment::{Alignment, N_STATES};
use crate::error::{Error, Result};
use crate::likelihood::log_likelihood;
use crate::numeric::logsumexp;
use crate::prior::{log_topology_prefactor, PriorConfig};
use crate::quadrature::{integrate_adaptive, Tolerance};
use crate::subst_model::{JukesCantor, SubstitutionModel};
use crate::tree::{default_taxa, taxon_set, Clade, TaxonSet, UltrametricTree};

/// Largest taxon count accepted by [`exact_evidence`].
pub const EXACT_MAX_TAXA: usize = 4;

/// Kingman coalescent: with `k` lineages wait `Exp(C(k,2) / n_e)` and merge a
/// uniformly chosen pair.
pub fn simulate_coalescent<R: Rng + ?Sized>(n_taxa: usize, n_e: f64, rng: &mut R) -> Result<UltrametricTree> {
    simulate_coalescent_with_taxa(default_taxa(n_taxa), &PriorConfig::new(n_e)?, rng)
}

pub fn simulate_coalescent_with_taxa<R: Rng + ?Sized>(
    taxa: TaxonSet,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<UltrametricTree> {
    let n = taxa.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 taxa".into()));
    }
    let mut lineages: Vec<Clade> = (0..n).map(|i| Clade::singleton(i, n)).collect();
    let mut bip = Vec::with_capacity(n - 1);
    let mut times = Vec::with_capacity(n - 1);
    let mut t = 0.0;
    while lineages.len() > 1 {
        let k = lineages.len();
        let hold = Exp::new(prior.rate(k))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
        t += hold;
        let i = rng.random_range(0..k);
        let mut j = rng.random_range(0..k - 1);
        if j >= i {
            j += 1;
        }
        let (lo, hi) = (i.min(j), i.max(j));
        let b = lineages.swap_remove(hi);
        let a = lineages.swap_remove(lo);
        lineages.push(a.union(&b));
        bip.push((a, b));
        times.push(t);
    }
    UltrametricTree::new(taxa, bip, times)
}

fn draw_state<R: Rng + ?Sized>(probs: &[f64; N_STATES], rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return s as u8;
        }
    }
    (N_STATES - 1) as u8
}

/// Forward Jukes-Cantor simulation down the tree.
pub fn simulate_sequences<R: Rng + ?Sized>(tree: &UltrametricTree, n_sites: usize, rng: &mut R) -> Result<Alignment> {
    if n_sites == 0 {
        return Err(Error::InvalidArgument("need at least one site".into()));
    }
    let n = tree.n_taxa();
    let nodes = tree.n_nodes();
    let transitions = (0..nodes)
        .map(|v| {
            if v == tree.root() {
                Ok([[0.0; N_STATES]; N_STATES])
            } else {
                JukesCantor.transition(tree.branch_length(v))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let pi = JukesCantor.stationary();
    let mut columns = Vec::with_capacity(n_sites);
    let mut state = vec![0u8; nodes];
    for _ in 0..n_sites {
        state[tree.root()] = draw_state(&pi, rng);
        for event in (0..n - 1).rev() {
            let parent = n + event;
            for c in tree.children(event) {
                state[c] = draw_state(&transitions[c][state[parent] as usize], rng);
            }
        }
        columns.push(state[..n].to_vec());
    }
    Alignment::from_columns(tree.taxa().to_vec(), columns)
}

/// Every ranked topology on `n` taxa as its sequence of bipartitions.
/// There are `n! (n-1)! / 2^(n-1)` of them.
pub fn ranked_topologies(n: usize) -> Vec<Vec<(Clade, Clade)>> {
    fn rec(lineages: &[Clade], acc: &mut Vec<(Clade, Clade)>, out: &mut Vec<Vec<(Clade, Clade)>>) {
        if lineages.len() == 1 {
            out.push(acc.clone());
            return;
        }
        for i in 0..lineages.len() {
            for j in i + 1..lineages.len() {
                let mut next: Vec<Clade> = lineages
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i && *k != j)
                    .map(|(_, c)| c.clone())
                    .collect();
                next.push(lineages[i].union(&lineages[j]));
                acc.push((lineages[i].clone(), lineages[j].clone()));
                rec(&next, acc, out);
                acc.pop();
            }
        }
    }
    let start: Vec<Clade> = (0..n).map(|i| Clade::singleton(i, n)).collect();
    let mut out = Vec::new();
    rec(&start, &mut Vec::new(), &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub topologies: Vec<Vec<(Clade, Clade)>>,
    /// `ln ∫ p(Y | tau, t) p(tau, t) dt` per ranked topology
    pub log_contributions: Vec<f64>,
    pub log_evidence: f64,
    /// summed absolute quadrature error estimate, relative to the evidence
    pub relative_error: f64,
}

impl ExactPosterior {
    pub fn topology_probabilities(&self) -> Vec<f64> {
        self.log_contributions
            .iter()
            .map(|c| (c - self.log_evidence).exp())
            .collect()
    }
}

/// Initial breakpoints in the unit-cube coordinates; the data usually pull
/// the posterior toward short hold times, i.e. small `u`.
const BREAKS: [f64; 6] = [0.0, 1e-3, 1e-2, 0.1, 0.5, 1.0];

fn nested<F>(dims: usize, depth: usize, u: &mut Vec<f64>, f: &mut F, tol: Tolerance) -> Result<(f64, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut err_acc = 0.0;
    let est = integrate_adaptive(
        |x| {
            u[depth] = x;
            if depth + 1 == dims {
                f(u)
            } else {
                let (v, e) = nested(dims, depth + 1, u, f, tol)?;
                err_acc += e;
                Ok(v)
            }
        },
        &BREAKS,
        tol,
    )?;
    Ok((est.value, est.error))
}

/// Evidence `p(Y)` for `N <= 4` by enumerating ranked topologies and
/// integrating each over its hold times. Hold time `h_k ~ Exp(lambda_k)` is
/// mapped through its CDF to `u_k in [0, 1)`, so the prior becomes uniform
/// and each topology contributes `prefactor · ∫_{[0,1]^{N-1}} p(Y | tau, t(u)) du`.
pub fn exact_evidence(a: &Alignment, prior: &PriorConfig) -> Result<ExactPosterior> {
    let n = a.n_taxa();
    if !(2..=EXACT_MAX_TAXA).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "exact evidence supports 2..={EXACT_MAX_TAXA} taxa, got {n}"
        )));
    }
    let taxa = taxon_set(a.taxa());
    let dims = n - 1;
    let rates: Vec<f64> = (0..dims).map(|i| prior.event_rate(n, i)).collect();
    let topologies = ranked_topologies(n);
    let times_of = |u: &[f64]| -> Vec<f64> {
        let mut t = 0.0;
        u.iter()
            .zip(&rates)
            .map(|(u, r)| {
                t += -(-u).ln_1p() / r;
                t
            })
            .collect()
    };
    let loglik = |topo: &Vec<(Clade, Clade)>, u: &[f64]| -> Result<f64> {
        let tree = UltrametricTree::new(taxa.clone(), topo.clone(), times_of(u))?;
        log_likelihood(a, &tree)
    };

    // scale by a coarse maximum so that exp() stays in range
    let grid: Vec<f64> = [1e-5, 1e-4, 5e-4, 2e-3, 5e-3, 0.01, 0.03, 0.07, 0.15, 0.3, 0.5, 0.7, 0.9, 0.99]
        .to_vec();
    let mut offset = f64::NEG_INFINITY;
    let mut idx = vec![0usize; dims];
    let mut u = vec![0.0; dims];
    for topo in &topologies {
        idx.iter_mut().for_each(|i| *i = 0);
        'grid: loop {
            for (d, i) in idx.iter().enumerate() {
                u[d] = grid[*i];
            }
            offset = offset.max(loglik(topo, &u)?);
            for i in idx.iter_mut() {
                *i += 1;
                if *i < grid.len() {
                    continue 'grid;
                }
                *i = 0;
            }
            break;
        }
    }
    if !offset.is_finite() {
        return Err(Error::Quadrature("likelihood vanishes on the whole search grid".into()));
    }

    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-8,
        max_intervals: 400,
    };
    let prefactor = log_topology_prefactor(n);
    let mut log_contributions = Vec::with_capacity(topologies.len());
    let mut abs_err = 0.0;
    for topo in &topologies {
        let mut f = |u: &[f64]| -> Result<f64> { Ok((loglik(topo, u)? - offset).exp()) };
        let (v, e) = nested(dims, 0, &mut vec![0.0; dims], &mut f, tol)?;
        abs_err += e * prefactor.exp();
        log_contributions.push(offset + prefactor + v.ln());
    }
    let log_evidence = logsumexp(&log_contributions);
    Ok(ExactPosterior {
        topologies,
        log_contributions,
        log_evidence,
        relative_error: abs_err / (log_evidence - offset).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::parse_fasta;
    use crate::rng::substream;
    use crate::tree::pair_index;
    use approx::assert_relative_eq;

    #[test]
    fn topology_counts() {
        assert_eq!(ranked_topologies(2).len(), 1);
        assert_eq!(ranked_topologies(3).len(), 3);
        assert_eq!(ranked_topologies(4).len(), 18);
        assert_eq!(ranked_topologies(5).len(), 180);
    }

    #[test]
    fn no_data_gives_zero_log_evidence() {
        for n in 2..=4 {
            let a = Alignment::empty(default_taxa(n).to_vec()).unwrap();
            let e = exact_evidence(&a, &PriorConfig::new(1.3).unwrap()).unwrap();
            assert!(e.log_evidence.abs() < 1e-10, "n={n}: {}", e.log_evidence);
        }
    }

    #[test]
    fn two_taxa_closed_form() {
        let a = parse_fasta(b">a\nA\n>b\nA\n").unwrap();
        let cfg = PriorConfig::new(5.0).unwrap();
        let lam = cfg.rate(2);
        let exact = 0.25 * (0.25 + 0.75 * lam / (lam + 8.0 / 3.0));
        let e = exact_evidence(&a, &cfg).unwrap();
        assert_relative_eq!(e.log_evidence.exp(), exact, max_relative = 1e-8);
    }

    #[test]
    fn rejects_large_n() {
        let a = Alignment::empty(default_taxa(5).to_vec()).unwrap();
        assert!(exact_evidence(&a, &PriorConfig::default()).is_err());
    }

    #[test]
    fn coalescent_two_taxa_mean() {
        let mut rng = substream(11, &[]);
        let n_e = 5.0;
        let draws: Vec<f64> = (0..100_000)
            .map(|_| simulate_coalescent(2, n_e, &mut rng).unwrap().times()[0])
            .collect();
        let m = crate::numeric::mean(&draws);
        let se = (crate::numeric::sample_variance(&draws) / draws.len() as f64).sqrt();
        assert!((m - n_e).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn coalescent_first_merge_is_uniform() {
        let mut rng = substream(12, &[]);
        let n = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let t = simulate_coalescent(3, 1.0, &mut rng).unwrap();
            let (w, z) = &t.bipartitions()[0];
            counts[pair_index(w.first().unwrap(), z.first().unwrap(), 3)] += 1;
        }
        let p = 1.0 / 3.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - p).abs() < 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn sequences_on_degenerate_and_long_trees() {
        let taxa = default_taxa(4);
        let topo = ranked_topologies(4).remove(0);
        let flat = UltrametricTree::new(taxa.clone(), topo.clone(), vec![0.0; 3]).unwrap();
        let a = simulate_sequences(&flat, 200, &mut substream(5, &[])).unwrap();
        assert!(a.patterns().iter().all(|p| p.iter().all(|&c| c == p[0])));
        let long = UltrametricTree::new(taxa, topo, vec![100.0, 200.0, 300.0]).unwrap();
        let a = simulate_sequences(&long, 20_000, &mut substream(6, &[])).unwrap();
        let (r0, r1) = (a.row(0), a.row(1));
        let diff = r0.iter().zip(&r1).filter(|(x, y)| x != y).count() as f64 / 20_000.0;
        assert!((diff - 0.75).abs() < 0.02, "{diff}");
    }
}
