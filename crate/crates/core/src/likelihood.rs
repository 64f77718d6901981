//! Phylogenetic likelihood by post-order pruning with per-pattern rescaling,
//! its gradient with respect to the coalescent times, and a brute-force
//! enumeration oracle for small trees.

use crate::alignment::{Alignment, MISSING, N_STATES};
use crate::error::{Error, Result};
use crate::numeric::logsumexp;
use crate::subst_model::{mat_vec, vec_mat, JukesCantor, Matrix4, SubstitutionModel, Vector4};
use crate::tree::UltrametricTree;

/// Rescale a partial vector once its largest entry drops below this.
const RESCALE_BELOW: f64 = 1e-150;

/// Largest tree the enumeration oracle accepts.
pub const BRUTE_FORCE_MAX_TAXA: usize = 8;

fn check_taxa(a: &Alignment, tree: &UltrametricTree) -> Result<()> {
    if a.taxa() != &tree.taxa()[..] {
        return Err(Error::TaxaMismatch(format!(
            "alignment taxa {:?} differ from tree taxa {:?}",
            a.taxa(),
            &tree.taxa()[..]
        )));
    }
    Ok(())
}

fn leaf_vector(code: u8) -> Vector4 {
    if code == MISSING {
        [1.0; N_STATES]
    } else {
        let mut v = [0.0; N_STATES];
        v[code as usize] = 1.0;
        v
    }
}

/// Conditional likelihoods for every node and pattern after a post-order pass.
///
/// `partials[node * P + p]` is the (rescaled) probability of the data below
/// `node` given each state at `node`; `down[node * P + p]` is the same after
/// propagation along the branch above `node`.
#[derive(Debug, Clone)]
pub struct PartialLikelihoodTable {
    n_patterns: usize,
    partials: Vec<Vector4>,
    down: Vec<Vector4>,
    /// accumulated `ln` of the scale factors, per pattern
    log_scale: Vec<f64>,
    transitions: Vec<Matrix4>,
}

impl PartialLikelihoodTable {
    pub fn partial(&self, node: usize, pattern: usize) -> &Vector4 {
        &self.partials[node * self.n_patterns + pattern]
    }

    pub fn log_scale(&self, pattern: usize) -> f64 {
        self.log_scale[pattern]
    }
}

/// Post-order pruning pass.
pub fn prune<M: SubstitutionModel>(
    model: &M,
    a: &Alignment,
    tree: &UltrametricTree,
) -> Result<PartialLikelihoodTable> {
    check_taxa(a, tree)?;
    let n = tree.n_taxa();
    let np = a.n_patterns();
    let nodes = tree.n_nodes();
    let mut partials = vec![[0.0; N_STATES]; nodes * np];
    let mut down = vec![[0.0; N_STATES]; nodes * np];
    let mut log_scale = vec![0.0; np];
    let transitions: Vec<Matrix4> = (0..nodes)
        .map(|v| model.transition(tree.branch_length(v)))
        .collect::<Result<_>>()?;

    for (p, pat) in a.patterns().iter().enumerate() {
        for (leaf, &code) in pat.iter().enumerate() {
            let l = leaf_vector(code);
            partials[leaf * np + p] = l;
            down[leaf * np + p] = mat_vec(&transitions[leaf], &l);
        }
    }
    for k in 0..n - 1 {
        let v = n + k;
        let [c0, c1] = tree.children(k);
        for p in 0..np {
            let d0 = &down[c0 * np + p];
            let d1 = &down[c1 * np + p];
            let mut out = [0.0; N_STATES];
            let mut max: f64 = 0.0;
            for i in 0..N_STATES {
                out[i] = d0[i] * d1[i];
                max = max.max(out[i]);
            }
            if max < RESCALE_BELOW && max > 0.0 {
                for x in &mut out {
                    *x /= max;
                }
                log_scale[p] += max.ln();
            }
            partials[v * np + p] = out;
            down[v * np + p] = mat_vec(&transitions[v], &out);
        }
    }
    Ok(PartialLikelihoodTable {
        n_patterns: np,
        partials,
        down,
        log_scale,
        transitions,
    })
}

fn site_log_likelihoods<M: SubstitutionModel>(
    model: &M,
    table: &PartialLikelihoodTable,
    tree: &UltrametricTree,
) -> Vec<f64> {
    let pi = model.stationary();
    let root = tree.root();
    (0..table.n_patterns)
        .map(|p| {
            let l = table.partial(root, p);
            let s: f64 = (0..N_STATES).map(|i| pi[i] * l[i]).sum();
            s.ln() + table.log_scale[p]
        })
        .collect()
}

fn weighted_sum(a: &Alignment, per_pattern: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&w, &l) in a.pattern_weights().iter().zip(per_pattern) {
        if w != 0.0 {
            total += w * l;
        }
    }
    if total.is_nan() || total == f64::INFINITY {
        return Err(Error::NonFinite(format!("log-likelihood evaluated to {total}")));
    }
    Ok(total)
}

/// Per-pattern log-likelihoods (unweighted).
pub fn pattern_log_likelihoods(a: &Alignment, tree: &UltrametricTree) -> Result<Vec<f64>> {
    let table = prune(&JukesCantor, a, tree)?;
    Ok(site_log_likelihoods(&JukesCantor, &table, tree))
}

/// `ln p(Y | tau, t)` under Jukes-Cantor. Returns `-inf` (not an error) when
/// some site has probability zero, which needs a zero-length branch.
pub fn log_likelihood(a: &Alignment, tree: &UltrametricTree) -> Result<f64> {
    log_likelihood_with(&JukesCantor, a, tree)
}

pub fn log_likelihood_with<M: SubstitutionModel>(
    model: &M,
    a: &Alignment,
    tree: &UltrametricTree,
) -> Result<f64> {
    let table = prune(model, a, tree)?;
    weighted_sum(a, &site_log_likelihoods(model, &table, tree))
}

/// Log-likelihood and its partial derivatives with respect to each coalescent
/// time `t_n`, topology held fixed. One post-order and one pre-order sweep.
pub fn log_likelihood_and_time_gradient(
    a: &Alignment,
    tree: &UltrametricTree,
) -> Result<(f64, Vec<f64>)> {
    log_likelihood_and_time_gradient_with(&JukesCantor, a, tree)
}

pub fn log_likelihood_time_gradient(a: &Alignment, tree: &UltrametricTree) -> Result<Vec<f64>> {
    log_likelihood_and_time_gradient(a, tree).map(|(_, g)| g)
}

pub fn log_likelihood_and_time_gradient_with<M: SubstitutionModel>(
    model: &M,
    a: &Alignment,
    tree: &UltrametricTree,
) -> Result<(f64, Vec<f64>)> {
    let table = prune(model, a, tree)?;
    let ll = weighted_sum(a, &site_log_likelihoods(model, &table, tree))?;
    let n = tree.n_taxa();
    let np = table.n_patterns;
    let nodes = tree.n_nodes();
    let root = tree.root();
    let weights = a.pattern_weights();
    let derivs: Vec<Matrix4> = (0..nodes)
        .map(|v| model.transition_derivative(tree.branch_length(v)))
        .collect::<Result<_>>()?;

    // outside[c * np + p]: probability of everything outside the subtree of c,
    // as a function of the state at c's parent (rescaled per pattern)
    let mut outside = vec![[0.0; N_STATES]; nodes * np];
    // d lnL / d b_c for every non-root node
    let mut branch_grad = vec![0.0; nodes];
    let pi = model.stationary();

    for k in (0..n - 1).rev() {
        let v = n + k;
        let [c0, c1] = tree.children(k);
        for p in 0..np {
            let up = if v == root {
                pi
            } else {
                vec_mat(&outside[v * np + p], &table.transitions[v])
            };
            for (c, sib) in [(c0, c1), (c1, c0)] {
                let ds = &table.down[sib * np + p];
                let mut o = [0.0; N_STATES];
                let mut max: f64 = 0.0;
                for i in 0..N_STATES {
                    o[i] = up[i] * ds[i];
                    max = max.max(o[i]);
                }
                if max > 0.0 {
                    for x in &mut o {
                        *x /= max;
                    }
                }
                outside[c * np + p] = o;
            }
        }
    }
    for c in 0..nodes {
        if c == root {
            continue;
        }
        let mut g = 0.0;
        for p in 0..np {
            let w = weights[p];
            if w == 0.0 {
                continue;
            }
            let o = &outside[c * np + p];
            let l = table.partial(c, p);
            let dl = mat_vec(&derivs[c], l);
            let d = &table.down[c * np + p];
            let num: f64 = (0..N_STATES).map(|i| o[i] * dl[i]).sum();
            let den: f64 = (0..N_STATES).map(|i| o[i] * d[i]).sum();
            g += w * num / den;
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "likelihood gradient for branch above node {c} is {g}"
            )));
        }
        branch_grad[c] = g;
    }
    let mut grad = vec![0.0; n - 1];
    for (k, gk) in grad.iter_mut().enumerate() {
        let v = n + k;
        let [c0, c1] = tree.children(k);
        *gk = branch_grad[c0] + branch_grad[c1];
        if v != root {
            *gk -= branch_grad[v];
        }
    }
    Ok((ll, grad))
}

/// Direct enumeration of all `4^(N-1)` internal-state assignments per
/// pattern, summed in log space. Exponential; only for `N <= 8`.
pub fn brute_force_log_likelihood(a: &Alignment, tree: &UltrametricTree) -> Result<f64> {
    check_taxa(a, tree)?;
    let n = tree.n_taxa();
    if n > BRUTE_FORCE_MAX_TAXA {
        return Err(Error::InvalidArgument(format!(
            "brute-force likelihood limited to {BRUTE_FORCE_MAX_TAXA} taxa, got {n}"
        )));
    }
    let model = JukesCantor;
    let log_pi = model.stationary().map(f64::ln);
    let log_p: Vec<Matrix4> = (0..tree.n_nodes())
        .map(|v| {
            model
                .transition(tree.branch_length(v))
                .map(|m| m.map(|row| row.map(f64::ln)))
        })
        .collect::<Result<_>>()?;
    // ln Σ_j P[i][j] for a leaf with unobserved state
    let log_row_sum: Vec<Vector4> = (0..n)
        .map(|v| {
            let p = model.transition(tree.branch_length(v)).unwrap();
            p.map(|row| row.iter().sum::<f64>().ln())
        })
        .collect();
    let n_internal = n - 1;
    let n_assign = 1usize << (2 * n_internal);
    let mut per_pattern = Vec::with_capacity(a.n_patterns());
    let mut terms = vec![0.0; n_assign];
    let mut states = vec![0usize; tree.n_nodes()];
    for pat in a.patterns() {
        for (s, term) in terms.iter_mut().enumerate() {
            for k in 0..n_internal {
                states[n + k] = (s >> (2 * k)) & 3;
            }
            let mut acc = log_pi[states[tree.root()]];
            for k in 0..n_internal {
                let v = n + k;
                let sv = states[v];
                for c in tree.children(k) {
                    acc += if c < n {
                        match pat[c] {
                            MISSING => log_row_sum[c][sv],
                            x => log_p[c][sv][x as usize],
                        }
                    } else {
                        log_p[c][sv][states[c]]
                    };
                }
            }
            *term = acc;
        }
        per_pattern.push(logsumexp(&terms));
    }
    weighted_sum(a, &per_pattern)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::parse_fasta;
    use crate::tree::{taxon_set, Clade};
    use approx::assert_relative_eq;

    fn pair_tree(t: f64) -> UltrametricTree {
        UltrametricTree::new(
            taxon_set(&["a", "b"]),
            vec![(Clade::singleton(0, 2), Clade::singleton(1, 2))],
            vec![t],
        )
        .unwrap()
    }

    #[test]
    fn zero_time_identical_states() {
        let a = parse_fasta(b">a\nA\n>b\nA\n").unwrap();
        assert_relative_eq!(log_likelihood(&a, &pair_tree(0.0)).unwrap(), 0.25f64.ln());
    }

    #[test]
    fn zero_time_different_states_is_minus_infinity() {
        let a = parse_fasta(b">a\nA\n>b\nC\n").unwrap();
        assert_eq!(log_likelihood(&a, &pair_tree(0.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn two_taxa_closed_form() {
        // branches of 0.1 compose to a single 0.2 path
        let a = parse_fasta(b">a\nA\n>b\nA\n").unwrap();
        let expect = (0.25 * (0.25 + 0.75 * (-0.8f64 / 3.0).exp())).ln();
        let tree = pair_tree(0.1);
        assert_relative_eq!(log_likelihood(&a, &tree).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(brute_force_log_likelihood(&a, &tree).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn missing_leaf_marginalizes() {
        let a = parse_fasta(b">a\nA\n>b\n-\n").unwrap();
        let tree = pair_tree(0.3);
        assert_relative_eq!(log_likelihood(&a, &tree).unwrap(), 0.25f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(brute_force_log_likelihood(&a, &tree).unwrap(), 0.25f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn two_taxa_time_gradient_closed_form() {
        let a = parse_fasta(b">a\nA\n>b\nA\n").unwrap();
        for t in [0.01f64, 0.2, 1.5] {
            let e = (-8.0 * t / 3.0).exp();
            let expect = -2.0 * e / (0.25 + 0.75 * e);
            let g = log_likelihood_time_gradient(&a, &pair_tree(t)).unwrap();
            assert_relative_eq!(g[0], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_sites_flatten_at_large_times() {
        let a = parse_fasta(b">a\nAAC\n>b\nAAC\n").unwrap();
        let g = log_likelihood_time_gradient(&a, &pair_tree(40.0)).unwrap();
        assert!(g[0].abs() < 1e-20);
    }

    #[test]
    fn taxa_mismatch_is_an_error() {
        let a = parse_fasta(b">x\nA\n>b\nA\n").unwrap();
        assert!(matches!(log_likelihood(&a, &pair_tree(1.0)), Err(Error::TaxaMismatch(_))));
    }

    #[test]
    fn brute_force_size_guard() {
        let n = 9;
        let taxa: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let a = Alignment::from_rows(taxa.clone(), vec![vec![0]; n]).unwrap();
        let m = crate::tree::PairMatrix::from_fn(n, |u, v| (u + v) as f64 + 1.0).unwrap();
        let tree = crate::tree::single_linkage(&m, taxon_set(&taxa)).unwrap();
        assert!(brute_force_log_likelihood(&a, &tree).is_err());
        assert!(log_likelihood(&a, &tree).unwrap().is_finite());
    }

    #[test]
    fn deep_trees_do_not_underflow() {
        // 40 taxa, 1 site, every leaf different from its neighbours
        let n = 40;
        let taxa: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let rows = (0..n).map(|i| vec![(i % 4) as u8; 200]).collect();
        let a = Alignment::from_rows(taxa.clone(), rows).unwrap();
        let m = crate::tree::PairMatrix::from_fn(n, |u, v| 1e-3 * (1 + u + v) as f64).unwrap();
        let tree = crate::tree::single_linkage(&m, taxon_set(&taxa)).unwrap();
        let ll = log_likelihood(&a, &tree).unwrap();
        assert!(ll.is_finite() && ll < -1000.0, "{ll}");
    }
}
