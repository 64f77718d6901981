//! Monte Carlo and quadrature comparisons with fixed seeds.

use vipr::alignment::Alignment;
use vipr::estimators::{
    draw_weighted_trees, elbo_estimate, estimate_mll, evaluate_batch, evaluate_draw,
    mll_from_log_weights, multisample_elbo_estimate,
};
use vipr::likelihood::log_likelihood;
use vipr::numeric::{mean, sample_variance};
use vipr::prior::PriorConfig;
use vipr::rng::substream;
use vipr::synthetic::{exact_evidence, simulate_coalescent, simulate_sequences};
use vipr::trainer::{initialize_from_distances, moving_average, train, Estimator, RunConfig};
use vipr::tree::{default_taxa, pair_index};
use vipr::variational::{sample_tree, tree_from_noise};
use vipr::VariationalParams;

fn toy(seed: u64, sites: usize) -> (Alignment, PriorConfig, f64) {
    let prior = PriorConfig::new(1.0).unwrap();
    let mut rng = substream(seed, &[]);
    let tree = simulate_coalescent(3, 1.0, &mut rng).unwrap();
    let a = simulate_sequences(&tree, sites, &mut rng).unwrap();
    let exact = exact_evidence(&a, &prior).unwrap().log_evidence;
    (a, prior, exact)
}

fn trained(a: &Alignment, prior: &PriorConfig, iters: usize) -> VariationalParams {
    let run = RunConfig {
        max_iterations: iters,
        seed: 5,
        ..RunConfig::default()
    };
    train(&run, a, prior, initialize_from_distances(a).unwrap()).unwrap().params
}

#[test]
fn symmetric_family_samples_topologies_uniformly() {
    let params = VariationalParams::uniform(default_taxa(3), -0.3, 0.8).unwrap();
    let mut rng = substream(21, &[]);
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let s = sample_tree(&params, &mut rng).unwrap();
        let (w, z) = &s.tree().bipartitions()[0];
        counts[pair_index(w.first().unwrap().min(z.first().unwrap()), w.first().unwrap().max(z.first().unwrap()), 3)] += 1;
    }
    let p = 1.0 / 3.0;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for c in counts {
        assert!((c as f64 / n as f64 - p).abs() < 3.0 * se, "{counts:?}");
    }
}

#[test]
fn two_taxon_sample_is_the_pair_draw() {
    let params = VariationalParams::new(default_taxa(2), vec![0.3], vec![0.4]).unwrap();
    let s = sample_tree(&params, &mut substream(2, &[])).unwrap();
    assert_eq!(s.tree().times()[0], (0.3 + 0.4 * s.noise[0]).exp());
}

#[test]
fn elbo_is_below_the_exact_evidence() {
    let (a, prior, exact) = toy(31, 20);
    let params = initialize_from_distances(&a).unwrap();
    let f: Vec<f64> = draw_weighted_trees(&params, &a, &prior, 20_000, &mut substream(1, &[]))
        .unwrap()
        .iter()
        .map(|s| s.log_weight)
        .collect();
    let se = (sample_variance(&f) / f.len() as f64).sqrt();
    assert!(mean(&f) <= exact + 3.0 * se, "elbo {} exact {exact}", mean(&f));
}

#[test]
fn more_samples_tighten_the_bound() {
    let (a, prior, _) = toy(32, 20);
    let params = initialize_from_distances(&a).unwrap();
    let mut rng = substream(3, &[]);
    let (mut l1, mut l10) = (0.0, 0.0);
    for _ in 0..200 {
        let b = evaluate_batch(&params, &a, &prior, 10, &mut rng, false).unwrap();
        l10 += multisample_elbo_estimate(&b);
        l1 += b.samples[0].f;
    }
    assert!(l10 >= l1, "L_10 {l10} L_1 {l1}");
}

#[test]
fn importance_sampling_converges_to_exact_evidence() {
    let (a, prior, exact) = toy(33, 30);
    let params = trained(&a, &prior, 500);
    let m = estimate_mll(&params, &a, &prior, 100_000, &mut substream(4, &[])).unwrap();
    assert!((m.estimate - exact).abs() < 0.05, "{} vs {exact}", m.estimate);
    assert!(m.effective_sample_size > 1.0 && m.std_error > 0.0);
}

#[test]
fn mll_estimate_dominates_elbo_on_matched_batches() {
    let (a, prior, _) = toy(34, 30);
    let params = initialize_from_distances(&a).unwrap();
    let mut rng = substream(5, &[]);
    let (mut mll, mut elbo) = (0.0, 0.0);
    for _ in 0..200 {
        let b = evaluate_batch(&params, &a, &prior, 20, &mut rng, false).unwrap();
        mll += mll_from_log_weights(&b.f_values()).unwrap().estimate;
        elbo += elbo_estimate(&b);
    }
    assert!(mll >= elbo);
}

#[test]
fn exact_posterior_matches_prior_importance_sampling() {
    let (a, prior, _) = toy(35, 8);
    let exact = exact_evidence(&a, &prior).unwrap();
    let probs = exact.topology_probabilities();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    // self-normalized importance sampling with the prior as proposal
    let mut rng = substream(6, &[]);
    let n = 200_000;
    let mut w = vec![0.0; n];
    let mut which = vec![0usize; n];
    for i in 0..n {
        let t = simulate_coalescent(3, prior.n_e, &mut rng).unwrap();
        w[i] = log_likelihood(&a, &t).unwrap().exp();
        which[i] = exact
            .topologies
            .iter()
            .position(|topo| {
                let (x, y) = &topo[0];
                let (u, v) = &t.bipartitions()[0];
                (x == u && y == v) || (x == v && y == u)
            })
            .unwrap();
    }
    let total: f64 = w.iter().sum();
    for (k, p) in probs.iter().enumerate() {
        let est: f64 = w.iter().zip(&which).filter(|(_, j)| **j == k).map(|(w, _)| w).sum::<f64>() / total;
        // delta-method standard error of a ratio estimator
        let var: f64 = w
            .iter()
            .zip(&which)
            .map(|(w, j)| (w * (if *j == k { 1.0 } else { 0.0 } - est)).powi(2))
            .sum::<f64>()
            / (total * total);
        assert!((est - p).abs() < 3.0 * var.sqrt(), "topology {k}: {est} vs {p}");
    }
}

#[test]
fn true_tree_beats_random_tree() {
    let mut wins = 0;
    for trial in 0..100 {
        let mut rng = substream(40, &[trial]);
        let truth = simulate_coalescent(5, 1.0, &mut rng).unwrap();
        let a = simulate_sequences(&truth, 1000, &mut rng).unwrap();
        let other = simulate_coalescent(5, 1.0, &mut rng).unwrap();
        if log_likelihood(&a, &truth).unwrap() >= log_likelihood(&a, &other).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 95, "{wins}");
}

#[test]
fn reparameterization_in_the_zero_noise_limit() {
    // with sigma -> 0 the pathwise gradient of mu is the chain rule through t = e^mu
    let (a, prior, _) = toy(36, 10);
    let taxa = default_taxa(3);
    let mu = vec![-1.0, -0.3, -0.2];
    let params = VariationalParams::new(taxa.clone(), mu.clone(), vec![1e-9; 3]).unwrap();
    let draw = tree_from_noise(&params, taxa, vec![0.0; 3]).unwrap();
    let selected = draw.linkage.selected.clone();
    let s = evaluate_draw(&params, &a, &prior, draw, true).unwrap();
    let g = s.pathwise_grad.unwrap();
    let joint = |m: &[f64]| {
        let p = VariationalParams::new(default_taxa(3), m.to_vec(), vec![1e-9; 3]).unwrap();
        let t = tree_from_noise(&p, p.taxa().clone(), vec![0.0; 3]).unwrap();
        log_likelihood(&a, t.tree()).unwrap() + vipr::prior::log_prior(t.tree(), &prior).unwrap()
    };
    for i in 0..3 {
        let h = 1e-6;
        let (mut up, mut dn) = (mu.clone(), mu.clone());
        up[i] += h;
        dn[i] -= h;
        // -ln q at fixed noise carries ln t for every selected pair; the other
        // pairs sit in the flat survival tail
        let own = if selected.contains(&i) { 1.0 } else { 0.0 };
        let chain = (joint(&up) - joint(&dn)) / (2.0 * h) + own;
        assert!((g[i] - chain).abs() < 1e-4 * chain.abs().max(1.0), "{i}: {} vs {chain}", g[i]);
    }
}

#[test]
fn reparameterization_fits_the_prior_without_data() {
    let a = Alignment::empty(default_taxa(3).to_vec()).unwrap();
    let prior = PriorConfig::new(1.0).unwrap();
    let init = VariationalParams::uniform(default_taxa(3), -2.0, 0.3).unwrap();
    let eval = |p: &VariationalParams| {
        let f: Vec<f64> = draw_weighted_trees(p, &a, &prior, 20_000, &mut substream(7, &[]))
            .unwrap()
            .iter()
            .map(|s| s.log_weight)
            .collect();
        mean(&f)
    };
    let run = RunConfig {
        estimator: Estimator::Reparam,
        learning_rate: 0.03,
        max_iterations: 1500,
        seed: 8,
        ..RunConfig::default()
    };
    let before = eval(&init);
    let after = eval(&train(&run, &a, &prior, init).unwrap().params);
    // the evidence is exactly 0, so -ELBO is the gap
    assert!(after > before && after < 0.0, "before {before}, after {after}");
    assert!(-after < 0.5 * -before);
}

#[test]
fn training_reaches_the_exact_evidence() {
    let (a, prior, exact) = toy(37, 100);
    let run = RunConfig {
        max_iterations: 2000,
        seed: 9,
        ..RunConfig::default()
    };
    let r = train(&run, &a, &prior, initialize_from_distances(&a).unwrap()).unwrap();
    let b = evaluate_batch(&r.params, &a, &prior, 5000, &mut substream(10, &[]), false).unwrap();
    assert!((elbo_estimate(&b) - exact).abs() < 0.5, "{} vs {exact}", elbo_estimate(&b));
    let ma = moving_average(&r.elbo_history, 50);
    assert!(ma[1999] >= ma[49]);
    assert!(r.trace.windows(2).all(|w| w[0].iteration < w[1].iteration && w[0].elapsed_s <= w[1].elapsed_s));
}
