//! Variational Bayesian phylogenetics over ultrametric trees.
//!
//! Trees are drawn by sampling a matrix of independent per-pair coalescent
//! times and running single-linkage clustering on it. The density of the
//! induced distribution over ranked, timed trees has a closed form (a product
//! over the tree's bipartitions), which makes score-function and pathwise
//! gradient estimators of the ELBO cheap: `O(N^2)` per tree for the
//! variational side and `O(N M)` for the Jukes-Cantor likelihood.
//!
//! Module map:
//!
//! * [`alignment`] FASTA ingestion and site-pattern compression
//! * [`subst_model`] Jukes-Cantor transition probabilities
//! * [`tree`] pair matrices, ultrametric trees, single linkage, Newick
//! * [`likelihood`] pruning, brute-force oracle, time gradients
//! * [`prior`] Kingman coalescent prior
//! * [`variational`] per-pair log-normal family, sampling, density, gradients
//! * [`estimators`] ELBO / K-sample ELBO, LOOR, reparameterization, VIMCO, MLL
//! * [`trainer`] Adam, initialization, training loop, sweeps
//! * [`synthetic`] simulators and exact small-N evidence
//! * [`validation`] oracle suites shared by the `check` command and the
//!   acceptance tests

pub mod alignment;
pub mod error;
pub mod estimators;
pub mod likelihood;
pub mod numeric;
pub mod prior;
pub mod quadrature;
pub mod rng;
pub mod subst_model;
pub mod synthetic;
pub mod trainer;
pub mod tree;
pub mod validation;
pub mod variational;

pub use alignment::{parse_fasta, Alignment};
pub use error::{Error, Result};
pub use prior::PriorConfig;
pub use tree::{Clade, PairMatrix, UltrametricTree};
pub use variational::VariationalParams;
