//! Python bindings: alignments, trees, the variational family, training,
//! importance sampling, simulation and exact small-N evidence.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vipr::estimators::{estimate_mll as core_mll, MllEstimate};
use vipr::rng::{substream, STREAM_EVAL, STREAM_SAMPLE};
use vipr::trainer::{initialize_from_distances, train as core_train, Estimator, RunConfig};
use vipr::variational::{log_density_gradient, sample_tree};
use vipr::{likelihood, prior, synthetic, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::TrainingAborted(_) | Error::Quadrature(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn prior_config(pop_size: f64) -> PyResult<vipr::PriorConfig> {
    vipr::PriorConfig::new(pop_size).map_err(py_err)
}

/// A nucleotide alignment with compressed site patterns.
#[pyclass(frozen, skip_from_py_object, module = "vipr")]
#[derive(Clone)]
pub struct Alignment {
    inner: vipr::Alignment,
}

#[pymethods]
impl Alignment {
    /// Build from taxon names and equal-length sequences (ACGT, gaps and N).
    #[new]
    fn new(taxa: Vec<String>, sequences: Vec<String>) -> PyResult<Self> {
        if taxa.len() != sequences.len() {
            return Err(PyValueError::new_err(format!(
                "{} names but {} sequences",
                taxa.len(),
                sequences.len()
            )));
        }
        let fasta: String = taxa
            .iter()
            .zip(&sequences)
            .map(|(t, s)| format!(">{t}\n{s}\n"))
            .collect();
        parse_fasta(&fasta)
    }

    #[getter]
    fn taxa(&self) -> Vec<String> {
        self.inner.taxa().to_vec()
    }

    #[getter]
    fn n_taxa(&self) -> usize {
        self.inner.n_taxa()
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    #[getter]
    fn n_patterns(&self) -> usize {
        self.inner.n_patterns()
    }

    fn to_fasta(&self) -> String {
        self.inner.to_fasta()
    }

    fn __repr__(&self) -> String {
        format!(
            "Alignment(n_taxa={}, n_sites={}, n_patterns={})",
            self.inner.n_taxa(),
            self.inner.n_sites(),
            self.inner.n_patterns()
        )
    }
}

/// A ranked, timed, binary tree with leaves at time zero.
#[pyclass(frozen, skip_from_py_object, module = "vipr")]
#[derive(Clone)]
pub struct Tree {
    inner: vipr::UltrametricTree,
}

#[pymethods]
impl Tree {
    #[staticmethod]
    fn from_newick(text: &str) -> PyResult<Self> {
        vipr::UltrametricTree::from_newick(text)
            .map(|inner| Tree { inner })
            .map_err(py_err)
    }

    fn to_newick(&self) -> String {
        self.inner.to_newick()
    }

    #[getter]
    fn taxa(&self) -> Vec<String> {
        self.inner.taxa().to_vec()
    }

    #[getter]
    fn n_taxa(&self) -> usize {
        self.inner.n_taxa()
    }

    /// Coalescence times in increasing order.
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn tree_length(&self) -> f64 {
        self.inner.tree_length()
    }

    /// Taxon sets on either side of the root.
    fn root_split(&self) -> (Vec<String>, Vec<String>) {
        let (a, b) = self.inner.root_split();
        let names = |c: vipr::Clade| c.iter().map(|i| self.inner.taxa()[i].clone()).collect();
        (names(a), names(b))
    }

    fn __eq__(&self, other: &Tree) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Tree({})", self.inner.to_newick())
    }
}

/// Independent log-normal coalescence times, one per taxon pair.
#[pyclass(frozen, skip_from_py_object, module = "vipr")]
#[derive(Clone)]
pub struct VariationalParams {
    inner: vipr::VariationalParams,
}

#[pymethods]
impl VariationalParams {
    /// `mu` and `sigma` are indexed by pair, ordered (0,1), (0,2), ..., (N-2,N-1).
    #[new]
    fn new(taxa: Vec<String>, mu: Vec<f64>, sigma: Vec<f64>) -> PyResult<Self> {
        vipr::VariationalParams::new(vipr::tree::taxon_set(&taxa), mu, sigma)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        vipr::VariationalParams::from_json(text)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn taxa(&self) -> Vec<String> {
        self.inner.taxa().to_vec()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().to_vec()
    }

    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.inner.sigma().to_vec()
    }

    /// Draw `n` trees.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Tree>> {
        let mut rng = substream(seed, &[STREAM_SAMPLE]);
        (0..n)
            .map(|_| {
                sample_tree(&self.inner, &mut rng)
                    .map(|s| Tree { inner: s.linkage.tree })
                    .map_err(py_err)
            })
            .collect()
    }

    fn log_density(&self, tree: &Tree) -> PyResult<f64> {
        vipr::variational::log_density(&self.inner, &tree.inner)
            .map(|d| d.log_q)
            .map_err(py_err)
    }

    /// `(log q, d log q / d mu ++ d log q / d log sigma)`
    fn log_density_gradient(&self, tree: &Tree) -> PyResult<(f64, Vec<f64>)> {
        log_density_gradient(&self.inner, &tree.inner)
            .map(|g| (g.log_q, g.params))
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("VariationalParams(n_taxa={})", self.inner.n_taxa())
    }
}

#[pyfunction]
fn parse_fasta(text: &str) -> PyResult<Alignment> {
    vipr::parse_fasta(text.as_bytes())
        .map(|inner| Alignment { inner })
        .map_err(py_err)
}

#[pyfunction]
fn log_likelihood(alignment: &Alignment, tree: &Tree) -> PyResult<f64> {
    likelihood::log_likelihood(&alignment.inner, &tree.inner).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (tree, pop_size = prior::DEFAULT_POP_SIZE))]
fn log_prior(tree: &Tree, pop_size: f64) -> PyResult<f64> {
    prior::log_prior(&tree.inner, &prior_config(pop_size)?).map_err(py_err)
}

#[pyfunction]
fn init_from_distances(alignment: &Alignment) -> PyResult<VariationalParams> {
    initialize_from_distances(&alignment.inner)
        .map(|inner| VariationalParams { inner })
        .map_err(py_err)
}

/// Fit by stochastic gradient ascent. Returns the final parameters and the
/// trace as a list of dicts.
#[pyfunction]
#[pyo3(signature = (
    alignment, init = None, estimator = "loor", batch_size = 10, lr = 0.01, iters = 2000,
    eval_every = 10, eval_samples = 50, seed = 0, pop_size = prior::DEFAULT_POP_SIZE
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    alignment: &Alignment,
    init: Option<&VariationalParams>,
    estimator: &str,
    batch_size: usize,
    lr: f64,
    iters: usize,
    eval_every: usize,
    eval_samples: usize,
    seed: u64,
    pop_size: f64,
) -> PyResult<(VariationalParams, Vec<Bound<'py, PyDict>>)> {
    let run = RunConfig {
        estimator: estimator.parse::<Estimator>().map_err(py_err)?,
        batch_size,
        learning_rate: lr,
        max_iterations: iters,
        time_budget: None,
        eval_every,
        eval_samples,
        seed,
        deterministic: true,
    };
    let prior = prior_config(pop_size)?;
    let a = &alignment.inner;
    let init = match init {
        Some(p) => p.inner.clone(),
        None => initialize_from_distances(a).map_err(py_err)?,
    };
    let res = py.detach(|| core_train(&run, a, &prior, init)).map_err(py_err)?;
    let trace = res
        .trace
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("iteration", r.iteration)?;
            d.set_item("elbo", r.elbo)?;
            d.set_item("mll", r.mll)?;
            d.set_item("mll_se", r.mll_se)?;
            d.set_item("grad_norm", r.grad_norm)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((VariationalParams { inner: res.params }, trace))
}

fn mll_dict<'py>(py: Python<'py>, m: &MllEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("estimate", m.estimate)?;
    d.set_item("std_error", m.std_error)?;
    d.set_item("effective_sample_size", m.effective_sample_size)?;
    d.set_item("n_samples", m.n_samples)?;
    Ok(d)
}

/// Importance-sampling estimate of the marginal log-likelihood.
#[pyfunction]
#[pyo3(signature = (params, alignment, n_samples = 1000, seed = 0, pop_size = prior::DEFAULT_POP_SIZE))]
fn estimate_mll<'py>(
    py: Python<'py>,
    params: &VariationalParams,
    alignment: &Alignment,
    n_samples: usize,
    seed: u64,
    pop_size: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let prior = prior_config(pop_size)?;
    let mut rng = substream(seed, &[STREAM_EVAL]);
    let m = py
        .detach(|| core_mll(&params.inner, &alignment.inner, &prior, n_samples, &mut rng))
        .map_err(py_err)?;
    mll_dict(py, &m)
}

/// A coalescent tree and a Jukes-Cantor alignment simulated on it.
#[pyfunction]
#[pyo3(signature = (n_taxa, n_sites, pop_size = prior::DEFAULT_POP_SIZE, seed = 0))]
fn simulate(n_taxa: usize, n_sites: usize, pop_size: f64, seed: u64) -> PyResult<(Tree, Alignment)> {
    let mut rng = substream(seed, &[]);
    let tree = synthetic::simulate_coalescent(n_taxa, prior_config(pop_size)?.n_e, &mut rng).map_err(py_err)?;
    let a = synthetic::simulate_sequences(&tree, n_sites, &mut rng).map_err(py_err)?;
    Ok((Tree { inner: tree }, Alignment { inner: a }))
}

/// Log evidence by quadrature over every ranked topology (2 to 4 taxa).
#[pyfunction]
#[pyo3(signature = (alignment, pop_size = prior::DEFAULT_POP_SIZE))]
fn exact_evidence(py: Python<'_>, alignment: &Alignment, pop_size: f64) -> PyResult<f64> {
    let prior = prior_config(pop_size)?;
    py.detach(|| synthetic::exact_evidence(&alignment.inner, &prior))
        .map(|e| e.log_evidence)
        .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "vipr")]
fn vipr_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Alignment>()?;
    m.add_class::<Tree>()?;
    m.add_class::<VariationalParams>()?;
    m.add_function(wrap_pyfunction!(parse_fasta, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(log_prior, m)?)?;
    m.add_function(wrap_pyfunction!(init_from_distances, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mll, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(exact_evidence, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_round_trip() {
        Python::attach(|py| {
            let m = PyModule::new(py, "vipr").unwrap();
            vipr_module(&m).unwrap();
            let (tree, a) = simulate(4, 30, 5.0, 1).unwrap();
            assert_eq!(a.n_taxa(), 4);
            let ll = log_likelihood(&a, &tree).unwrap();
            assert!(ll < 0.0);
            let p = init_from_distances(&a).unwrap();
            let back = VariationalParams::from_json(&p.to_json()).unwrap();
            assert_eq!(back.mu(), p.mu());
            let trees = p.sample(3, 0).unwrap();
            assert_eq!(trees.len(), 3);
            assert!(p.log_density(&trees[0]).unwrap().is_finite());
        });
    }

    #[test]
    fn errors_map_to_python_types() {
        Python::attach(|py| {
            let e = Alignment::new(vec!["a".into()], vec![]).err().unwrap();
            assert!(e.is_instance_of::<PyValueError>(py));
            let e = py_err(Error::TrainingAborted("x".into()));
            assert!(e.is_instance_of::<PyRuntimeError>(py));
        });
    }
}
