use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("FASTA parse error at line {line}: {message}")]
    Fasta { line: usize, message: String },

    #[error("invalid alignment: {0}")]
    Alignment(String),

    #[error("invalid branch length {0}: must be finite and non-negative")]
    BranchLength(f64),

    #[error("invalid pair matrix: {0}")]
    PairMatrix(String),

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("Newick parse error at byte {pos}: {message}")]
    Newick { pos: usize, message: String },

    #[error("unknown taxon `{0}`")]
    UnknownTaxon(String),

    #[error("taxa mismatch: {0}")]
    TaxaMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
