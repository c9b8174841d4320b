use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate factor label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),
    #[error("factor `{0}` must have positive dimension")]
    ZeroDimension(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("matrix is not Hermitian (relative deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Kraus operators are not trace preserving (completeness error {0:.3e})")]
    NotTracePreserving(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outcome {outcome} has zero likelihood under every hypothesis")]
    ZeroLikelihood { outcome: usize },
    #[error("zero posterior mass")]
    ZeroMass,
    #[error("outcome probabilities sum to {0}, expected 1")]
    Probabilities(f64),
    #[error("{0} strategies are only supported for {1}")]
    Unsupported(&'static str, &'static str),
    #[error("semidefinite solver failed: {0}")]
    Solver(String),
    #[error("realization failed: {0}")]
    Realization(String),
    #[error("seesaw iteration {iteration}: {source}")]
    Seesaw {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
