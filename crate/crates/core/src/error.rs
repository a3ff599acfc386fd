use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("polyhedron is infeasible (max slack {max_slack:.3e})")]
    Infeasible { max_slack: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("Carathéodory reduction failed: {0}")]
    Reduction(String),

    #[error("samples are not realized by the classifier: {count} mismatches, first at index {first}")]
    NotRealizable { count: usize, first: usize },

    #[error("canonicalization changed predictions on hyperplane {hyperplane}")]
    Perturbation { hyperplane: usize },

    #[error("corrupt compressed sample: {0}")]
    Corrupt(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("label out of range: {label} (classes: {classes})")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
