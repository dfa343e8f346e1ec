use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgzError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("numerical instability at t = {t}: norm {norm:.3e} exceeds {limit:.3e}")]
    Unstable { t: f64, norm: f64, limit: f64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("derivative budget exceeded: word needs {needed} time levels, jet has {available}")]
    Budget { needed: usize, available: usize },
    #[error("horizon too short: {0}")]
    Horizon(String),
    #[error("picard iteration did not converge in {iterations} iterations (ratios {ratios:?})")]
    NoConvergence { iterations: usize, ratios: Vec<f64> },
    #[error("divergent scattering tail: source slope {slope:.3} >= -1")]
    DivergentTail { slope: f64 },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown diagnostic term `{0}`")]
    UnknownTerm(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KgzError>;
