use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("invalid domain [{start}, {end}]")]
    InvalidDomain { start: f64, end: f64 },

    #[error("invalid curve set: {0}")]
    InvalidCurves(String),

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("smoothing failed for curve `{curve}` component {component}: {reason}")]
    Smoothing {
        curve: String,
        component: usize,
        reason: String,
    },

    #[error("invalid simulation spec: {0}")]
    SimSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cluster {cluster} degenerated: weight {weight:.4} below {threshold}")]
    DegenerateCluster {
        cluster: usize,
        weight: f64,
        threshold: f64,
    },

    #[error("intrinsic dimension {dim} out of range for basis size {basis_size}")]
    Dimension { dim: usize, basis_size: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("model selection failed: {0}")]
    Selection(String),

    #[error("ingestion error{}: {reason}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Ingest { row: Option<usize>, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Name of the module an error originates from, used for structured CLI errors.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidBasis(_)
            | Error::InvalidDomain { .. }
            | Error::InvalidCurves(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Smoothing { .. } => "funbasis",
            Error::SimSpec(_) => "simulate",
            Error::Config(_) => "config",
            Error::Numeric(_) | Error::DegenerateCluster { .. } => "ecm",
            Error::Dimension { .. } | Error::Selection(_) => "selection",
            Error::Input(_) | Error::Metric(_) => "metrics",
            Error::Ingest { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => "cli",
        }
    }
}
