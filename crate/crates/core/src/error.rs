use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported regime: alpha = {alpha} outside [0, 1)")]
    UnsupportedRegime { alpha: f64 },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("quadrature diverged for weight exponent {sigma}: {detail}")]
    QuadratureDivergence { sigma: f64, detail: String },

    #[error("hypothesis violated: {what} (value {value:e})")]
    HypothesisViolation { what: String, value: f64 },

    #[error("boundary condition violated: {0}")]
    BoundaryCondition(String),

    #[error("Carleman parameters not admissible: {}", .failed.join("; "))]
    Admissibility { failed: Vec<String> },

    #[error("weight singular at t = {t} (requires 0 < t < T = {horizon})")]
    WeightSingularity { t: f64, horizon: f64 },

    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
