use thiserror::Error;

/// Errors raised by estimation, testing and I/O routines.
#[derive(Debug, Error)]
pub enum HrError {
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is singular or not positive definite (min eigenvalue {min_eigenvalue:e}, floor {floor:e})")]
    Singular { min_eigenvalue: f64, floor: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    /// An iterative solver ran out of iterations; `best` holds its last
    /// iterate when one is available.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        best: Option<Box<nalgebra::DMatrix<f64>>>,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("model construction failed: {0}")]
    Model(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HrError {
    /// Process exit status: 1 data error, 2 estimation failure, 3 config
    /// error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HrError::Parse { .. } | HrError::Io(_) | HrError::Json(_) | HrError::Csv(_) => 1,
            HrError::Dimension(_) | HrError::Domain(_) => 1,
            HrError::Config(_) | HrError::Model(_) => 3,
            HrError::Contract(_)
            | HrError::Singular { .. }
            | HrError::Degenerate(_)
            | HrError::NoConvergence { .. }
            | HrError::Calibration(_) => 2,
        }
    }

    /// Attach a context prefix to the message-carrying variants.
    pub fn context(self, ctx: &str) -> HrError {
        match self {
            HrError::Contract(m) => HrError::Contract(format!("{ctx}: {m}")),
            HrError::Degenerate(m) => HrError::Degenerate(format!("{ctx}: {m}")),
            HrError::Dimension(m) => HrError::Dimension(format!("{ctx}: {m}")),
            HrError::Calibration(m) => HrError::Calibration(format!("{ctx}: {m}")),
            HrError::Domain(m) => HrError::Domain(format!("{ctx}: {m}")),
            HrError::Model(m) => HrError::Model(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, HrError>;
