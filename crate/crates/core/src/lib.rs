//! Robust high-dimensional location tests built on the Hettmansperger–Randles
//! estimator, with a sparse sign-covariance graphical lasso, quadratic
//! discriminant analysis and a simulation harness.

pub mod cli;
pub mod error;
pub mod hr;
pub mod io;
pub mod linalg;
pub mod location;
pub mod qda;
pub mod rng;
pub mod sglasso;
pub mod sim;
pub mod spatial;

pub use error::{HrError, Result};

/// Observations in rows, variables in columns.
pub type DataMatrix = nalgebra::DMatrix<f64>;
