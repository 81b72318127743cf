//! Trace of a sparse matrix inverse estimated by fitting the diagonal of a
//! cheap approximate inverse to a handful of exactly computed diagonal
//! entries.
//!
//! The pipeline: approximate `M ≈ diag(A⁻¹)` ([`approx`]), pick fitting
//! indices from the sorted `M` ([`sampling`]), solve for the exact entries
//! there ([`solver`]), fit `D ≈ f(M)` ([`fitting`]) and sum `f(M)`. The
//! [`dynamics`] loop grows the fitting set step by step, tracks the
//! variances of the Monte Carlo alternatives ([`estimators`]) and monitors
//! the relative trace error.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod approx;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod fitting;
pub mod matrix;
pub mod report;
pub mod sampling;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SparseMatrix = matrix::CsrMatrix<f64>;
pub type DenseVector = Vec<f64>;
pub type DiagApprox = approx::DiagApprox<f64>;
pub type IluFactors = approx::IluFactors<f64>;
pub type LowRankFactors = approx::LowRankFactors<f64>;
pub type FitModel = fitting::FitModel<f64>;
pub type FitSampleSet = sampling::FitSampleSet;
pub type DynamicTrajectory = dynamics::DynamicTrajectory<f64>;
