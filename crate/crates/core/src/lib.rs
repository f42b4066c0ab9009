//! Online inference for averaged stochastic gradient descent.
//!
//! The crate streams SGD iterates through a block-based batching scheme and
//! maintains a de-biased estimate of the limiting covariance of the
//! Polyak–Ruppert average in `O(p²)` memory and time per step, without any
//! Hessian information. Baseline estimators (online batch-means and the
//! plug-in sandwich), the regression models used to benchmark them, and an
//! experiment harness for confidence-interval coverage and convergence-rate
//! studies are provided alongside.
//!
//! ```text
//! sample ξᵢ → ∇f(xᵢ₋₁, ξᵢ) → xᵢ, x̄ᵢ → batch window (Sᵢ, ℓᵢ) → P, W, Q, q → Σ̂ᵢ
//! ```

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod batch;
pub mod debias;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod sgd;

pub use baseline::{BatchMeansAccumulator, PluginAccumulator};
pub use batch::{BatchScaling, BatchSnapshot, BlockBatcher, PolynomialBlocks};
pub use debias::{CovEstimate, DebiasAccumulator, LengthConvention};
pub use error::{Error, Result};
pub use models::{GroundTruth, ModelKind, ModelSpec, Observation};
pub use sgd::{SgdState, StepSchedule};
