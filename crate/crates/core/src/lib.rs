//! Training of recurrent networks by damped fixed-point iteration on the
//! closed-form first-order conditions of a regularized least-squares fit,
//! plus convergence diagnostics and a small experiment harness.
//!
//! The numeric core is generic over the scalar type (f32 or f64) via the
//! [`Scalar`] trait; concrete aliases for the common f64 case are exported
//! at the crate root.

pub mod activation;
pub mod analysis;
pub mod constraints;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod model;
pub mod scalar;
pub mod solver;

pub use activation::{ActivationKind, ActivationSpec};
pub use constraints::{ConstraintSet, NSpec, OmegaReport};
pub use error::{Error, Result};
pub use matrix::{Cond, Matrix};
pub use model::{Dataset, FocReport, IterState, ModelConfig, ParamDeltaMetric, WeightSet};
pub use scalar::Scalar;
pub use solver::{train, TrainResult};

/// f64 concrete aliases for the common case.
pub type MatrixF64 = matrix::Matrix<f64>;
pub type DatasetF64 = model::Dataset<f64>;
pub type ModelConfigF64 = model::ModelConfig<f64>;
pub type TrainResultF64 = solver::TrainResult<f64>;

/// f32 concrete aliases.
pub type MatrixF32 = matrix::Matrix<f32>;
pub type DatasetF32 = model::Dataset<f32>;
pub type ModelConfigF32 = model::ModelConfig<f32>;
pub type TrainResultF32 = solver::TrainResult<f32>;
