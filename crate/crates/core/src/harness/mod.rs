//! Experiment harness: JSON run configs, dataset generation and CSV
//! ingestion, training orchestration, and artifact emission (weights files,
//! traces, predictions, SVG plots, diagnostics reports).

pub mod config;
pub mod csv;
pub mod runner;
pub mod svg;
pub mod weights;

pub use config::{generate_polynomial_dataset, PolynomialSpec, RunConfig};
pub use runner::{
    run_diagnose, run_experiment, run_gen_poly, run_predict, Overrides, EXIT_CONVERGED,
    EXIT_ERROR, EXIT_ITERATION_CAP,
};
pub use weights::WeightsFile;
