use thiserror::Error;

/// Errors produced by the numeric core and the harness.
#[derive(Error, Debug)]
pub enum Error {
    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("rank-deficient constraint matrix R")]
    RankDeficientR,

    #[error("infeasible constraint set: ||W2||_F = {w2_norm} >= 1/theta_W = {limit}")]
    InfeasibleConstraints { w2_norm: f64, limit: f64 },

    #[error("contraction precondition violated: spectral norm of W is {norm} >= 1")]
    ContractionPrecondition { norm: f64 },

    #[error("forward solve did not converge in {iters} iterations (last residual {residual})")]
    ForwardNonConvergence { iters: usize, residual: f64 },

    #[error("training diverged (non-finite state) at iteration {iter}")]
    Divergence { iter: usize },

    #[error("outside semicircle domain: theta_W^2 * tr(W'W) = {value} > 1")]
    SemicircleDomain { value: f64 },

    #[error("undefined convergence condition: {0}")]
    UndefinedCondition(String),

    #[error("invalid activation: {0}")]
    InvalidActivation(String),

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
