use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("probability mass {mass:.9} differs from 1 by more than {tol:e}")]
    MassMismatch { mass: f64, tol: f64 },

    #[error("tabulated density leaves tail mass {tail_mass:.3e} outside the grid")]
    TailMass { tail_mass: f64 },

    #[error("CDF table is not monotone at knot {index}")]
    NonMonotoneCdf { index: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("distortion {distortion} outside (0, {variance}) where the perception term is finite")]
    PerceptionDomain { variance: f64, distortion: f64 },

    #[error(
        "multiplier search did not converge after {iterations} iterations \
         (distortion residual {distortion_residual:e}, perception residual {perception_residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        distortion_residual: f64,
        perception_residual: f64,
    },

    #[error("channel is not degraded: |G1| = {g1} < |G2| = {g2}; swap the users so the stronger one is user 1")]
    NotDegraded { g1: f64, g2: f64 },

    #[error("SINR mismatch for user {user}: empirical {empirical:.6}, analytic {analytic:.6}")]
    SinrMismatch {
        user: usize,
        empirical: f64,
        analytic: f64,
    },

    #[error("cannot scale noise to a finite SNR when the signal power is zero")]
    ZeroSignalPower,

    #[error("block index {index} out of range for a schema with {blocks} blocks")]
    BlockOutOfRange { index: usize, blocks: usize },

    #[error("latent codes come from different schemas")]
    SchemaMismatch,

    #[error("pair ({left}, {right}) violates supervision for attribute {attribute}: {reason}")]
    Supervision {
        left: usize,
        right: usize,
        attribute: usize,
        reason: &'static str,
    },

    #[error("training diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("table parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Frame(#[from] crate::net::FrameError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
