use alloc::string::String;

/// Failure modes shared across the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("closed loop is not Schur stable (spectral radius {radius:.6})")]
    Stability { radius: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations; pair is not stabilizable")]
    Stabilizability { iterations: usize },

    #[error("state norm exceeded {cap:e} at step {step}")]
    Divergence { step: usize, cap: f64 },

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("all {samples} perturbed evaluations failed at radius {radius}")]
    BatchFailure { samples: usize, radius: f64 },

    #[error("step rejected after {halvings} halvings: {reason}")]
    StepRejected { halvings: usize, reason: String },

    #[error("no stabilizing structured gain found (best spectral radius {best_radius:.6})")]
    Initialization { best_radius: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
