use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible moments E[l]={l1}, E[l^2]={l2} on support [{lmin}, {lmax}]")]
    InfeasibleMoments {
        l1: f64,
        l2: f64,
        lmin: u32,
        lmax: u32,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("averaged system is not stable (max real eigenvalue part {max_real:e})")]
    Unstable { max_real: f64 },

    #[error("trajectory diverged at pulse {pulse}")]
    Divergence { pulse: usize },

    #[error("target state is unreachable: best p = {best_p}, residual {residual:e}")]
    Unreachable { best_p: f64, residual: f64 },

    #[error("record has zero duration")]
    ZeroDuration,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Singular(_)
                | Error::Unstable { .. }
                | Error::Divergence { .. }
                | Error::Unreachable { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
