use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative optimizer ran out of iterations before certifying its gap.
    #[error("no convergence after {iterations} iterations (lower bound {lower:.12}, upper bound {upper:.12})")]
    Convergence { iterations: usize, lower: f64, upper: f64 },

    /// Code parameters cannot be realized (pigeonhole, caps, empty alphabets).
    #[error("infeasible code parameters: {0}")]
    Infeasible(String),

    /// Exact enumeration would be too large; estimate by Monte Carlo instead.
    #[error("enumeration guard: {0}; use the Monte Carlo estimator instead")]
    EnumerationGuard(String),

    #[error("computation cancelled")]
    Cancelled,
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }
}
