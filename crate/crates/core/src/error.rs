use thiserror::Error;

/// Errors raised by model construction and the solvers.
///
/// Validation failures (bad inputs) and numerical failures (a solver that
/// did not converge) are kept apart so callers can map them onto different
/// exit paths.
#[derive(Debug, Error)]
pub enum Error {
    #[error("probabilities must sum to 1 (got {sum})")]
    ProbabilitiesNotNormalized { sum: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("market admits arbitrage: no strictly positive martingale measure exists")]
    Arbitrage,

    #[error("claim has {got} entries, market has {expected} states")]
    ClaimLength { expected: usize, got: usize },

    #[error("lambda first-order condition could not be bracketed in [1e-12, 1e12]")]
    LambdaBracketFailure,

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("utility saturation: optimal utility reaches u(+inf) before matching")]
    UtilitySaturation,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("monotonicity check failed: g'({h}) = {slope} <= 0 on the admissible interval")]
    NotMonotone { h: f64, slope: f64 },

    #[error("divergent integral: {0}")]
    Divergent(String),
}

impl Error {
    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ProbabilitiesNotNormalized { .. }
                | Error::Invalid(_)
                | Error::Arbitrage
                | Error::ClaimLength { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
