use thiserror::Error;

/// Errors surfaced by population bookkeeping, parameter validation and the
/// simulators. Everything that can go wrong at runtime is reported through
/// this type; invariant breaches are never silently wrapped.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("population must contain at least one individual")]
    EmptyPopulation,

    #[error("explicit initial counts have length {got}, expected N = {expected}")]
    InitLengthMismatch { got: usize, expected: usize },

    #[error("rate `{name}` must be non-negative and finite, got {value}")]
    InvalidRate { name: &'static str, value: f64 },

    #[error("selection strength alpha = {alpha} requires |alpha| < N = {n}")]
    AlphaOutOfRange { alpha: f64, n: usize },

    #[error("params.n = {params_n} does not match population size {pop_n}")]
    SizeMismatch { params_n: usize, pop_n: usize },

    #[error("power-sum arithmetic overflowed (count {count})")]
    PowerSumOverflow { count: u32 },

    #[error("graph simulator handles the neutral model only (mu, nu, beta, alpha must be 0)")]
    GraphNotNeutral,

    #[error("early-Poissonization probe needs N >= 16, got {n}")]
    ProbeTooSmall { n: usize },

    #[error("truncated Poisson needs lambda > 0 and truncation >= 1, got lambda = {lambda}, truncation = {truncation}")]
    BadPoissonInit { lambda: f64, truncation: u32 },

    #[error("time step dt = {dt} too coarse for horizon {t_end}: need dt <= t_end/100")]
    DtTooCoarse { dt: f64, t_end: f64 },

    #[error("time horizon must be non-negative and finite, got {0}")]
    BadHorizon(f64),

    #[error("psi-product decomposition implemented for at most 3 factors, got {0}")]
    TooManyPsiFactors(usize),

    #[error("polynomial degree {0} out of range for the diffusion residual (need 0..=4)")]
    BadPolyDegree(usize),

    #[error("state is not a valid N-particle distribution: {0}")]
    BadExactState(String),
}
