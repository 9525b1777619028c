use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("({p}, {q}) is not a scheduling transition (mu = {mu})")]
    NotScheduling { p: usize, q: usize, mu: usize },

    #[error("stationary solve failed: {0}")]
    Stationary(String),

    #[error("scheduling mass {mass} in state {state} exceeds one")]
    SchedulingMassExceedsOne { state: usize, mass: f64 },

    #[error("degenerate VU distribution: {0}")]
    Normalization(String),

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {err:e})")]
    Quadrature { a: f64, b: f64, err: f64 },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("no feasible candidate found: {0}")]
    Infeasible(String),

    #[error("unknown scheme '{0}' (expected best, ooa or sse)")]
    UnknownScheme(String),
}
