use thiserror::Error;

/// Errors surfaced by the simulator, verifiers, and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A phase graph is too dense for the requested edge weight: some node's
    /// incident weight mass exceeds 1 and its self-loop would go negative.
    #[error("node {node} carries incident edge weight {mass} > 1; self-loop would be negative")]
    NegativeSelfLoop { node: usize, mass: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A state became non-finite during a run; reports the offending step.
    #[error("non-finite state for agent {agent} at step {step}")]
    NonFiniteState { agent: usize, step: usize },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation error: {0}")]
    Validation(String),

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error("series must be strictly positive on the fit window")]
    NonPositiveSeries,

    #[error("problem exposes no per-step minimizer")]
    MinimizerUnavailable,

    /// No agent observes the given coordinate, so the tracking minimizer is
    /// not unique.
    #[error("coordinate {0} is observed by no agent; minimizer is not unique")]
    CoordinateUnobserved(usize),

    /// The clipped-noise lemma hypothesis ||grad|| <= lambda/2 does not hold
    /// at the probe point; the check is inapplicable, not failed.
    #[error("lemma hypothesis violated: ||grad|| = {grad_norm} exceeds lambda/2 = {half_lambda}")]
    HypothesisViolated { grad_norm: f64, half_lambda: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
