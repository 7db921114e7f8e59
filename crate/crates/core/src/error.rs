use thiserror::Error;

/// Errors produced by model validation, enumeration, evaluation and parsing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("transition row ({state}, {action}) sums to {sum}, expected 1")]
    RowNotStochastic {
        state: String,
        action: String,
        sum: f64,
    },

    #[error("negative probability {value} at {location}")]
    NegativeProbability { location: String, value: f64 },

    #[error("initial distribution sums to {sum}, expected 1")]
    InitNotStochastic { sum: f64 },

    #[error("state {state} has no signal")]
    MissingSignal { state: String },

    #[error("payoff ({state}, {action}) is not finite")]
    NonFinitePayoff { state: String, action: String },

    #[error("invalid model shape: {0}")]
    Shape(String),

    #[error("invalid mixed action: {0}")]
    InvalidMixedAction(String),

    #[error("stage duration must lie in (0, 1], got {0}")]
    InvalidStageDuration(f64),

    #[error("rescaling needs h1 < h2, got h1 = {h1}, h2 = {h2}")]
    BadOrder { h1: f64, h2: f64 },

    #[error("enumeration at depth {depth} exceeds the budget of {budget} entries")]
    BudgetExceeded { depth: usize, budget: usize },

    #[error("linear system is singular or inaccurate: {0}")]
    SingularSystem(String),

    #[error("trajectory has {found} completed epochs, {needed} required")]
    InsufficientEpochs { needed: usize, found: usize },

    #[error("conditioning mass {mass:e} is below ten times the truncation bound {bound:e}")]
    TruncationDominates { mass: f64, bound: f64 },

    #[error("no simulated trajectory matched the filtered history")]
    NoAcceptedSamples,

    #[error("observation has zero probability under the current belief")]
    ImpossibleObservation,

    #[error("value iteration did not converge in {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("subsequence gap {gap} at position {position} exceeds the bound {bound}")]
    GapBoundViolated {
        position: usize,
        gap: usize,
        bound: usize,
    },

    #[error("model is not fully observed")]
    NotFullyObserved,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: unknown name '{name}'")]
    UnknownName { line: usize, name: String },

    #[error("line {line}: duplicate entry")]
    DuplicateEntry { line: usize },

    #[error("csv output failed: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
