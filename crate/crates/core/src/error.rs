use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state index {index} out of range (n_states = {n_states})")]
    StateOutOfRange { index: usize, n_states: usize },

    #[error("action index {index} out of range (n_actions = {n_actions})")]
    ActionOutOfRange { index: usize, n_actions: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed interval [{lo}, {hi})")]
    MalformedInterval { lo: f64, hi: f64 },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("instance too large for enumeration: {0} policies")]
    TooLarge(u128),

    #[error("prior assigns zero mass to bin {bin}")]
    ZeroMassBin { bin: usize },

    #[error("posterior collapsed: every candidate assigns zero likelihood to the observation")]
    PosteriorCollapse,

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cycle {cycle}: {source}")]
    AtCycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("initial estimate fails the Dobrushin gate: coefficient {coefficient} > {beta}")]
    GateRejectsInitial { coefficient: f64, beta: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_cycle(self, cycle: usize) -> Self {
        Error::AtCycle {
            cycle,
            source: Box::new(self),
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
