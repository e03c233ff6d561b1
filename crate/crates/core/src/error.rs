use crate::spaces::Vector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The requested computation is not available in closed form for these inputs.
    #[error("unsupported: {0}")]
    Capability(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("point outside operator domain: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "solver did not converge after {iterations} iterations \
         (residual {residual:e}, a-priori estimate {expected_iterations:.0} iterations)"
    )]
    NonConvergence {
        last: Vector,
        residual: f64,
        iterations: usize,
        expected_iterations: f64,
    },

    #[error("regularization path failed at index {index}: {source}")]
    PathStep {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("adaptive step underflow at t = {t} (step {step:e})")]
    StepUnderflow { t: f64, step: f64 },

    #[error("non-finite state at t = {t}")]
    Divergence { t: f64 },

    #[error("{stage} failed in scenario '{scenario}': {source}")]
    Stage {
        scenario: String,
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a solver or integrator, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::StepUnderflow { .. } | Error::Divergence { .. } => {
                true
            }
            Error::PathStep { source, .. } | Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
