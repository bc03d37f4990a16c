use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("player index {index} out of range for a {players}-player game")]
    IndexOutOfRange { index: usize, players: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{what} did not converge in {iterations} iterations (last estimate {last_estimate})")]
    NoConvergence { what: &'static str, iterations: usize, last_estimate: f64 },

    #[error("analytic second derivatives are not available for player {0}")]
    MissingSecondDerivatives(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown game `{0}`")]
    UnknownGame(String),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration { iteration, source: Box::new(self) }
    }
}
