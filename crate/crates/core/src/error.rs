use thiserror::Error;

/// Errors raised by the numeric core and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Every jitter in the schedule failed to produce a Cholesky factor.
    #[error("matrix is not positive semidefinite (min eigenvalue estimate {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Wraps an error with the episode index it occurred in.
    pub fn at_episode(self, episode: usize) -> Self {
        match self {
            e @ Error::Episode { .. } => e,
            other => Error::Episode {
                episode,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
