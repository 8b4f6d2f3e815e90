use thiserror::Error;

/// Failure classes surfaced by the library. The CLI maps them to exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error(
        "gamma {gamma} too large on edge {edge:?}: I - 2*gamma*H_eff has eigenvalue {min_eig:.3e} \
         (max_gamma = {max_gamma:.6e}, admissible limit = {limit:.6e})"
    )]
    Gamma {
        edge: (usize, usize),
        gamma: f64,
        min_eig: f64,
        max_gamma: f64,
        limit: f64,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;
