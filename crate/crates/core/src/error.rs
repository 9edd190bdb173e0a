use thiserror::Error;

/// Crate-wide error type. The variant distinguishes bad inputs (rejected
/// configurations, infeasible or assumption-violating models) from failures
/// at run time, which is what the CLI maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(String),
    #[error("fluid: {0}")]
    Fluid(String),
    #[error("cost: {0}")]
    Cost(String),
    #[error("simulation: {0}")]
    Sim(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI should use: 2 for rejected inputs, 1 for
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Model(_) | Error::Fluid(_) | Error::Cost(_) => 2,
            Error::Sim(_) | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
