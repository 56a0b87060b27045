use thiserror::Error;

/// Process exit codes shared by every subcommand.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const CAP: i32 = 3;
    pub const DEGENERATE: i32 = 4;
    pub const BUDGET: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("step budget exhausted: {0}")]
    Budget(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lib(#[from] urnlab::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use urnlab::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Degenerate(_) => exit::DEGENERATE,
            CliError::Budget(_) => exit::BUDGET,
            CliError::Io(_) => exit::IO,
            CliError::Lib(e) => match e {
                E::CapExceeded { .. } => exit::CAP,
                E::Reducible(_)
                | E::Singular(_)
                | E::NoConvergence
                | E::NotStationary(_)
                | E::NotReversible(_)
                | E::Unreachable { .. } => exit::DEGENERATE,
                E::BudgetExhausted { .. } => exit::BUDGET,
                E::Io(_) => exit::IO,
                _ => exit::CONFIG,
            },
        }
    }
}
