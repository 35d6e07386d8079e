use hfbflow_fock::OracleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("trajectory file: {0}")]
    Trajectory(String),

    #[error("run aborted at t = {t}: {monitor} = {value:.3e}")]
    Aborted { t: f64, monitor: String, value: f64 },

    #[error("cutoff: {0}")]
    Cutoff(String),

    #[error(transparent)]
    Core(#[from] hfbflow::Error),

    #[error(transparent)]
    Oracle(OracleError),
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Core(c) => CliError::Core(c),
            other => CliError::Oracle(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// 1 for bad input, 2 for a numerical abort, 3 for an inadequate Fock cutoff.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Trajectory(_) => 1,
            CliError::Core(hfbflow::Error::InvalidGrid(_) | hfbflow::Error::InvalidParameter(_)) => 1,
            CliError::Core(_) | CliError::Aborted { .. } => 2,
            CliError::Cutoff(_) => 3,
            CliError::Oracle(OracleError::CutoffOverflow { .. } | OracleError::TailMass { .. }) => 3,
            CliError::Oracle(OracleError::InvalidParameter(_)) => 1,
            CliError::Oracle(_) => 2,
        }
    }
}
