use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] geopref::Error),
    #[error("{failed} check(s) failed: {names}")]
    ChecksFailed { failed: usize, names: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 success, 2 config, 3 non-convergence, 4 coupling violation,
    /// 5 failed checks, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        use geopref::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::ChecksFailed { .. } => 5,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::NonConvergence { .. } => 3,
                E::CouplingViolation { .. } => 4,
                E::NotAProbabilityVector(_)
                | E::NegativeKernelEntry { .. }
                | E::DimensionMismatch(_)
                | E::ParameterOutOfRange(_)
                | E::InvalidSpace(_)
                | E::InvalidState(_) => 2,
                _ => 1,
            },
        }
    }
}
