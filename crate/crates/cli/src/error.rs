use std::fmt;

use endreg::Error;

/// Process exit status per failure class.
///
/// | code | meaning |
/// |------|---------|
/// | 0 | success |
/// | 1 | any other failure (for example a checkpoint that does not fit the data) |
/// | 2 | configuration: unknown key, bad value, missing input, invalid dataset spec |
/// | 3 | I/O |
/// | 4 | malformed ENDD, ENDM or IDX file |
/// | 5 | numerical failure during training (degenerate features, non-finite parameters) |
/// | 6 | gradient check failed |
/// | 7 | split construction or evaluation |
#[derive(Debug)]
pub enum CliError {
    Config { key: String, message: String },
    Core(Error),
    GradcheckFailed(String),
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::GradcheckFailed(_) => 6,
            CliError::Core(e) => match e.root() {
                Error::Spec(_) | Error::Label(_) | Error::Precondition(_) => 2,
                Error::Io(_) => 3,
                Error::Format(_) => 4,
                Error::DegenerateFeature { .. } | Error::NonFinite(_) => 5,
                Error::Split(_) | Error::Eval(_) => 7,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { key, message } => write!(f, "config error: {key}: {message}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::GradcheckFailed(summary) => write!(f, "gradient check failed: {summary}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}
