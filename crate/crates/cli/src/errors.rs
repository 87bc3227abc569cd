//! CLI error taxonomy mapped to exit codes, with machine-readable JSON on
//! stderr.

use serde::Serialize;
use wkm_core::Error as CoreError;

/// Exit code 1: bad or inconsistent configuration.
/// Exit code 2: a required stage input is missing.
/// Exit code 3: provider transport failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingInput(String),
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::MissingInput(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::MissingInput(_) => "missing_stage_input",
            CliError::Transport(_) => "provider_transport_failure",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::MissingInput(m) | CliError::Transport(m) => m,
        }
    }

    pub fn emit(&self) -> i32 {
        #[derive(Serialize)]
        struct Wire<'a> {
            error: &'a str,
            message: &'a str,
            exit_code: i32,
        }
        let wire = Wire {
            error: self.kind(),
            message: self.message(),
            exit_code: self.exit_code(),
        };
        eprintln!("{}", serde_json::to_string(&wire).expect("serializable"));
        self.exit_code()
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Transport(m) => CliError::Transport(m),
            CoreError::MissingInput(m) => CliError::MissingInput(m),
            CoreError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
