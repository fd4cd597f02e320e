use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numeric overflow: {0}")]
    Overflow(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Overflow(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Precondition(_) => "precondition",
            CliError::Overflow(_) => "overflow",
            CliError::Io(_) => "io",
        }
    }

    /// One-line JSON written to stderr on failure.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
        }
        let report = Report { error: self.kind(), exit_code: self.exit_code(), message: self.to_string() };
        serde_json::to_string(&report).expect("error report serializes")
    }
}

impl From<wgheat_core::Error> for CliError {
    fn from(e: wgheat_core::Error) -> Self {
        use wgheat_core::Error as E;
        match e {
            E::Precondition(m) => CliError::Precondition(m),
            E::InvalidArgument(_) | E::GridMismatch(_) => CliError::Precondition(e.to_string()),
            E::Overflow(m) => CliError::Overflow(m),
            E::Io(io) => CliError::Io(io.to_string()),
            // Malformed input files are user errors of the same class as a bad config.
            E::Parse(m) => CliError::Config(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
