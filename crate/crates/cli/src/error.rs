use std::fmt;
use std::process::ExitCode;

/// What went wrong, grouped by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or input files (exit 2).
    Config(String),
    /// Session, framing or transport failure (exit 3).
    Protocol(String),
    /// NaN/Inf during computation (exit 4).
    Numeric(String),
    /// Could not write results (exit 1).
    Output(String),
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn output(msg: impl fmt::Display) -> Self {
        CliError::Output(msg.to_string())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Output(_) => 1,
            CliError::Config(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Numeric(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Protocol(m) => write!(f, "protocol error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<semcom::Error> for CliError {
    fn from(e: semcom::Error) -> Self {
        use semcom::Error as E;
        match e {
            E::NonFinite(_) => CliError::Numeric(e.to_string()),
            E::Protocol(_) | E::Format(_) | E::Io(_) => CliError::Protocol(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<semcom::split_protocol::SessionError> for CliError {
    fn from(e: semcom::split_protocol::SessionError) -> Self {
        let msg = e.to_string();
        match CliError::from(e.source) {
            CliError::Numeric(_) => CliError::Numeric(msg),
            CliError::Config(_) => CliError::Config(msg),
            _ => CliError::Protocol(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
