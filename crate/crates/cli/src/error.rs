use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<phasekit::Error> for CliError {
    fn from(e: phasekit::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

/// Errors while reading user-supplied input files are data errors.
pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Errors while writing outputs.
pub fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("cannot write output: {e}"))
}
