use std::fmt;

/// CLI failures, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Resource(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Resource(m) => write!(f, "resource error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<starkprobe::Error> for CliError {
    fn from(e: starkprobe::Error) -> Self {
        use starkprobe::Error as E;
        match e {
            // Out-of-domain parameters come straight from the config.
            E::Domain(m) => CliError::Config(m),
            E::Numeric { message, dim } => CliError::Numeric(format!("{message} (dim {dim})")),
            E::Estimation(m) => CliError::Numeric(m),
            E::Resource {
                what,
                required,
                available,
            } => CliError::Resource(format!("{what} needs {required} bytes, the budget is {available}")),
            E::Io(_) | E::Csv(_) | E::Json(_) => CliError::Resource(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Resource(e.to_string())
    }
}
