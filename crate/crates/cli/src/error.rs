use std::fmt;

/// A command failure together with the process exit code it maps to.
///
/// `1` means the command ran but the result failed (no convergence, a
/// verification check did not pass); `2` means bad usage or unreadable input.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    pub fn failure(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Core errors coming from bad input map to code 2; everything the
/// library raises after inputs were accepted (divergence) maps to 1.
impl From<pacnr::Error> for CliError {
    fn from(e: pacnr::Error) -> Self {
        match e {
            pacnr::Error::Diverged { .. } => CliError::failure(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::usage(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
