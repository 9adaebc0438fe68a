use std::fmt;

use glance_core::Error;

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or inputs.
    Config(String),
    /// Missing, unreadable or malformed files.
    Io(String),
    /// Non-finite values or degenerate vectors during computation.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::MissingFile(_)
            | Error::Format { .. }
            | Error::Truncated { .. } => CliError::Io(msg),
            Error::NonFinite(_) | Error::ZeroNorm { .. } => CliError::Numeric(msg),
            _ => CliError::Config(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let code = |e: Error| CliError::from(e).exit_code();
        assert_eq!(code(Error::InvalidConfig("x".into())), 1);
        assert_eq!(code(Error::NoQueries), 1);
        assert_eq!(code(Error::MissingFile(PathBuf::from("m"))), 2);
        assert_eq!(code(Error::NonFinite("loss".into())), 3);
        assert_eq!(
            code(Error::ZeroNorm {
                context: "q".into()
            }),
            3
        );
    }
}
