//! Failure classes and their exit codes.

use std::fmt;

pub type CliResult<T> = anyhow::Result<T>;

pub const EXIT_OK: i32 = 0;
/// Runtime failures that are neither configuration nor divergence, such as
/// an unwritable output path or a failed self-check.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// A problem with the command line, a config file or an input file.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Set when a sweep finished but some cells diverged.
#[derive(Debug)]
pub struct SweepDiverged(pub usize);

impl fmt::Display for SweepDiverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sweep cell(s) diverged; see the summary", self.0)
    }
}

impl std::error::Error for SweepDiverged {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<SweepDiverged>() {
            return EXIT_DIVERGENCE;
        }
        if let Some(e) = cause.downcast_ref::<proxskip::Error>() {
            return match e {
                proxskip::Error::Divergence { .. } => EXIT_DIVERGENCE,
                proxskip::Error::Shape(_)
                | proxskip::Error::Parameter(_)
                | proxskip::Error::Format(_)
                | proxskip::Error::Unsupported(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}
