//! Front-end library for the fragsim CLI: scenario/strategy parsing helpers,
//! the multi-threaded sweep executor, CSV emission, SVG plotting and the
//! header-overhead table. The binary in `main.rs` is a thin dispatcher over
//! these modules; the acceptance suite drives them directly.

pub mod csvout;
pub mod plot;
pub mod strategies;
pub mod sweep;
pub mod table;

/// CLI failure classes, mapped onto exit codes: usage/configuration errors
/// exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}
