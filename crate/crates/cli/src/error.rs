use std::fmt;
use std::process::ExitCode;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags or configuration.
    Usage = 1,
    /// Input data missing, malformed or inconsistent.
    Data = 2,
    /// The completion backend could not be reached or kept failing.
    Backend = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError { kind: Kind::Usage, error: e.into() }
}

pub fn data(e: impl Into<anyhow::Error>) -> CliError {
    CliError { kind: Kind::Data, error: e.into() }
}

pub fn backend(e: impl Into<anyhow::Error>) -> CliError {
    CliError { kind: Kind::Backend, error: e.into() }
}

/// Attaches context to a result and classifies its error.
pub trait Classify<T> {
    fn or_kind(self, kind: Kind, ctx: impl FnOnce() -> String) -> CliResult<T>;

    fn data_ctx(self, ctx: impl FnOnce() -> String) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_kind(Kind::Data, ctx)
    }
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_kind(self, kind: Kind, ctx: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError { kind, error: e.into().context(ctx()) })
    }
}
