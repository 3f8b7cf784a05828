use thiserror::Error;

/// Errors raised across the library.
///
/// The variants are coarse on purpose: the command-line front end maps
/// [`Error::Config`] and [`Error::Domain`] to the "bad input" exit code and
/// everything else to the "runtime failure" exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("plan invariant violated: {0}")]
    PlanInvariant(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable category used in single-line CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Toml(_) => "config",
            Error::Domain(_) => "domain",
            Error::Schedule(_) => "schedule",
            Error::PlanInvariant(_) => "plan-invariant",
            Error::Solver(_) => "solver",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// True when the failure is caused by the caller's input rather than by a
    /// computation going wrong.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Toml(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
