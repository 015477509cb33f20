use std::fmt;

use bridge_core::{IntegratorError, StabilityError};

/// A failed command, carrying its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1: unreadable or invalid configuration, bad flag values, I/O.
    Config(String),
    /// Exit 2: the integrator could not finish.
    Integration(String),
    /// Exit 3: both bracket ends classified alike.
    Bracket(String),
    /// Exit 4: unknown sweep parameter.
    BadParam(String),
}

impl Failure {
    pub fn config(e: impl fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Failure::Config(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Integration(_) => 2,
            Failure::Bracket(_) => 3,
            Failure::BadParam(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Integration(m) => write!(f, "integration failed: {m}"),
            Failure::Bracket(m) => write!(f, "{m}"),
            Failure::BadParam(m) => write!(f, "bad parameter: {m}"),
        }
    }
}

impl From<IntegratorError> for Failure {
    fn from(e: IntegratorError) -> Self {
        match e {
            IntegratorError::Settings(_) => Failure::Config(e.to_string()),
            other => Failure::Integration(other.to_string()),
        }
    }
}

impl From<StabilityError> for Failure {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Integrator(inner) => inner.into(),
            StabilityError::BracketInvalid { .. } | StabilityError::NoConvergence { .. } => {
                Failure::Bracket(e.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}
