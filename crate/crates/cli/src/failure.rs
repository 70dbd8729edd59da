use std::fmt::Display;

use dsample::Error;

/// Command failure, by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    Estimation(String),
    CheckFailed(String),
    /// Writing outputs.
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Estimation(_) => 4,
            Failure::CheckFailed(_) => 5,
            Failure::Io(_) => 1,
        }
    }

    /// Data problems keep their own code; anything else is an estimation error.
    pub fn from_estimation(e: Error) -> Failure {
        match e {
            Error::DataIntegrity { .. } | Error::Csv(_) => Failure::Data(e.to_string()),
            _ => Failure::Estimation(e.to_string()),
        }
    }

    pub fn io(e: impl Display) -> Failure {
        Failure::Io(e.to_string())
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Estimation(m) => write!(f, "estimation error: {m}"),
            Failure::CheckFailed(m) => write!(f, "oracle check failed: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}
