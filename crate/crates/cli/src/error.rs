use bec_core::io::IoError;
use bec_core::region::RegionError;
use bec_core::sim::{SimError, TraceError};
use bec_core::FilterError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// bad flags, config or missing files
    #[error("{0}")]
    Config(String),
    /// malformed input data
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 1,
            CliError::Config(_) => 2,
            CliError::Format(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        if e.is_format() {
            CliError::Format(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::ResourceLimit { .. } | FilterError::EmptyWindow => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<RegionError> for CliError {
    fn from(e: RegionError) -> Self {
        match e {
            RegionError::Filter(f) => f.into(),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Config(m),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Format { .. } => CliError::Format(e.to_string()),
            TraceError::Io(e) => CliError::Config(e.to_string()),
        }
    }
}
