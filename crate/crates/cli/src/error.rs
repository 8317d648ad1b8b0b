use rpp_core::RppError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] RppError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 1 for bad input, 2 for failures while computing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                RppError::InvalidParameter { .. }
                | RppError::DimensionMismatch { .. }
                | RppError::InvalidHorizon { .. }
                | RppError::MismatchedCorpora(_)
                | RppError::BinningMismatch
                | RppError::UnknownEntity(_)
                | RppError::Io { .. }
                | RppError::HeaderMismatch { .. }
                | RppError::ReferentialIntegrity(_)
                | RppError::Config { .. } => 1,
                RppError::Runaway { .. }
                | RppError::ToleranceNotReached { .. }
                | RppError::NoTrails
                | RppError::InsufficientData(_)
                | RppError::ConvergenceFailure(_)
                | RppError::NoGaps
                | RppError::EmptyLowRegion { .. }
                | RppError::RankDeficient { .. }
                | RppError::OptimizerFailure(_)
                | RppError::EmptyGrid
                | RppError::NoQualifyingEvents => 2,
            },
        }
    }
}
