use thiserror::Error;

use crate::calibration::CalibrationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("correlation is undefined for constant input")]
    UndefinedCorrelation,

    #[error("engine has no interval template loaded")]
    NotInitialized,

    #[error(
        "calibration failed: best margin {} at offset {} (true min {}, background max {})",
        .0.margin, .0.chosen_offset, .0.true_score_min, .0.background_score_max
    )]
    CalibrationFailed(Box<CalibrationReport>),

    #[error(
        "calibration needs at least one background window, none fit between the located operations"
    )]
    NoBackground,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
