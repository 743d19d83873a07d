use crate::crossbar::Mode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),

    #[error("HRS range [{hrs_min}, {hrs_max}] overlaps LRS range [{lrs_min}, {lrs_max}]")]
    OverlappingRanges {
        hrs_min: f64,
        hrs_max: f64,
        lrs_min: f64,
        lrs_max: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("crossbar is in {actual} mode, operation requires {expected}")]
    ModeMisuse { expected: Mode, actual: Mode },

    #[error("device mode misuse: {0}")]
    DeviceModeMisuse(String),

    #[error("gradual reset from level {current} to {target} needs a SET reinitialization first")]
    NeedsSet { current: u16, target: u16 },

    #[error("level {level} out of range for {levels}-level device")]
    LevelOutOfRange { level: u16, levels: u16 },

    #[error("digital code {code} exceeds {max}")]
    CodeOutOfRange { code: u32, max: u32 },

    #[error("resistive network is singular: {0}")]
    SingularNetwork(String),

    #[error("nodal solve residual {residual:e} above {limit:e}")]
    SolverResidual { residual: f64, limit: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("crossbar entropy pattern has not been initialized")]
    EntropyUninitialized,

    #[error("PUF sense references have not been enrolled")]
    NotEnrolled,

    #[error("crossbar holds no programmed weights")]
    NotProgrammed,

    #[error("population too small: {0}")]
    InsufficientPopulation(String),

    #[error("not enough response bits: have {available}, need {required}")]
    InsufficientEntropy { available: usize, required: usize },

    #[error("integrity tag mismatch: wrong device or corrupted bundle")]
    IntegrityFailure,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
