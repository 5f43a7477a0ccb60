use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} lies outside the admissible range {range}")]
    Domain {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("streamline level {level} is out of range (0 < |h0| < l = {l})")]
    LevelOutOfRange { level: f64, l: f64 },

    #[error("cell ({i}, {j}) lies outside the truncated strip")]
    EmptyCell { i: i64, j: i64 },

    #[error("chord lies above the graph of f by {excess:e} at T = {at}")]
    ChordAboveGraph { excess: f64, at: f64 },

    #[error("no candidate chord passes the g <= f check")]
    NoValidChord,

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("advection step {dt:e} violates the CFL limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite value detected at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("discrete maximum principle violated: value {value} outside [{lo}, {hi}] at t = {time}")]
    MaximumPrinciple {
        value: f64,
        lo: f64,
        hi: f64,
        time: f64,
    },

    #[error("mask for level h0 = {level} contains no active grid nodes")]
    MaskEmpty { level: f64 },

    #[error("insufficient samples: have {have}, need at least {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("insufficient rows: have {have}, need at least {need}")]
    InsufficientRows { have: usize, need: usize },

    #[error("denominator vanishes: {0}")]
    ZeroDenominator(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sub-solution unavailable: l = {l} is below the critical cell size {l_min}")]
    SubsolutionUnavailable { l: f64, l_min: f64 },

    #[error("initial data is not constant on streamlines (oscillation {osc:e})")]
    NotStreamlineConstant { osc: f64 },

    #[error("config parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for the numerical aborts (non-finite values, CFL, maximum principle).
    pub fn is_numerical_abort(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::CflViolation { .. } | Error::MaximumPrinciple { .. }
        )
    }
}
