use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A quaternion argument was not unit-norm.
    NonUnitQuaternion { norm: f64 },
    /// Integration step outside the supported range.
    InvalidTimestep { dt: f64, max: f64 },
    /// Commanded action violates actuator bounds.
    ActionOutOfBounds { c: f64, w_norm: f64 },
    /// A state or signal contained NaN/inf.
    NonFinite { context: &'static str },
    /// Polynomial boundary-value problem has no solution.
    InfeasibleSegment { reason: String },
    /// No segment duration within the search window satisfies the limits.
    NoFeasibleTime { t_max: f64 },
    /// Circular primitive violates the critical-velocity margin.
    CircleMargin { v_l: f64, required: f64 },
    /// Thrust vector too close to free fall for a well-defined attitude.
    DegenerateOrientation { thrust_norm: f64 },
    /// IMU stream had a gap larger than allowed.
    StaleImu { gap: f64, max: f64 },
    /// Events delivered out of stamp order.
    OutOfOrderEvent { stamp: f64, last: f64 },
    /// Sample sets with mismatched dimensionality.
    DimensionMismatch { a: usize, b: usize },
    /// Logs that should share a time base do not.
    AlignmentError { expected: usize, got: usize },
    /// Optimizer or training produced a non-finite value.
    Diverged { context: &'static str, value: f64 },
    /// Malformed checkpoint or dataset file.
    Format { path: String, reason: String },
    /// Bad configuration value.
    Config { reason: String },
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonUnitQuaternion { norm } => {
                write!(f, "quaternion norm {norm} too far from 1")
            }
            Error::InvalidTimestep { dt, max } => {
                write!(f, "timestep {dt} outside (0, {max}]")
            }
            Error::ActionOutOfBounds { c, w_norm } => {
                write!(f, "action out of bounds: c={c}, |w|={w_norm}")
            }
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::InfeasibleSegment { reason } => write!(f, "infeasible segment: {reason}"),
            Error::NoFeasibleTime { t_max } => {
                write!(f, "no feasible segment duration up to {t_max} s")
            }
            Error::CircleMargin { v_l, required } => write!(
                f,
                "tangential speed {v_l} m/s below critical margin {required} m/s"
            ),
            Error::DegenerateOrientation { thrust_norm } => {
                write!(f, "thrust vector norm {thrust_norm} too small for attitude")
            }
            Error::StaleImu { gap, max } => {
                write!(f, "IMU gap {gap} s exceeds {max} s")
            }
            Error::OutOfOrderEvent { stamp, last } => {
                write!(f, "event stamp {stamp} precedes last {last}")
            }
            Error::DimensionMismatch { a, b } => {
                write!(f, "dimension mismatch: {a} vs {b}")
            }
            Error::AlignmentError { expected, got } => {
                write!(f, "log alignment: expected {expected} samples, got {got}")
            }
            Error::Diverged { context, value } => {
                write!(f, "{context} diverged (value {value})")
            }
            Error::Format { path, reason } => write!(f, "bad file {path}: {reason}"),
            Error::Config { reason } => write!(f, "bad config: {reason}"),
            Error::Io(e) => write!(f, "io: {e}"),
            Error::Json(e) => write!(f, "json: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
