use thiserror::Error;

/// Errors raised across the library. Indices are 0-based.
#[derive(Debug, Error)]
pub enum Error {
    #[error("a path needs at least two waypoints")]
    TooFewWaypoints,
    #[error("segment {0} has zero length")]
    DegenerateSegment(usize),
    #[error("index {index} out of range (valid {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("kappa must lie in (0, 1), got {0}")]
    KappaOutOfRange(f64),
    #[error("robot is {gap:.3e} m from the path head (allowed {allowed:.3e})")]
    HeadMismatch { gap: f64, allowed: f64 },
    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("return speed must be positive, got {0}")]
    NonPositiveReturnSpeed(f64),
    #[error("radii must satisfy 0 < d < delta (delta = {delta}, d = {d})")]
    InvalidRadii { delta: f64, d: f64 },
    #[error("angles must satisfy psi >= eps_omega > 0 (psi = {psi}, eps_omega = {eps_omega})")]
    InvalidAngles { psi: f64, eps_omega: f64 },
    #[error("QP has no feasible point")]
    Infeasible,
    #[error("oracle did not converge (feasibility residual {residual:.3e})")]
    NotConverged { residual: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("bounds do not contain the requested points")]
    BoundsInvalid,
    #[error("trace is empty")]
    EmptyTrace,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
