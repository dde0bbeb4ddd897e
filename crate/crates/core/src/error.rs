use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid feature series: {0}")]
    InvalidSeries(String),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("too few peaks: found {found}, need at least {required}")]
    TooFewPeaks { found: usize, required: usize },

    #[error("wrong signal label: expected {expected}, got {got}")]
    WrongLabel { expected: &'static str, got: &'static str },

    #[error("spline needs at least 4 knots, got {0}")]
    TooFewKnots(usize),

    #[error("resample grid [{grid_start}, {grid_end}] does not overlap knot span [{knot_start}, {knot_end}]")]
    DisjointGrid {
        grid_start: f64,
        grid_end: f64,
        knot_start: f64,
        knot_end: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid ARX orders: {0}")]
    InvalidOrders(String),

    #[error("interval too short: {rows} regression rows for {params} parameters")]
    IntervalTooShort { rows: usize, params: usize },

    #[error("rank deficient: numerical rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("perfect fit (zero mse): AIC is -inf")]
    PerfectFit,

    #[error("free-run simulation diverged after {steps} samples")]
    Diverged { steps: usize },

    #[error("no grid cell could be fitted")]
    NoValidModel,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("empty residual series")]
    EmptyResiduals,

    #[error("group {group} has {len} samples, need at least 2")]
    GroupTooSmall { group: String, len: usize },

    #[error("need at least {required} groups, got {got}")]
    TooFewGroups { got: usize, required: usize },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("unstable coupling: spectral radius {0:.6} >= 1")]
    UnstableCoupling(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
