use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{solver} did not converge after {iterations} iterations (worst mismatch {mismatch:.3e} at {location})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        mismatch: f64,
        location: String,
    },

    #[error("sequential AC-DC powerflow did not converge; outer mismatch trace: {trace:?}")]
    OuterLoopNonConvergence { trace: Vec<f64> },

    #[error("singular Jacobian in {0}")]
    SingularJacobian(&'static str),

    #[error("DC voltage collapse at node {node}")]
    VoltageCollapse { node: String },

    #[error("infeasible operating point for unit {unit}: {reason}")]
    InfeasibleOperatingPoint { unit: String, reason: String },

    #[error("network solve failed in area {area} at bus {bus}")]
    NetworkSolve { area: String, bus: String },

    #[error("numerical divergence at t = {t:.4} s ({detail})")]
    Divergence { t: f64, detail: String },

    #[error("invalid window: {0}")]
    Window(String),

    #[error("invalid band [{lo}, {hi}] Hz: {reason}")]
    InvalidBand { lo: f64, hi: f64, reason: String },

    #[error("ill-conditioned linear prediction ({0}); try a different model order or window")]
    IllConditioned(String),

    #[error("no modes found (all singular values below threshold)")]
    NoModes,

    #[error("model order too high for data (near-singular normal equations, rcond {rcond:.2e}); errors from overfitting can be avoided by lowering the order")]
    OrderTooHigh { rcond: f64 },

    #[error("infeasible SDC design: {0}")]
    InfeasibleDesign(String),

    #[error("targeted mode at {freq_hz:.3} Hz is not observable in channel {channel}; select a feedback signal with higher observability")]
    NotObservable { channel: String, freq_hz: f64 },

    #[error("unknown channel {0}")]
    UnknownChannel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
