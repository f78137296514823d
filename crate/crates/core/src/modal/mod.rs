//! Ringdown modal estimation: preprocessing, Prony, Matrix Pencil, mode
//! shapes and damping reports.

mod estimate;
mod filter;
mod pencil;
mod prony;
mod report;
mod shapes;

pub use estimate::ModalEstimate;
pub use filter::{bandpass, check_band, decimate, detrend, preprocess};
pub use pencil::{matrix_pencil, PencilOptions};
pub use prony::prony;
pub use report::{damping_report, match_modes, DampingEntry, MatchedMode, DEFAULT_ZETA_MIN};
pub use shapes::{mode_shapes, wrap_deg, ChannelShape, ModeShape, ModeShapeReport};

/// Prony order for an expected number of modes.
pub fn default_prony_order(expected_modes: usize) -> usize {
    2 * expected_modes + 4
}

/// Frequency tolerance for matching modes across events, Hz.
pub const MATCH_TOLERANCE_HZ: f64 = 0.05;

/// Residual energy fraction above which mode shapes carry a warning.
pub const SHAPE_RESIDUAL_WARNING: f64 = 0.1;
