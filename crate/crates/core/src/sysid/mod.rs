//! Frequency-scanning identification: multisine probes, empirical frequency
//! responses and continuous-time rational fits.

mod fit;
mod frf;
mod multisine;
mod tf;

pub use fit::{fit_tf, FitOptions};
pub use frf::{estimate_frf, FrequencyResponse, FrfEstimate};
pub use multisine::{gen_multisine, ProbeSignal};
pub use tf::{dominant_poles, simulate_tf, FitQuality, TransferFunctionModel};
