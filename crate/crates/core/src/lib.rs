//! Desk-scale AC-MTDC macrogrid toolkit: AC and DC network models, a fixed-step
//! simulator with disturbance events, ringdown modal estimation,
//! frequency-scanning identification and supplementary damping controller
//! design.

pub mod dynsim;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod modal;
pub mod mode;
pub mod mtdc;
pub mod poly;
pub mod pipeline;
pub mod scenario;
pub mod sdc;
pub mod sysid;
pub mod timeseries;

pub use error::{Error, Result};
pub use grid::{ac_powerflow, PowerNetwork, PowerflowOptions, PowerflowSolution};
pub use mode::{Mode, ModeKind};
pub use mtdc::{dc_powerflow, sequential_acdc_powerflow, MtdcSystem, VscConverter};
pub use sdc::{closed_loop_poles, design_sdc, eval_sdc, required_sigma, DesignTarget, SdcParams};
pub use sysid::{dominant_poles, estimate_frf, fit_tf, gen_multisine, FrequencyResponse, TransferFunctionModel};
