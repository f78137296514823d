//! Fixed-step simulation of the combined AC areas and MTDC grid with a
//! disturbance scheduler and a decimating channel recorder.

mod event;
mod model;
mod sim;

pub use event::{schedule, Event};
pub use model::{Macrogrid, Signal, Snapshot};
pub use sim::{ringdown_window, run, simulate, EventRecord, SimOptions, SimResult, RINGDOWN_SECONDS};

#[cfg(test)]
mod tests;
