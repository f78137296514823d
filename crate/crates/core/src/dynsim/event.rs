use crate::error::{Error, Result};
use crate::sysid::ProbeSignal;
use serde::{Deserialize, Serialize};

fn default_brake_duration() -> f64 {
    0.5
}

/// Scheduled disturbance. Times in seconds from the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    /// Temporary resistive shunt sized to absorb `mw` at the voltage seen on insertion.
    BrakeInsertion {
        area: String,
        bus: String,
        mw: f64,
        t_on: f64,
        #[serde(default = "default_brake_duration")]
        duration: f64,
    },
    GenTrip { area: String, unit: String, t: f64 },
    BranchTrip { area: String, branch: String, t: f64 },
    /// Rectangular step on a converter power reference.
    Pulse { converter: String, delta_mw: f64, t_on: f64, duration: f64 },
    /// Multisine added to a converter power reference, MW.
    Probe { converter: String, signal: ProbeSignal, t_on: f64 },
}

impl Event {
    pub fn start(&self) -> f64 {
        match self {
            Event::BrakeInsertion { t_on, .. } | Event::Pulse { t_on, .. } | Event::Probe { t_on, .. } => *t_on,
            Event::GenTrip { t, .. } | Event::BranchTrip { t, .. } => *t,
        }
    }

    /// Instant from which the system evolves freely: removal for brakes and
    /// pulses, the event itself for trips and probes.
    pub fn release(&self) -> f64 {
        match self {
            Event::BrakeInsertion { t_on, duration, .. } | Event::Pulse { t_on, duration, .. } => t_on + duration,
            _ => self.start(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Event::BrakeInsertion { area, bus, mw, t_on, duration } => {
                format!("brake {mw} MW at {area}.{bus}, {t_on} s for {duration} s")
            }
            Event::GenTrip { area, unit, t } => format!("trip unit {area}.{unit} at {t} s"),
            Event::BranchTrip { area, branch, t } => format!("trip branch {area}.{branch} at {t} s"),
            Event::Pulse { converter, delta_mw, t_on, duration } => {
                format!("pulse {delta_mw} MW on {converter}, {t_on} s for {duration} s")
            }
            Event::Probe { converter, signal, t_on } => {
                format!("probe on {converter} from {t_on} s, {} tones", signal.freqs.len())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start() >= 0.0) {
            return Err(Error::Validation(format!("event starts before t = 0: {}", self.label())));
        }
        match self {
            Event::BrakeInsertion { duration, mw, .. } if !(*duration > 0.0) || !(*mw > 0.0) => {
                Err(Error::Validation(format!("brake needs positive size and duration: {}", self.label())))
            }
            Event::Pulse { duration, .. } if !(*duration > 0.0) => {
                Err(Error::Validation(format!("pulse needs a positive duration: {}", self.label())))
            }
            _ => Ok(()),
        }
    }
}

/// Stable sort by start time: simultaneous events keep declaration order.
pub fn schedule(events: &[Event]) -> Vec<Event> {
    let mut v = events.to_vec();
    v.sort_by(|a, b| a.start().total_cmp(&b.start()));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let src = r#"
            kind = "brake_insertion"
            area = "wi"
            bus = "Boise"
            mw = 1200.0
            t_on = 1.0
        "#;
        let e: Event = toml::from_str(src).unwrap();
        assert_eq!(e.release(), 1.5);
        assert!(toml::from_str::<Event>(&format!("{src}\nbogus = 1")).is_err());
    }

    #[test]
    fn ordering_is_stable() {
        let a = Event::GenTrip { area: "a".into(), unit: "g1".into(), t: 2.0 };
        let b = Event::GenTrip { area: "a".into(), unit: "g2".into(), t: 1.0 };
        let c = Event::GenTrip { area: "a".into(), unit: "g3".into(), t: 2.0 };
        let s = schedule(&[a.clone(), b.clone(), c.clone()]);
        assert_eq!(s, vec![b, a, c]);
    }

    #[test]
    fn invalid_events() {
        let e = Event::Pulse { converter: "c".into(), delta_mw: 1.0, t_on: -1.0, duration: 1.0 };
        assert!(e.validate().is_err());
        let e = Event::BrakeInsertion { area: "a".into(), bus: "b".into(), mw: 100.0, t_on: 1.0, duration: 0.0 };
        assert!(e.validate().is_err());
    }
}
