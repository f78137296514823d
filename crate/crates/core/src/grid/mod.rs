//! One AC interconnection: buses, branches, synchronous machines,
//! grid-forming inverters and constant-impedance loads.
//!
//! Network data is entered in engineering units (MW, MVA, per-unit on the
//! unit's own rating for machine parameters) and converted to the shared
//! system base on demand.

mod dynamics;
mod powerflow;

pub use dynamics::{wrap_angle, AreaModel, AreaSolution, AreaTopology, FREQ_FILTER_TC};
pub use powerflow::{ac_powerflow, BranchFlow, PowerflowOptions, PowerflowSolution};

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub name: String,
    pub kind: BusKind,
    /// Voltage setpoint (slack/PV) or initial guess (PQ), per-unit.
    #[serde(default = "one")]
    pub v: f64,
    /// Slack angle / initial guess, radians.
    #[serde(default)]
    pub angle: f64,
    /// Fixed constant-power injection, MW (negative = consumption).
    #[serde(default)]
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub name: String,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, pu.
    #[serde(default)]
    pub b: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Governor {
    /// Speed droop on machine base.
    pub droop: f64,
    pub time_const: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exciter {
    pub gain: f64,
    pub time_const: f64,
}

/// Classical machine (EMF behind transient reactance) with optional
/// first-order governor and exciter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncGen {
    pub name: String,
    pub bus: String,
    pub mva: f64,
    #[serde(default)]
    pub dispatch_mw: f64,
    /// Inertia constant on machine base, s.
    pub h: f64,
    /// Damping, pu torque per pu speed on machine base.
    #[serde(default)]
    pub d: f64,
    pub xd_prime: f64,
    #[serde(default)]
    pub governor: Option<Governor>,
    #[serde(default)]
    pub exciter: Option<Exciter>,
}

/// Droop-controlled grid-forming inverter: a voltage source behind a coupling
/// reactance with P-f / Q-V droop on low-pass filtered power measurements and
/// a hard current clamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfmInverter {
    pub name: String,
    pub bus: String,
    pub mva: f64,
    #[serde(default)]
    pub dispatch_mw: f64,
    /// Frequency droop, pu frequency per pu power on own base.
    pub p_droop: f64,
    /// Voltage droop, pu voltage per pu reactive power on own base.
    pub q_droop: f64,
    pub filter_time_const: f64,
    /// Current limit, pu on own base.
    pub current_limit: f64,
    #[serde(default = "default_coupling_x")]
    pub coupling_x: f64,
}

/// Constant-impedance load specified at 1.0 pu voltage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub name: String,
    pub bus: String,
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_coupling_x() -> f64 {
    0.15
}
fn default_mva() -> f64 {
    1000.0
}
fn default_hz() -> f64 {
    60.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerNetwork {
    pub name: String,
    #[serde(default = "default_mva")]
    pub system_mva: f64,
    #[serde(default = "default_hz")]
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub machines: Vec<SyncGen>,
    #[serde(default)]
    pub gfms: Vec<GfmInverter>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PowerNetwork {
    pub fn new(name: impl Into<String>, system_mva: f64, buses: Vec<Bus>) -> Self {
        let mut net = Self {
            name: name.into(),
            system_mva,
            frequency_hz: 60.0,
            buses,
            branches: Vec::new(),
            machines: Vec::new(),
            gfms: Vec::new(),
            loads: Vec::new(),
            index: HashMap::new(),
        };
        net.rebuild_index();
        net
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.name.clone(), i))
            .collect();
    }

    /// Rebuilds lookup tables and checks every structural invariant.
    pub fn finalize(mut self) -> Result<Self> {
        self.rebuild_index();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Validation(format!("network {}: {m}", self.name)));
        if self.buses.is_empty() {
            return err("no buses".into());
        }
        if self.index.len() != self.buses.len() {
            return err("duplicate bus names".into());
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return err(format!("expected exactly one slack bus, found {slacks}"));
        }
        if self.system_mva <= 0.0 || self.frequency_hz <= 0.0 {
            return err("system base and frequency must be positive".into());
        }
        for b in &self.buses {
            if !(b.v > 0.0) {
                return err(format!("bus {} has non-positive voltage magnitude", b.name));
            }
        }
        for br in &self.branches {
            self.bus_index(&br.from)?;
            self.bus_index(&br.to)?;
            if br.x == 0.0 {
                return err(format!("branch {} has zero reactance", br.name));
            }
            if br.from == br.to {
                return err(format!("branch {} is a self loop", br.name));
            }
        }
        for m in &self.machines {
            self.bus_index(&m.bus)?;
            if !(m.h > 0.0) || !(m.xd_prime > 0.0) || !(m.mva > 0.0) {
                return err(format!("machine {} needs h, xd_prime, mva > 0", m.name));
            }
            if let Some(g) = m.governor {
                if !(g.droop > 0.0) || !(g.time_const > 0.0) {
                    return err(format!("machine {} governor needs droop, time_const > 0", m.name));
                }
            }
            if let Some(e) = m.exciter {
                if !(e.time_const > 0.0) {
                    return err(format!("machine {} exciter needs time_const > 0", m.name));
                }
            }
        }
        for g in &self.gfms {
            self.bus_index(&g.bus)?;
            if !(g.p_droop > 0.0) || !(g.filter_time_const > 0.0) || !(g.current_limit > 0.0) || !(g.coupling_x > 0.0) {
                return err(format!(
                    "gfm {} needs p_droop, filter_time_const, current_limit, coupling_x > 0",
                    g.name
                ));
            }
        }
        for l in &self.loads {
            self.bus_index(&l.bus)?;
        }
        let slack = self.slack_bus();
        let has_source = self.machines.iter().any(|m| m.bus == self.buses[slack].name)
            || self.gfms.iter().any(|g| g.bus == self.buses[slack].name);
        if !has_source && !(self.machines.is_empty() && self.gfms.is_empty()) {
            return err("slack bus carries no machine or grid-forming unit".into());
        }
        if !self.is_connected(&[]) {
            return err("network is not connected over in-service branches".into());
        }
        Ok(())
    }

    pub fn bus_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Validation(format!("network {}: unknown bus {name}", self.name)))
    }

    pub fn branch_index(&self, name: &str) -> Result<usize> {
        self.branches
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| Error::Validation(format!("network {}: unknown branch {name}", self.name)))
    }

    pub fn machine_index(&self, name: &str) -> Result<usize> {
        self.machines
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::Validation(format!("network {}: unknown machine {name}", self.name)))
    }

    pub fn slack_bus(&self) -> usize {
        self.buses.iter().position(|b| b.kind == BusKind::Slack).unwrap_or(0)
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Connectivity over in-service branches, with `tripped` branch indices
    /// additionally removed.
    pub fn is_connected(&self, tripped: &[usize]) -> bool {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for (k, br) in self.branches.iter().enumerate() {
            if !br.in_service || tripped.contains(&k) {
                continue;
            }
            if let (Some(&f), Some(&t)) = (self.index.get(&br.from), self.index.get(&br.to)) {
                adj[f].push(t);
                adj[t].push(f);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn pu(&self, mw: f64) -> f64 {
        mw / self.system_mva
    }

    /// Series admittance and half charging of a branch.
    fn branch_admittance(br: &Branch) -> (Complex64, Complex64) {
        let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        (y, Complex64::new(0.0, br.b / 2.0))
    }

    /// Bus admittance matrix of in-service branches only (no loads).
    pub fn branch_ybus(&self, tripped: &[usize]) -> DMatrix<Complex64> {
        let n = self.n_bus();
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (k, br) in self.branches.iter().enumerate() {
            if !br.in_service || tripped.contains(&k) {
                continue;
            }
            let f = self.index[&br.from];
            let t = self.index[&br.to];
            let (ys, ysh) = Self::branch_admittance(br);
            y[(f, f)] += ys + ysh;
            y[(t, t)] += ys + ysh;
            y[(f, t)] -= ys;
            y[(t, f)] -= ys;
        }
        y
    }

    /// Constant-impedance load admittance per bus (draws `y·V`).
    pub fn load_admittance(&self) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.n_bus()];
        for l in &self.loads {
            let i = self.index[&l.bus];
            y[i] += Complex64::new(self.pu(l.p_mw), -self.pu(l.q_mvar));
        }
        y
    }

    /// Branch network plus loads: the admittance used by the powerflow.
    pub fn ybus(&self) -> DMatrix<Complex64> {
        let mut y = self.branch_ybus(&[]);
        for (i, yl) in self.load_admittance().into_iter().enumerate() {
            y[(i, i)] += yl;
        }
        y
    }

    /// Machine parameters converted to the system base.
    pub(crate) fn machine_sys(&self, m: &SyncGen) -> MachineSys {
        let s = m.mva / self.system_mva;
        MachineSys {
            bus: self.index[&m.bus],
            h: m.h * s,
            d: m.d * s,
            xd: m.xd_prime / s,
            droop: m.governor.map(|g| g.droop / s),
            gov_tc: m.governor.map(|g| g.time_const),
            exc_gain: m.exciter.map(|e| e.gain),
            exc_tc: m.exciter.map(|e| e.time_const),
        }
    }

    pub(crate) fn gfm_sys(&self, g: &GfmInverter) -> GfmSys {
        let s = g.mva / self.system_mva;
        GfmSys {
            bus: self.index[&g.bus],
            p_droop: g.p_droop / s,
            q_droop: g.q_droop / s,
            tf: g.filter_time_const,
            i_lim: g.current_limit * s,
            x: g.coupling_x / s,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MachineSys {
    pub bus: usize,
    pub h: f64,
    pub d: f64,
    pub xd: f64,
    pub droop: Option<f64>,
    pub gov_tc: Option<f64>,
    pub exc_gain: Option<f64>,
    pub exc_tc: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GfmSys {
    pub bus: usize,
    pub p_droop: f64,
    pub q_droop: f64,
    pub tf: f64,
    pub i_lim: f64,
    pub x: f64,
}
