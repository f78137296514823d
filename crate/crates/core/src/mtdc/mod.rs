//! Multiterminal VSC-HVDC network: topology, DC powerflow, the sequential
//! AC-DC powerflow coupling and converter/DC-grid dynamics.
//!
//! DC quantities are per-unit on the shared system MVA base and the DC base
//! voltage; capacitances and inductances are expressed in seconds
//! (`C·Z_base`, `L/Z_base`).

mod converter;
mod powerflow;
mod sequential;

pub use converter::{ConverterModel, ConverterOutput, ConverterTerminal, DcGridModel, CONVERTER_STATES};
pub use powerflow::{dc_powerflow, DcOptions, DcSolution};
pub use sequential::{sequential_acdc_powerflow, AcDcSteadyState, SequentialOptions};
pub(crate) use sequential::slack_ac_power;

use crate::error::{Error, Result};
use crate::sdc::SdcParams;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};

/// 0.0575 Ω/mile expressed per km.
pub const DEFAULT_R_PER_KM: f64 = 0.0575 / 1.609344;
pub const DEFAULT_L_PER_KM: f64 = 2.9e-3;
pub const DEFAULT_C_PER_KM: f64 = 7.67e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcNode {
    pub name: String,
    /// Converter station capacitance, µF; added to half the capacitance of
    /// every incident line.
    #[serde(default)]
    pub station_capacitance_uf: f64,
    #[serde(default)]
    pub lat: Option<f64>,
    #[serde(default)]
    pub lon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcLine {
    pub name: String,
    pub from: String,
    pub to: String,
    pub length_km: f64,
    #[serde(default = "default_r")]
    pub r_per_km: f64,
    #[serde(default = "default_l")]
    pub l_per_km: f64,
    #[serde(default = "default_c")]
    pub c_per_km: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

fn default_r() -> f64 {
    DEFAULT_R_PER_KM
}
fn default_l() -> f64 {
    DEFAULT_L_PER_KM
}
fn default_c() -> f64 {
    DEFAULT_C_PER_KM
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConverterMode {
    /// Regulates the DC voltage (and AC voltage) at its terminal.
    Slack,
    /// Tracks active/reactive power references.
    Pq,
}

/// Supplementary damping controller attached to a PQ converter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdcAttachment {
    pub params: SdcParams,
    /// Channel name of the feedback bus frequency, e.g. `wi.freq.BC`.
    pub feedback: String,
    #[serde(default = "yes")]
    pub enabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VscConverter {
    pub name: String,
    pub dc_node: String,
    /// AC interconnection name.
    pub area: String,
    pub ac_bus: String,
    pub mode: ConverterMode,
    pub rating_mw: f64,
    /// Active power delivered to the AC grid, MW (negative = rectifier).
    #[serde(default)]
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
    /// Inner current loop time constant, s.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Integral gain of the power trim loop, 1/s (PQ mode).
    #[serde(default = "default_ki_p")]
    pub ki_p: f64,
    /// DC voltage PI gains (slack mode), pu power per pu voltage.
    #[serde(default = "default_kp_v")]
    pub kp_v: f64,
    #[serde(default = "default_ki_v")]
    pub ki_v: f64,
    /// Proportional AC voltage support gain (slack mode), pu current per pu voltage.
    #[serde(default = "default_kq_v")]
    pub kq_v: f64,
    #[serde(default = "default_pll")]
    pub pll_gain: f64,
    /// DC voltage reference (slack mode), pu.
    #[serde(default = "one")]
    pub v_dc_ref: f64,
    /// Converter loss, pu power per pu current squared (system base).
    #[serde(default)]
    pub loss_coeff: f64,
    /// Current command limit as a multiple of rated current.
    #[serde(default = "default_i_max")]
    pub current_limit: f64,
    #[serde(default)]
    pub sdc: Option<SdcAttachment>,
}

fn default_tau() -> f64 {
    0.1
}
fn default_ki_p() -> f64 {
    0.5
}
fn default_kp_v() -> f64 {
    5.0
}
fn default_ki_v() -> f64 {
    50.0
}
fn default_kq_v() -> f64 {
    2.0
}
fn default_pll() -> f64 {
    50.0
}
fn default_i_max() -> f64 {
    1.2
}
fn one() -> f64 {
    1.0
}

impl VscConverter {
    pub fn pq(name: &str, dc_node: &str, area: &str, ac_bus: &str, rating_mw: f64, p_mw: f64) -> Self {
        Self {
            name: name.into(),
            dc_node: dc_node.into(),
            area: area.into(),
            ac_bus: ac_bus.into(),
            mode: ConverterMode::Pq,
            rating_mw,
            p_mw,
            q_mvar: 0.0,
            tau: default_tau(),
            ki_p: default_ki_p(),
            kp_v: default_kp_v(),
            ki_v: default_ki_v(),
            kq_v: default_kq_v(),
            pll_gain: default_pll(),
            v_dc_ref: 1.0,
            loss_coeff: 0.0,
            current_limit: default_i_max(),
            sdc: None,
        }
    }

    pub fn slack(name: &str, dc_node: &str, area: &str, ac_bus: &str, rating_mw: f64) -> Self {
        Self { mode: ConverterMode::Slack, tau: 0.01, ..Self::pq(name, dc_node, area, ac_bus, rating_mw, 0.0) }
    }
}

fn default_base_kv() -> f64 {
    1280.0
}
fn default_mva() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtdcSystem {
    #[serde(default)]
    pub name: String,
    /// DC base (= nominal) voltage, kV.
    #[serde(default = "default_base_kv")]
    pub base_kv: f64,
    #[serde(default = "default_mva")]
    pub system_mva: f64,
    pub nodes: Vec<DcNode>,
    #[serde(default)]
    pub lines: Vec<DcLine>,
    #[serde(default)]
    pub converters: Vec<VscConverter>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl MtdcSystem {
    pub fn new(base_kv: f64, system_mva: f64, nodes: Vec<DcNode>) -> Self {
        let mut s = Self {
            name: "mtdc".into(),
            base_kv,
            system_mva,
            nodes,
            lines: Vec::new(),
            converters: Vec::new(),
            index: HashMap::new(),
        };
        s.rebuild_index();
        s
    }

    fn rebuild_index(&mut self) {
        self.index = self.nodes.iter().enumerate().map(|(i, n)| (n.name.clone(), i)).collect();
    }

    pub fn finalize(mut self) -> Result<Self> {
        self.rebuild_index();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Validation(format!("mtdc: {m}")));
        if self.index.len() != self.nodes.len() {
            return err("duplicate node names".into());
        }
        if !(self.base_kv > 0.0) || !(self.system_mva > 0.0) {
            return err("base voltage and MVA must be positive".into());
        }
        for l in &self.lines {
            self.node_index(&l.from)?;
            self.node_index(&l.to)?;
            if !(l.r_per_km > 0.0) || !(l.l_per_km > 0.0) || !(l.length_km > 0.0) || l.c_per_km < 0.0 {
                return err(format!("line {} needs r, l, length > 0", l.name));
            }
        }
        for c in self.capacitance_s() {
            if !(c > 0.0) {
                return err("every DC node needs positive capacitance".into());
            }
        }
        let slacks = self.converters.iter().filter(|c| c.mode == ConverterMode::Slack).count();
        if slacks != 1 {
            return err(format!("exactly one slack converter required, found {slacks}"));
        }
        for c in &self.converters {
            self.node_index(&c.dc_node)?;
            if !(c.tau > 0.0) || !(c.rating_mw > 0.0) {
                return err(format!("converter {} needs tau, rating > 0", c.name));
            }
            if c.sdc.is_some() && c.mode == ConverterMode::Slack {
                return err(format!("SDC cannot attach to slack converter {}", c.name));
            }
        }
        if !self.nodes.is_empty() && !self.is_connected() {
            return err("DC network is not connected".into());
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for l in self.lines.iter().filter(|l| l.in_service) {
            let (f, t) = (self.index[&l.from], self.index[&l.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut q = VecDeque::from([0]);
        while let Some(i) = q.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Validation(format!("mtdc: unknown DC node {name}")))
    }

    pub fn converter_index(&self, name: &str) -> Result<usize> {
        self.converters
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Validation(format!("mtdc: unknown converter {name}")))
    }

    pub fn slack_converter(&self) -> usize {
        self.converters.iter().position(|c| c.mode == ConverterMode::Slack).unwrap_or(0)
    }

    pub fn z_base(&self) -> f64 {
        self.base_kv * self.base_kv / self.system_mva
    }

    pub fn line_r_pu(&self, l: &DcLine) -> f64 {
        l.r_per_km * l.length_km / self.z_base()
    }

    pub fn line_l_s(&self, l: &DcLine) -> f64 {
        l.l_per_km * l.length_km / self.z_base()
    }

    /// Node capacitance in seconds: station capacitance plus half of each
    /// incident line's capacitance.
    pub fn capacitance_s(&self) -> Vec<f64> {
        let mut c: Vec<f64> = self.nodes.iter().map(|n| n.station_capacitance_uf * 1e-6).collect();
        for l in &self.lines {
            let half = 0.5 * l.c_per_km * l.length_km;
            if let (Some(&f), Some(&t)) = (self.index.get(&l.from), self.index.get(&l.to)) {
                c[f] += half;
                c[t] += half;
            }
        }
        let zb = self.z_base();
        c.into_iter().map(|x| x * zb).collect()
    }

    /// Nodal conductance matrix of in-service lines, pu.
    pub fn conductance(&self) -> nalgebra::DMatrix<f64> {
        let n = self.nodes.len();
        let mut g = nalgebra::DMatrix::zeros(n, n);
        for l in self.lines.iter().filter(|l| l.in_service) {
            let (f, t) = (self.index[&l.from], self.index[&l.to]);
            let y = 1.0 / self.line_r_pu(l);
            g[(f, f)] += y;
            g[(t, t)] += y;
            g[(f, t)] -= y;
            g[(t, f)] -= y;
        }
        g
    }

    pub fn pu(&self, mw: f64) -> f64 {
        mw / self.system_mva
    }

    /// Power scheduled into the DC grid by power-controlled rectifiers, MW.
    pub fn scheduled_transfer_mw(&self) -> f64 {
        self.converters
            .iter()
            .filter(|c| c.mode == ConverterMode::Pq && c.p_mw < 0.0)
            .fold(0.0, |acc, c| acc - c.p_mw)
    }
}

/// Great-circle distance on a spherical Earth (R = 6371 km).
pub fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0 * a.sqrt().asin()
}
