//! Scenario configuration: a TOML file with recursive `include` support.
//!
//! Included files are merged first, in order, and the including file is
//! merged on top. Tables merge key by key; any other value, arrays included,
//! replaces what was there. Areas are a table keyed by area name so that
//! separate files can each contribute one.

use crate::dynsim::{Event, SimOptions};
use crate::error::{Error, Result};
use crate::grid::PowerNetwork;
use crate::mtdc::{MtdcSystem, SequentialOptions};
use crate::sdc::{DesignOptions, PhaseMatching};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub areas: BTreeMap<String, Value>,
    pub mtdc: MtdcSystem,
    #[serde(default)]
    pub powerflow: PowerflowConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub events: Vec<Event>,
    /// Recorded channels; entries ending in `*` match by prefix, empty means all.
    #[serde(default)]
    pub channels: Vec<String>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub freqscan: Option<FreqScanConfig>,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerflowConfig {
    pub tolerance: f64,
    pub max_outer: usize,
}

impl Default for PowerflowConfig {
    fn default() -> Self {
        let d = SequentialOptions::default();
        Self { tolerance: d.tolerance, max_outer: d.max_outer }
    }
}

impl PowerflowConfig {
    pub fn options(&self) -> SequentialOptions {
        SequentialOptions { tolerance: self.tolerance, max_outer: self.max_outer, ..Default::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub duration: f64,
    pub dt: f64,
    pub output_rate_hz: f64,
    pub state_bound: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let o = SimOptions::default();
        Self { duration: 30.0, dt: o.dt, output_rate_hz: o.output_rate_hz, state_bound: o.state_bound }
    }
}

impl SimulationConfig {
    pub fn options(&self) -> SimOptions {
        SimOptions { dt: self.dt, output_rate_hz: self.output_rate_hz, state_bound: self.state_bound }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Prony,
    MatrixPencil,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Band-pass applied before estimation, Hz.
    pub band: [f64; 2],
    pub method: EstimatorChoice,
    /// Expected oscillatory modes; sets the default Prony order.
    pub expected_modes: usize,
    pub prony_order: Option<usize>,
    pub pencil_cutoff: f64,
    pub pencil_order: Option<usize>,
    /// Ringdown window length, s.
    pub window: f64,
    /// Rate the ringdown is decimated to before estimation, Hz.
    pub sample_rate_hz: f64,
    pub zeta_min: f64,
    /// Channels for mode estimation and mode shapes; empty means all.
    pub channels: Vec<String>,
    /// Modes below this relative energy are not reported.
    pub min_energy: f64,
    /// Band-pass the ringdown before estimation.
    pub prefilter: bool,
    /// Frequency tolerance for merging modes across channels, Hz.
    pub merge_tolerance_hz: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            band: [0.1, 2.0],
            method: EstimatorChoice::MatrixPencil,
            expected_modes: 4,
            prony_order: None,
            pencil_cutoff: 1e-8,
            pencil_order: None,
            window: crate::dynsim::RINGDOWN_SECONDS,
            sample_rate_hz: 10.0,
            zeta_min: crate::modal::DEFAULT_ZETA_MIN,
            channels: Vec::new(),
            min_energy: 1e-3,
            prefilter: false,
            merge_tolerance_hz: crate::modal::MATCH_TOLERANCE_HZ,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqScanConfig {
    pub converter: String,
    /// Output channel, e.g. a bus frequency.
    pub output: String,
    #[serde(default = "default_scan_band")]
    pub band: [f64; 2],
    #[serde(default = "default_scan_step")]
    pub step: f64,
    /// Per-tone amplitude range as a fraction of converter rating.
    #[serde(default = "default_scan_amp")]
    pub amplitude: [f64; 2],
    /// Peak clamp as a fraction of converter rating.
    #[serde(default = "default_scan_clamp")]
    pub peak_clamp: f64,
    /// Probe periods averaged; one extra period is discarded as transient.
    #[serde(default = "default_periods")]
    pub periods: usize,
    /// Transfer-function order `[zeros, poles]`.
    pub order: [usize; 2],
    /// Band used for fitting; defaults to the probe band.
    #[serde(default)]
    pub fit_band: Option<[f64; 2]>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_scan_band() -> [f64; 2] {
    [0.05, 3.0]
}
fn default_scan_step() -> f64 {
    0.01
}
fn default_scan_amp() -> [f64; 2] {
    [0.005, 0.01]
}
fn default_scan_clamp() -> f64 {
    0.1
}
fn default_periods() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub zeta_target: f64,
    /// σ_CL as a multiple of the minimum required decay rate.
    pub sigma_factor: f64,
    pub max_phase_per_block_deg: f64,
    pub m_max: usize,
    pub tw: f64,
    pub phase_matching: PhaseMatching,
    /// Pick the identified mode nearest this frequency instead of the least damped.
    pub target_freq_hz: Option<f64>,
    pub output_limit_mw: Option<f64>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        let d = DesignOptions::default();
        Self {
            zeta_target: 0.15,
            sigma_factor: 1.1,
            max_phase_per_block_deg: d.max_phase_per_block_deg,
            m_max: d.m_max,
            tw: d.tw,
            phase_matching: d.phase_matching,
            target_freq_hz: None,
            output_limit_mw: d.output_limit_mw,
        }
    }
}

impl DesignConfig {
    pub fn options(&self) -> DesignOptions {
        DesignOptions {
            max_phase_per_block_deg: self.max_phase_per_block_deg,
            m_max: self.m_max,
            tw: self.tw,
            phase_matching: self.phase_matching,
            output_limit_mw: self.output_limit_mw,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub converter: String,
    /// Feedback channel; also the channel whose ringdown is analysed.
    pub feedback: String,
    pub disturbance: Event,
    /// Additional disturbance for the robustness rerun.
    #[serde(default)]
    pub contingency: Option<Event>,
    #[serde(default = "default_validation_duration")]
    pub duration: f64,
    /// Frequency tolerance for identifying the targeted mode, Hz.
    #[serde(default = "default_match_tol")]
    pub match_tolerance_hz: f64,
    /// Highest relative ζ loss tolerated on other modes.
    #[serde(default = "default_degradation")]
    pub max_degradation: f64,
    /// Targeted-mode damping required after the contingency.
    #[serde(default = "default_contingency_zeta")]
    pub contingency_zeta_min: f64,
}

fn default_contingency_zeta() -> f64 {
    0.10
}

fn default_validation_duration() -> f64 {
    30.0
}
fn default_match_tol() -> f64 {
    crate::modal::MATCH_TOLERANCE_HZ
}
fn default_degradation() -> f64 {
    0.2
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub areas: Vec<PowerNetwork>,
    pub sys: MtdcSystem,
    /// SHA-256 of the merged configuration.
    pub hash: String,
    pub source: PathBuf,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let merged = load_merged(path, &mut Vec::new())?;
        Self::from_table(merged, path)
    }

    pub fn from_str(text: &str, base: &Path) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", base.display())))?;
        let merged = resolve_includes(table, base.parent().unwrap_or(Path::new(".")), &mut Vec::new())?;
        Self::from_table(merged, base)
    }

    fn from_table(merged: Table, path: &Path) -> Result<Self> {
        let canonical = toml::to_string(&merged).map_err(|e| Error::Config(e.to_string()))?;
        let hash = hex(&Sha256::digest(canonical.as_bytes()));
        let config: ScenarioConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let mut areas = Vec::new();
        for (name, v) in &config.areas {
            let mut t = match v {
                Value::Table(t) => t.clone(),
                _ => return Err(Error::Config(format!("area {name} must be a table"))),
            };
            t.entry("name").or_insert_with(|| Value::String(name.clone()));
            let net: PowerNetwork = Value::Table(t)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("area {name}: {}", e.message())))?;
            areas.push(net.finalize().map_err(|e| Error::Config(format!("area {name}: {e}")))?);
        }
        let sys = config.mtdc.clone().finalize().map_err(|e| Error::Config(format!("mtdc: {e}")))?;
        for c in &sys.converters {
            if !areas.iter().any(|a| a.name == c.area) {
                return Err(Error::Config(format!("converter {} refers to unknown area {}", c.name, c.area)));
            }
        }
        for e in &config.events {
            e.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(Self { config, areas, sys, hash, source: path.to_path_buf() })
    }

    /// Seed for stochastic steps: the explicit override, else the config's.
    pub fn seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed.unwrap_or(self.config.seed)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_merged(path: &Path, stack: &mut Vec<PathBuf>) -> Result<Table> {
    let canon = path.canonicalize().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if stack.contains(&canon) {
        return Err(Error::Config(format!("include cycle through {}", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let table: Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    stack.push(canon);
    let out = resolve_includes(table, path.parent().unwrap_or(Path::new(".")), stack);
    stack.pop();
    out
}

fn resolve_includes(mut table: Table, dir: &Path, stack: &mut Vec<PathBuf>) -> Result<Table> {
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(Error::Config("include entries must be strings".into())),
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::Config("include must be a string or list of strings".into())),
    };
    let mut merged = Table::new();
    for inc in includes {
        let sub = load_merged(&dir.join(inc), stack)?;
        deep_merge(&mut merged, sub);
    }
    deep_merge(&mut merged, table);
    Ok(merged)
}

/// Merges `over` into `base`: tables recursively, everything else replaced.
pub fn deep_merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
