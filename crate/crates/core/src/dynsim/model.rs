use crate::error::{Error, Result};
use crate::grid::{AreaModel, AreaSolution, PowerNetwork, FREQ_FILTER_TC};
use crate::mtdc::{
    dc_powerflow, sequential_acdc_powerflow, slack_ac_power, AcDcSteadyState, ConverterMode, ConverterModel,
    ConverterOutput, ConverterTerminal, DcGridModel, DcOptions, MtdcSystem, SequentialOptions, CONVERTER_STATES,
};
use crate::sdc::SdcBlock;
use num_complex::Complex64;

/// A measurable quantity of the combined model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    /// Bus frequency, Hz.
    BusFreq { area: usize, bus: usize },
    BusVm { area: usize, bus: usize },
    BusVa { area: usize, bus: usize },
    /// Rotor speed, pu.
    MachineSpeed { area: usize, unit: usize },
    MachineAngle { area: usize, unit: usize },
    /// Electrical power, MW.
    MachinePe { area: usize, unit: usize },
    /// GFM internal frequency, pu.
    GfmSpeed { area: usize, unit: usize },
    /// Converter AC power delivered, MW.
    ConvP(usize),
    ConvQ(usize),
    /// Converter power into the DC grid, MW.
    ConvPdc(usize),
    /// DC node voltage, pu.
    DcV(usize),
    /// SDC output, MW.
    SdcOut(usize),
}

/// Per-instant algebraic quantities.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub areas: Vec<AreaSolution>,
    pub converters: Vec<ConverterOutput>,
    /// SDC outputs as applied, MW.
    pub sdc: Vec<f64>,
}

#[derive(Debug, Clone)]
struct SdcRuntime {
    block: SdcBlock,
    feedback: Signal,
    offset: usize,
    enabled: bool,
}

/// Combined AC areas, converters, DC network and damping controllers.
///
/// State layout: each area's states in order, then `[θ, i_d, i_q, ξ]` per
/// converter, then the DC node voltages and line currents, then SDC states.
#[derive(Debug, Clone)]
pub struct Macrogrid {
    pub areas: Vec<AreaModel>,
    pub sys: MtdcSystem,
    pub converters: Vec<ConverterModel>,
    pub dc: DcGridModel,
    conv_bus: Vec<(usize, usize)>,
    conv_node: Vec<usize>,
    sdcs: Vec<Option<SdcRuntime>>,
    area_offset: Vec<usize>,
    conv_offset: usize,
    dc_offset: usize,
    n_states: usize,
    /// Supplementary reference modulation per converter, pu; set by the simulator.
    pub(crate) dp_ext: Vec<f64>,
}

impl Macrogrid {
    /// Solves the joint AC-DC powerflow and returns the model with an exact
    /// equilibrium state.
    pub fn build(areas: &[PowerNetwork], sys: &MtdcSystem, opts: &SequentialOptions) -> Result<(Self, Vec<f64>)> {
        let pf = sequential_acdc_powerflow(areas, sys, opts)?;
        Self::from_steady_state(areas, sys, &pf)
    }

    pub fn from_steady_state(areas: &[PowerNetwork], sys: &MtdcSystem, pf: &AcDcSteadyState) -> Result<(Self, Vec<f64>)> {
        let mut models = Vec::with_capacity(areas.len());
        let mut xs = Vec::with_capacity(areas.len());
        for (net, sol) in areas.iter().zip(&pf.ac) {
            let (m, x) = AreaModel::from_powerflow(net, sol)?;
            models.push(m);
            xs.push(x);
        }
        let mut converters: Vec<ConverterModel> = sys.converters.iter().map(|c| ConverterModel::new(sys, c)).collect();
        let conv_node = sys.converters.iter().map(|c| sys.node_index(&c.dc_node)).collect::<Result<Vec<_>>>()?;
        let conv_bus = pf.converter_bus.clone();
        let nc = converters.len();
        let mut xc: Vec<[f64; CONVERTER_STATES]> =
            (0..nc).map(|k| converters[k].init(pf.converter_voltage(k), pf.converter_s[k])).collect();

        // Fixed point between area equilibria and the DC balance; the
        // coupling is weak so a few passes reach round-off.
        let ks = sys.slack_converter();
        let tight = DcOptions { tolerance: 1e-13, ..DcOptions::default() };
        let mut dc_sol = pf.dc.clone();
        for pass in 0.. {
            let mut sols = Vec::with_capacity(models.len());
            for (a, m) in models.iter_mut().enumerate() {
                let mut ext = vec![Complex64::new(0.0, 0.0); m.net.n_bus()];
                for k in 0..nc {
                    if conv_bus[k].0 == a {
                        ext[conv_bus[k].1] += converters[k].current(&xc[k]);
                    }
                }
                sols.push(m.settle(&mut xs[a], &ext)?);
            }
            let mut p_dc_mw = vec![0.0; nc];
            let mut volts = vec![Complex64::new(0.0, 0.0); nc];
            for k in 0..nc {
                let v = sols[conv_bus[k].0].v[conv_bus[k].1];
                let s = v * converters[k].current(&xc[k]).conj();
                volts[k] = v;
                if k != ks {
                    xc[k] = converters[k].init(v, s);
                }
                p_dc_mw[k] = converters[k].dc_power(s.re, &xc[k]) * sys.system_mva;
            }
            dc_sol = dc_powerflow(sys, &p_dc_mw, &tight)?;
            let q = converters[ks].q_ref;
            let p = slack_ac_power(dc_sol.slack_power, q, volts[ks].norm(), converters[ks].loss_coeff);
            let i_old = converters[ks].current(&xc[ks]);
            xc[ks] = converters[ks].init(volts[ks], Complex64::new(p, q));
            let delta = (converters[ks].current(&xc[ks]) - i_old).norm();
            if delta < 1e-13 {
                break;
            }
            if pass >= 50 {
                return Err(Error::NonConvergence {
                    solver: "dynamic initialization",
                    iterations: pass,
                    mismatch: delta,
                    location: sys.converters[ks].name.clone(),
                });
            }
        }

        let dc = DcGridModel::new(sys);
        let mut x = Vec::new();
        let mut area_offset = Vec::new();
        for xa in &xs {
            area_offset.push(x.len());
            x.extend_from_slice(xa);
        }
        let conv_offset = x.len();
        for xk in &xc {
            x.extend_from_slice(xk);
        }
        let dc_offset = x.len();
        x.extend_from_slice(&dc_sol.v);
        for (k, l) in sys.lines.iter().enumerate() {
            if l.in_service {
                x.push(dc_sol.line_current[k]);
            }
        }
        let mut model = Self {
            areas: models,
            sys: sys.clone(),
            converters,
            dc,
            conv_bus,
            conv_node,
            sdcs: vec![None; nc],
            area_offset,
            conv_offset,
            dc_offset,
            n_states: x.len(),
            dp_ext: vec![0.0; nc],
        };
        for (k, c) in sys.converters.iter().enumerate() {
            if let Some(att) = &c.sdc {
                let feedback = model.resolve(&att.feedback)?;
                let block = SdcBlock::new(att.params.clone(), c.rating_mw);
                model.sdcs[k] = Some(SdcRuntime { block, feedback, offset: 0, enabled: att.enabled });
            }
        }
        model.layout_sdcs();
        let mut x = x;
        x.resize(model.n_states, 0.0);
        model.init_sdc_states(&mut x)?;
        Ok((model, x))
    }

    fn layout_sdcs(&mut self) {
        let mut off = self.dc_offset + self.dc.n_states();
        for s in self.sdcs.iter_mut().flatten() {
            s.offset = off;
            off += s.block.n_states();
        }
        self.n_states = off;
    }

    fn init_sdc_states(&self, x: &mut [f64]) -> Result<()> {
        let snap = self.snapshot(x)?;
        for s in self.sdcs.iter().flatten() {
            let u = self.signal_value(x, &snap, s.feedback) - self.signal_nominal(s.feedback);
            let x0 = s.block.initial_state(u);
            x[s.offset..s.offset + x0.len()].copy_from_slice(&x0);
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn has_sdc(&self, k: usize) -> bool {
        self.sdcs[k].is_some()
    }

    /// Enables or disables every attached SDC without touching its states.
    pub fn set_sdc_enabled(&mut self, enabled: bool) {
        for s in self.sdcs.iter_mut().flatten() {
            s.enabled = enabled;
        }
    }

    pub fn converter_index(&self, name: &str) -> Result<usize> {
        self.sys.converter_index(name)
    }

    pub fn area_index(&self, name: &str) -> Result<usize> {
        self.areas
            .iter()
            .position(|a| a.net.name == name)
            .ok_or_else(|| Error::Validation(format!("unknown area {name}")))
    }

    /// Index of the first state of area `a` in the full state vector.
    pub fn area_offset(&self, a: usize) -> usize {
        self.area_offset[a]
    }

    pub fn area_state<'a>(&self, x: &'a [f64], a: usize) -> &'a [f64] {
        let o = self.area_offset[a];
        &x[o..o + self.areas[a].n_states()]
    }

    fn conv_state<'a>(&self, x: &'a [f64], k: usize) -> &'a [f64] {
        let o = self.conv_offset + k * CONVERTER_STATES;
        &x[o..o + CONVERTER_STATES]
    }

    /// Conservative estimate of the smallest dynamic time constant, s.
    pub fn fastest_time_constant(&self) -> f64 {
        let mut t = FREQ_FILTER_TC;
        for c in &self.converters {
            t = t.min(c.tau).min(1.0 / c.pll_gain);
        }
        for a in &self.areas {
            for g in &a.net.gfms {
                t = t.min(g.filter_time_const);
            }
            for m in &a.net.machines {
                if let Some(gv) = &m.governor {
                    t = t.min(gv.time_const);
                }
                if let Some(ex) = &m.exciter {
                    // The exciter drives E' directly, so its closed loop is
                    // up to (1 + K_A) times faster than T_A.
                    t = t.min(ex.time_const / (1.0 + ex.gain.abs()));
                }
            }
        }
        t
    }

    /// Names every available channel in canonical order.
    pub fn channel_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in &self.areas {
            let an = &a.net.name;
            for b in &a.net.buses {
                out.push(format!("{an}.freq.{}", b.name));
            }
            for b in &a.net.buses {
                out.push(format!("{an}.vm.{}", b.name));
                out.push(format!("{an}.va.{}", b.name));
            }
            for m in &a.net.machines {
                out.push(format!("{an}.speed.{}", m.name));
                out.push(format!("{an}.angle.{}", m.name));
                out.push(format!("{an}.pe.{}", m.name));
            }
            for g in &a.net.gfms {
                out.push(format!("{an}.speed.{}", g.name));
            }
        }
        for c in &self.sys.converters {
            out.push(format!("mtdc.p.{}", c.name));
            out.push(format!("mtdc.q.{}", c.name));
            out.push(format!("mtdc.pdc.{}", c.name));
        }
        for n in &self.sys.nodes {
            out.push(format!("mtdc.vdc.{}", n.name));
        }
        for (k, c) in self.sys.converters.iter().enumerate() {
            if self.sdcs[k].is_some() {
                out.push(format!("mtdc.sdc.{}", c.name));
            }
        }
        out
    }

    /// Expands a channel list; entries ending in `*` match by prefix and an
    /// empty list selects everything.
    pub fn expand_channels(&self, patterns: &[String]) -> Result<Vec<String>> {
        let all = self.channel_names();
        if patterns.is_empty() {
            return Ok(all);
        }
        let mut out: Vec<String> = Vec::new();
        for p in patterns {
            if let Some(prefix) = p.strip_suffix('*') {
                let hits: Vec<&String> = all.iter().filter(|c| c.starts_with(prefix)).collect();
                if hits.is_empty() {
                    return Err(Error::UnknownChannel(p.clone()));
                }
                out.extend(hits.into_iter().filter(|h| !out.contains(h)).cloned().collect::<Vec<_>>());
            } else {
                self.resolve(p)?;
                if !out.contains(p) {
                    out.push(p.clone());
                }
            }
        }
        Ok(out)
    }

    /// Parses `area.kind.element` or `mtdc.kind.element`.
    pub fn resolve(&self, name: &str) -> Result<Signal> {
        let unknown = || Error::UnknownChannel(name.to_string());
        let mut parts = name.splitn(3, '.');
        let (scope, kind, elem) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(unknown()),
        };
        if scope == "mtdc" {
            let conv = || self.sys.converters.iter().position(|c| c.name == elem).ok_or_else(unknown);
            return match kind {
                "p" => Ok(Signal::ConvP(conv()?)),
                "q" => Ok(Signal::ConvQ(conv()?)),
                "pdc" => Ok(Signal::ConvPdc(conv()?)),
                "sdc" => {
                    let k = conv()?;
                    if self.sdcs[k].is_none() {
                        return Err(unknown());
                    }
                    Ok(Signal::SdcOut(k))
                }
                "vdc" => Ok(Signal::DcV(self.sys.nodes.iter().position(|n| n.name == elem).ok_or_else(unknown)?)),
                _ => Err(unknown()),
            };
        }
        let area = self.areas.iter().position(|a| a.net.name == scope).ok_or_else(unknown)?;
        let net = &self.areas[area].net;
        let bus = || net.buses.iter().position(|b| b.name == elem).ok_or_else(unknown);
        let machine = || net.machines.iter().position(|m| m.name == elem).ok_or_else(unknown);
        match kind {
            "freq" => Ok(Signal::BusFreq { area, bus: bus()? }),
            "vm" => Ok(Signal::BusVm { area, bus: bus()? }),
            "va" => Ok(Signal::BusVa { area, bus: bus()? }),
            "speed" => match machine() {
                Ok(unit) => Ok(Signal::MachineSpeed { area, unit }),
                Err(_) => Ok(Signal::GfmSpeed {
                    area,
                    unit: net.gfms.iter().position(|g| g.name == elem).ok_or_else(unknown)?,
                }),
            },
            "angle" => Ok(Signal::MachineAngle { area, unit: machine()? }),
            "pe" => Ok(Signal::MachinePe { area, unit: machine()? }),
            _ => Err(unknown()),
        }
    }

    /// Value of a signal at the given state.
    pub fn signal_value(&self, x: &[f64], snap: &Snapshot, s: Signal) -> f64 {
        let mva = self.sys.system_mva;
        match s {
            Signal::BusFreq { area, bus } => {
                let m = &self.areas[area];
                let dev = m.bus_freq_dev(self.area_state(x, area), &snap.areas[area], bus);
                m.net.frequency_hz * (1.0 + dev)
            }
            Signal::BusVm { area, bus } => snap.areas[area].v[bus].norm(),
            Signal::BusVa { area, bus } => snap.areas[area].v[bus].arg(),
            Signal::MachineSpeed { area, unit } => 1.0 + self.areas[area].machine_speed(self.area_state(x, area), unit),
            Signal::MachineAngle { area, unit } => {
                self.area_state(x, area)[self.areas[area].machine_offset(unit)]
            }
            Signal::MachinePe { area, unit } => snap.areas[area].machine_pe[unit] * mva,
            Signal::GfmSpeed { area, unit } => 1.0 + self.areas[area].gfm_freq_dev(self.area_state(x, area), unit),
            Signal::ConvP(k) => snap.converters[k].p_ac * mva,
            Signal::ConvQ(k) => snap.converters[k].q_ac * mva,
            Signal::ConvPdc(k) => snap.converters[k].p_dc * mva,
            Signal::DcV(i) => x[self.dc_offset + i],
            Signal::SdcOut(k) => snap.sdc[k],
        }
    }

    /// Nominal value subtracted from a signal to form a deviation.
    pub fn signal_nominal(&self, s: Signal) -> f64 {
        match s {
            Signal::BusFreq { area, .. } => self.areas[area].net.frequency_hz,
            Signal::MachineSpeed { .. } | Signal::GfmSpeed { .. } => 1.0,
            _ => 0.0,
        }
    }

    /// Algebraic quantities at `x` without derivatives.
    pub fn snapshot(&self, x: &[f64]) -> Result<Snapshot> {
        let mut dx = vec![0.0; x.len()];
        self.rhs(x, 0.0, None, &mut dx)
    }

    /// Time derivative of the full state. `probe` adds a time-varying
    /// reference modulation `(converter, MW)` on top of `dp_ext`.
    pub fn rhs(&self, x: &[f64], _t: f64, probe: Option<(usize, f64)>, dx: &mut [f64]) -> Result<Snapshot> {
        let nc = self.converters.len();
        let mut ext: Vec<Vec<Complex64>> =
            self.areas.iter().map(|a| vec![Complex64::new(0.0, 0.0); a.net.n_bus()]).collect();
        for k in 0..nc {
            let (a, b) = self.conv_bus[k];
            ext[a][b] += self.converters[k].current(self.conv_state(x, k));
        }
        let mut sols = Vec::with_capacity(self.areas.len());
        for (a, m) in self.areas.iter().enumerate() {
            let o = self.area_offset[a];
            let n = m.n_states();
            sols.push(m.rhs(&x[o..o + n], &ext[a], &mut dx[o..o + n])?);
        }
        let mut snap = Snapshot { areas: sols, converters: Vec::with_capacity(nc), sdc: vec![0.0; nc] };

        for (k, s) in self.sdcs.iter().enumerate() {
            if let Some(s) = s {
                let u = self.signal_value(x, &snap, s.feedback) - self.signal_nominal(s.feedback);
                let n = s.block.n_states();
                let y = s.block.rhs(&x[s.offset..s.offset + n], u, &mut dx[s.offset..s.offset + n]);
                if s.enabled {
                    snap.sdc[k] = y;
                }
            }
        }

        let nn = self.dc.n_nodes();
        let mut i_inj = vec![0.0; nn];
        for k in 0..nc {
            let (a, b) = self.conv_bus[k];
            let node = self.conv_node[k];
            let term = ConverterTerminal { v_ac: snap.areas[a].v[b], v_dc: x[self.dc_offset + node] };
            let mut dp = self.dp_ext[k];
            if self.sdcs[k].is_some() {
                dp += snap.sdc[k] / self.sys.system_mva;
            }
            if let Some((pk, mw)) = probe {
                if pk == k {
                    dp += mw / self.sys.system_mva;
                }
            }
            let o = self.conv_offset + k * CONVERTER_STATES;
            let out = self.converters[k].rhs(&x[o..o + CONVERTER_STATES], &term, dp, &mut dx[o..o + CONVERTER_STATES]);
            i_inj[node] += out.p_dc / term.v_dc;
            snap.converters.push(out);
        }
        let o = self.dc_offset;
        let n = self.dc.n_states();
        self.dc.rhs(&x[o..o + n], &i_inj, &mut dx[o..o + n]);
        Ok(snap)
    }

    /// Finite-difference linearization around `x`; returns the eigenvalues
    /// of the state matrix.
    pub fn linearize(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        let mut err = None;
        let jac = crate::linalg::fd_jacobian(
            |s, d| {
                if let Err(e) = self.rhs(s, 0.0, None, d) {
                    err = Some(e);
                }
            },
            x,
            1e-7,
        );
        if let Some(e) = err {
            return Err(e);
        }
        crate::linalg::eigenvalues(&jac)
    }

    pub(crate) fn area_mut(&mut self, a: usize) -> &mut AreaModel {
        &mut self.areas[a]
    }

    pub fn converter_mode(&self, k: usize) -> ConverterMode {
        self.converters[k].mode
    }
}
