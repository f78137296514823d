use super::{ConverterMode, MtdcSystem, VscConverter};
use crate::grid::wrap_angle;
use num_complex::Complex64;

/// States per converter: `[θ_pll, i_d, i_q, ξ]`.
pub const CONVERTER_STATES: usize = 4;

/// Converter parameters on the system base, with mutable operating-point
/// references fixed at initialization.
#[derive(Debug, Clone)]
pub struct ConverterModel {
    pub name: String,
    pub mode: ConverterMode,
    pub p_ref: f64,
    pub q_ref: f64,
    pub v_ac_ref: f64,
    pub v_dc_ref: f64,
    pub tau: f64,
    pub ki_p: f64,
    pub kp_v: f64,
    pub ki_v: f64,
    pub kq_v: f64,
    pub pll_gain: f64,
    pub loss_coeff: f64,
    pub i_max: f64,
    pub rating: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ConverterTerminal {
    pub v_ac: Complex64,
    pub v_dc: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConverterOutput {
    /// Current injected into the AC bus, pu.
    pub i_ac: Complex64,
    pub p_ac: f64,
    pub q_ac: f64,
    /// Power injected into the DC network, pu.
    pub p_dc: f64,
    pub clamped: bool,
}

impl ConverterModel {
    pub fn new(sys: &MtdcSystem, c: &VscConverter) -> Self {
        let rating = sys.pu(c.rating_mw);
        Self {
            name: c.name.clone(),
            mode: c.mode,
            p_ref: sys.pu(c.p_mw),
            q_ref: sys.pu(c.q_mvar),
            v_ac_ref: 1.0,
            v_dc_ref: c.v_dc_ref,
            tau: c.tau,
            ki_p: c.ki_p,
            kp_v: c.kp_v,
            ki_v: c.ki_v,
            kq_v: c.kq_v,
            pll_gain: c.pll_gain,
            loss_coeff: c.loss_coeff,
            i_max: c.current_limit * rating,
            rating,
        }
    }

    /// Equilibrium state delivering `s_ac` at terminal voltage `v_ac`, with
    /// the references re-anchored to that operating point.
    pub fn init(&mut self, v_ac: Complex64, s_ac: Complex64) -> [f64; CONVERTER_STATES] {
        let vm = v_ac.norm();
        self.p_ref = s_ac.re;
        self.q_ref = s_ac.im;
        self.v_ac_ref = vm;
        let xi = match self.mode {
            ConverterMode::Pq => 0.0,
            ConverterMode::Slack => -s_ac.re,
        };
        [v_ac.arg(), s_ac.re / vm, s_ac.im / vm, xi]
    }

    /// Injected AC current for the present state (network interface).
    pub fn current(&self, x: &[f64]) -> Complex64 {
        Complex64::new(x[1], -x[2]) * Complex64::from_polar(1.0, x[0])
    }

    pub fn dc_power(&self, p_ac: f64, x: &[f64]) -> f64 {
        -(p_ac + self.loss_coeff * (x[1] * x[1] + x[2] * x[2]))
    }

    /// Derivatives of the converter states. `dp_ref` is the supplementary
    /// power-reference modulation, pu (ignored by the slack converter).
    pub fn rhs(&self, x: &[f64], term: &ConverterTerminal, dp_ref: f64, dx: &mut [f64]) -> ConverterOutput {
        let i_ac = self.current(x);
        let s = term.v_ac * i_ac.conj();
        let vm = term.v_ac.norm().max(1e-3);
        let (mut id_ref, mut iq_ref) = match self.mode {
            ConverterMode::Pq => {
                let p_cmd = self.p_ref + dp_ref;
                dx[3] = self.ki_p * (p_cmd - s.re);
                (p_cmd / vm + x[3], self.q_ref / vm)
            }
            ConverterMode::Slack => {
                let e = self.v_dc_ref - term.v_dc;
                dx[3] = self.ki_v * e;
                let p_cmd = -(self.kp_v * e + x[3]);
                (p_cmd / vm, self.q_ref / vm + self.kq_v * (self.v_ac_ref - vm))
            }
        };
        let mut clamped = false;
        if id_ref.abs() > self.i_max {
            id_ref = id_ref.signum() * self.i_max;
            clamped = true;
        }
        let iq_max = (self.i_max * self.i_max - id_ref * id_ref).max(0.0).sqrt();
        if iq_ref.abs() > iq_max {
            iq_ref = iq_ref.signum() * iq_max;
            clamped = true;
        }
        if clamped {
            dx[3] = 0.0;
        }
        dx[0] = self.pll_gain * wrap_angle(term.v_ac.arg() - x[0]);
        dx[1] = (id_ref - x[1]) / self.tau;
        dx[2] = (iq_ref - x[2]) / self.tau;
        ConverterOutput { i_ac, p_ac: s.re, q_ac: s.im, p_dc: self.dc_power(s.re, x), clamped }
    }
}

/// DC network dynamics: series R-L lines between capacitive nodes.
#[derive(Debug, Clone)]
pub struct DcGridModel {
    pub c: Vec<f64>,
    /// `(from, to, R pu, L s)` per in-service line.
    pub lines: Vec<(usize, usize, f64, f64)>,
}

impl DcGridModel {
    pub fn new(sys: &MtdcSystem) -> Self {
        let lines = sys
            .lines
            .iter()
            .filter(|l| l.in_service)
            .map(|l| (sys.index[&l.from], sys.index[&l.to], sys.line_r_pu(l), sys.line_l_s(l)))
            .collect();
        Self { c: sys.capacitance_s(), lines }
    }

    pub fn n_nodes(&self) -> usize {
        self.c.len()
    }

    pub fn n_states(&self) -> usize {
        self.c.len() + self.lines.len()
    }

    /// `x = [v..., i_line...]`; `i_inj` is the current injected at each node.
    pub fn rhs(&self, x: &[f64], i_inj: &[f64], dx: &mut [f64]) {
        let n = self.c.len();
        dx[..n].copy_from_slice(i_inj);
        for (k, &(f, t, r, l)) in self.lines.iter().enumerate() {
            let i = x[n + k];
            dx[f] -= i;
            dx[t] += i;
            dx[n + k] = (x[f] - x[t] - r * i) / l;
        }
        for (d, c) in dx[..n].iter_mut().zip(&self.c) {
            *d /= c;
        }
    }

    /// Stored electric plus magnetic energy, pu·s.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let n = self.c.len();
        let cap: f64 = (0..n).map(|i| 0.5 * self.c[i] * x[i] * x[i]).sum();
        let ind: f64 = self.lines.iter().enumerate().map(|(k, l)| 0.5 * l.3 * x[n + k].powi(2)).sum();
        cap + ind
    }

    pub fn resistive_loss(&self, x: &[f64]) -> f64 {
        let n = self.c.len();
        self.lines.iter().enumerate().map(|(k, l)| l.2 * x[n + k].powi(2)).sum()
    }
}
