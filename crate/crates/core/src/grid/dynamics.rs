use super::{GfmSys, MachineSys, PowerNetwork, PowerflowSolution};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Time constant of the per-bus frequency measurement filter, s.
pub const FREQ_FILTER_TC: f64 = 0.02;

const MACHINE_STATES: usize = 4;
const GFM_STATES: usize = 3;

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Switchable parts of the network that disturbance events act on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AreaTopology {
    pub tripped_branches: Vec<usize>,
    pub tripped_machines: Vec<usize>,
    /// Extra shunt admittance per bus (dynamic brakes).
    pub shunts: Vec<Complex64>,
}

/// Algebraic network solution at one instant.
#[derive(Debug, Clone)]
pub struct AreaSolution {
    pub v: Vec<Complex64>,
    pub machine_pe: Vec<f64>,
    pub machine_it: Vec<Complex64>,
    pub gfm_p: Vec<f64>,
    pub gfm_q: Vec<f64>,
    pub gfm_current: Vec<f64>,
    pub gfm_clamped: Vec<bool>,
}

/// Dynamic model of one AC interconnection: classical machines with
/// governor/exciter, droop GFMs and one frequency-measurement filter per bus,
/// around an algebraic constant-impedance network.
///
/// State layout: `[δ, Δω, Pm, E']` per machine, `[θ, P_f, Q_f]` per GFM, then
/// one filter state per bus.
#[derive(Debug, Clone)]
pub struct AreaModel {
    pub net: PowerNetwork,
    machines: Vec<MachineSys>,
    gfms: Vec<GfmSys>,
    omega_s: f64,
    pm_ref: Vec<f64>,
    efd0: Vec<f64>,
    v_ref: Vec<f64>,
    gfm_p_set: Vec<f64>,
    gfm_q_set: Vec<f64>,
    gfm_v_set: Vec<f64>,
    /// Fixed constant-power bus injections frozen into admittances.
    fixed_y: Vec<Complex64>,
    topology: AreaTopology,
    y_aug: DMatrix<Complex64>,
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl AreaModel {
    /// Builds the model and an initial state consistent with `pf`.
    ///
    /// The returned state is not yet an exact equilibrium; pass it through
    /// [`AreaModel::settle`] with the final external currents.
    pub fn from_powerflow(
        net: &PowerNetwork,
        pf: &PowerflowSolution,
    ) -> Result<(Self, Vec<f64>)> {
        let n = net.n_bus();
        let machines: Vec<MachineSys> = net.machines.iter().map(|m| net.machine_sys(m)).collect();
        let gfms: Vec<GfmSys> = net.gfms.iter().map(|g| net.gfm_sys(g)).collect();
        let v: Vec<Complex64> = (0..n).map(|i| pf.voltage(i)).collect();

        // Split each bus's generation across its units: P by dispatch share
        // (slack-bus surplus by rating), Q by rating.
        let mut unit_s_m = vec![Complex64::new(0.0, 0.0); machines.len()];
        let mut unit_s_g = vec![Complex64::new(0.0, 0.0); gfms.len()];
        for bus in 0..n {
            let ms: Vec<usize> = (0..machines.len()).filter(|&k| machines[k].bus == bus).collect();
            let gs: Vec<usize> = (0..gfms.len()).filter(|&k| gfms[k].bus == bus).collect();
            if ms.is_empty() && gs.is_empty() {
                continue;
            }
            let disp: Vec<f64> = ms
                .iter()
                .map(|&k| net.pu(net.machines[k].dispatch_mw))
                .chain(gs.iter().map(|&k| net.pu(net.gfms[k].dispatch_mw)))
                .collect();
            let rating: Vec<f64> = ms
                .iter()
                .map(|&k| net.machines[k].mva)
                .chain(gs.iter().map(|&k| net.gfms[k].mva))
                .collect();
            let total_disp: f64 = disp.iter().sum();
            let total_rating: f64 = rating.iter().sum();
            let surplus = pf.p_gen[bus] - total_disp;
            for (slot, idx) in ms.iter().map(|&k| (0, k)).chain(gs.iter().map(|&k| (1, k))).enumerate() {
                let p = disp[slot] + surplus * rating[slot] / total_rating;
                let q = pf.q_gen[bus] * rating[slot] / total_rating;
                match idx {
                    (0, k) => unit_s_m[k] = Complex64::new(p, q),
                    (_, k) => unit_s_g[k] = Complex64::new(p, q),
                }
            }
        }

        let n_states = machines.len() * MACHINE_STATES + gfms.len() * GFM_STATES + n;
        let mut x = vec![0.0; n_states];
        let j = Complex64::new(0.0, 1.0);
        for (k, m) in machines.iter().enumerate() {
            let vt = v[m.bus];
            let it = (unit_s_m[k] / vt).conj();
            let e = vt + j * m.xd * it;
            let name = &net.machines[k].name;
            if !e.norm().is_finite() || e.norm() < 0.5 || e.norm() > 3.0 {
                return Err(Error::InfeasibleOperatingPoint {
                    unit: name.clone(),
                    reason: format!("internal EMF {:.3} pu is non-physical", e.norm()),
                });
            }
            let o = k * MACHINE_STATES;
            x[o] = e.arg();
            x[o + 1] = 0.0;
            x[o + 2] = unit_s_m[k].re;
            x[o + 3] = e.norm();
        }
        let mut gfm_v_set = vec![0.0; gfms.len()];
        let mut gfm_q_set = vec![0.0; gfms.len()];
        let go = machines.len() * MACHINE_STATES;
        for (k, g) in gfms.iter().enumerate() {
            let vt = v[g.bus];
            let it = (unit_s_g[k] / vt).conj();
            if it.norm() > g.i_lim {
                return Err(Error::InfeasibleOperatingPoint {
                    unit: net.gfms[k].name.clone(),
                    reason: format!("equilibrium current {:.3} pu exceeds limit {:.3} pu", it.norm(), g.i_lim),
                });
            }
            let e = vt + j * g.x * it;
            let o = go + k * GFM_STATES;
            x[o] = e.arg();
            x[o + 1] = unit_s_g[k].re;
            x[o + 2] = unit_s_g[k].im;
            gfm_v_set[k] = e.norm();
            gfm_q_set[k] = unit_s_g[k].im;
        }
        let bo = go + gfms.len() * GFM_STATES;
        for i in 0..n {
            x[bo + i] = v[i].arg();
        }

        // Constant-power schedule at buses (not units, not external devices)
        // becomes a constant admittance at the operating voltage.
        let fixed_y: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = Complex64::new(net.pu(net.buses[i].p_mw), net.pu(net.buses[i].q_mvar));
                -s.conj() / (pf.v[i] * pf.v[i])
            })
            .collect();

        let topology = AreaTopology { shunts: vec![Complex64::new(0.0, 0.0); n], ..Default::default() };
        let placeholder = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let mut model = Self {
            net: net.clone(),
            pm_ref: machines.iter().enumerate().map(|(k, _)| unit_s_m[k].re).collect(),
            efd0: (0..machines.len()).map(|k| x[k * MACHINE_STATES + 3]).collect(),
            v_ref: machines.iter().map(|m| pf.v[m.bus]).collect(),
            gfm_p_set: unit_s_g.iter().map(|s| s.re).collect(),
            gfm_q_set,
            gfm_v_set,
            machines,
            gfms,
            omega_s: 2.0 * PI * net.frequency_hz,
            fixed_y,
            topology,
            lu: placeholder.clone().lu(),
            y_aug: placeholder,
        };
        model.refactor()?;
        Ok((model, x))
    }

    pub fn n_states(&self) -> usize {
        self.machines.len() * MACHINE_STATES + self.gfms.len() * GFM_STATES + self.net.n_bus()
    }

    pub fn omega_s(&self) -> f64 {
        self.omega_s
    }

    pub fn machine_offset(&self, k: usize) -> usize {
        k * MACHINE_STATES
    }

    pub fn gfm_offset(&self, k: usize) -> usize {
        self.machines.len() * MACHINE_STATES + k * GFM_STATES
    }

    pub fn bus_filter_offset(&self, i: usize) -> usize {
        self.machines.len() * MACHINE_STATES + self.gfms.len() * GFM_STATES + i
    }

    pub fn topology(&self) -> &AreaTopology {
        &self.topology
    }

    pub fn machine_online(&self, k: usize) -> bool {
        !self.topology.tripped_machines.contains(&k)
    }

    /// Applies a topology change and refactors the network matrix.
    pub fn set_topology(&mut self, topology: AreaTopology) -> Result<()> {
        if !self.net.is_connected(&topology.tripped_branches) {
            return Err(Error::Validation(format!(
                "area {}: branch outage islands the network",
                self.net.name
            )));
        }
        self.topology = topology;
        self.refactor()
    }

    fn refactor(&mut self) -> Result<()> {
        let mut y = self.net.branch_ybus(&self.topology.tripped_branches);
        let yl = self.net.load_admittance();
        for i in 0..self.net.n_bus() {
            y[(i, i)] += yl[i] + self.fixed_y[i] + self.topology.shunts[i];
        }
        for (k, m) in self.machines.iter().enumerate() {
            if self.machine_online(k) {
                y[(m.bus, m.bus)] += Complex64::new(0.0, -1.0 / m.xd);
            }
        }
        for g in &self.gfms {
            y[(g.bus, g.bus)] += Complex64::new(0.0, -1.0 / g.x);
        }
        let lu = y.clone().lu();
        if !lu.is_invertible() {
            let bus = self.net.buses[0].name.clone();
            return Err(Error::NetworkSolve { area: self.net.name.clone(), bus });
        }
        self.y_aug = y;
        self.lu = lu;
        Ok(())
    }

    fn gfm_emf(&self, x: &[f64], k: usize) -> Complex64 {
        let o = self.gfm_offset(k);
        let g = &self.gfms[k];
        let mag = self.gfm_v_set[k] - g.q_droop * (x[o + 2] - self.gfm_q_set[k]);
        Complex64::from_polar(mag, x[o])
    }

    /// Solves the algebraic network for the given state and external
    /// per-bus current injections (empty slice means none).
    pub fn solve_network(&self, x: &[f64], ext: &[Complex64]) -> Result<AreaSolution> {
        let n = self.net.n_bus();
        let j = Complex64::new(0.0, 1.0);
        let mut rhs = DVector::from_element(n, Complex64::new(0.0, 0.0));
        for (i, c) in ext.iter().enumerate() {
            rhs[i] += c;
        }
        let mut emf_m = vec![Complex64::new(0.0, 0.0); self.machines.len()];
        for (k, m) in self.machines.iter().enumerate() {
            if self.machine_online(k) {
                let o = self.machine_offset(k);
                emf_m[k] = Complex64::from_polar(x[o + 3], x[o]);
                rhs[m.bus] += emf_m[k] / (j * m.xd);
            }
        }
        let emf_g: Vec<Complex64> = (0..self.gfms.len()).map(|k| self.gfm_emf(x, k)).collect();
        for (k, g) in self.gfms.iter().enumerate() {
            rhs[g.bus] += emf_g[k] / (j * g.x);
        }
        let v = self.lu.solve(&rhs).ok_or_else(|| self.solve_error(0))?;
        let mut v: Vec<Complex64> = v.iter().copied().collect();

        let mut i_g: Vec<Complex64> = self
            .gfms
            .iter()
            .enumerate()
            .map(|(k, g)| (emf_g[k] - v[g.bus]) / (j * g.x))
            .collect();
        let clamped: Vec<bool> = self
            .gfms
            .iter()
            .enumerate()
            .map(|(k, g)| i_g[k].norm() > g.i_lim)
            .collect();
        if clamped.iter().any(|c| *c) {
            // Clamped units become current sources at the limit, keeping the
            // direction of the unconstrained current.
            let mut y = self.y_aug.clone();
            let mut rhs2 = rhs.clone();
            for (k, g) in self.gfms.iter().enumerate() {
                if clamped[k] {
                    y[(g.bus, g.bus)] -= Complex64::new(0.0, -1.0 / g.x);
                    rhs2[g.bus] -= emf_g[k] / (j * g.x);
                    let scale = g.i_lim / i_g[k].norm();
                    i_g[k] *= scale;
                    rhs2[g.bus] += i_g[k];
                }
            }
            let sol = y.lu().solve(&rhs2).ok_or_else(|| self.solve_error(0))?;
            v = sol.iter().copied().collect();
            for (k, g) in self.gfms.iter().enumerate() {
                if !clamped[k] {
                    i_g[k] = (emf_g[k] - v[g.bus]) / (j * g.x);
                }
            }
        }
        if let Some(bad) = v.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(self.solve_error(bad));
        }

        let mut machine_pe = vec![0.0; self.machines.len()];
        let mut machine_it = vec![Complex64::new(0.0, 0.0); self.machines.len()];
        for (k, m) in self.machines.iter().enumerate() {
            if self.machine_online(k) {
                let it = (emf_m[k] - v[m.bus]) / (j * m.xd);
                machine_it[k] = it;
                machine_pe[k] = (emf_m[k] * it.conj()).re;
            }
        }
        let s_g: Vec<Complex64> = self
            .gfms
            .iter()
            .enumerate()
            .map(|(k, g)| v[g.bus] * i_g[k].conj())
            .collect();
        Ok(AreaSolution {
            v,
            machine_pe,
            machine_it,
            gfm_p: s_g.iter().map(|s| s.re).collect(),
            gfm_q: s_g.iter().map(|s| s.im).collect(),
            gfm_current: i_g.iter().map(|c| c.norm()).collect(),
            gfm_clamped: clamped,
        })
    }

    fn solve_error(&self, bus: usize) -> Error {
        Error::NetworkSolve { area: self.net.name.clone(), bus: self.net.buses[bus].name.clone() }
    }

    /// State derivatives. `ext` are external current injections per bus.
    pub fn rhs(&self, x: &[f64], ext: &[Complex64], dx: &mut [f64]) -> Result<AreaSolution> {
        let sol = self.solve_network(x, ext)?;
        self.rhs_with(x, &sol, dx);
        Ok(sol)
    }

    pub(crate) fn rhs_with(&self, x: &[f64], sol: &AreaSolution, dx: &mut [f64]) {
        for (k, m) in self.machines.iter().enumerate() {
            let o = self.machine_offset(k);
            if !self.machine_online(k) {
                dx[o..o + MACHINE_STATES].iter_mut().for_each(|d| *d = 0.0);
                continue;
            }
            let (dw, pm, e) = (x[o + 1], x[o + 2], x[o + 3]);
            dx[o] = self.omega_s * dw;
            dx[o + 1] = (pm - sol.machine_pe[k] - m.d * dw) / (2.0 * m.h);
            dx[o + 2] = match (m.droop, m.gov_tc) {
                (Some(r), Some(tg)) => (self.pm_ref[k] - dw / r - pm) / tg,
                _ => 0.0,
            };
            dx[o + 3] = match (m.exc_gain, m.exc_tc) {
                (Some(ka), Some(ta)) => (self.efd0[k] + ka * (self.v_ref[k] - sol.v[m.bus].norm()) - e) / ta,
                _ => 0.0,
            };
        }
        for (k, g) in self.gfms.iter().enumerate() {
            let o = self.gfm_offset(k);
            let dw = -g.p_droop * (x[o + 1] - self.gfm_p_set[k]);
            dx[o] = self.omega_s * dw;
            dx[o + 1] = (sol.gfm_p[k] - x[o + 1]) / g.tf;
            dx[o + 2] = (sol.gfm_q[k] - x[o + 2]) / g.tf;
        }
        for i in 0..self.net.n_bus() {
            let o = self.bus_filter_offset(i);
            dx[o] = wrap_angle(sol.v[i].arg() - x[o]) / FREQ_FILTER_TC;
        }
    }

    /// Measured bus frequency deviation in pu of nominal.
    pub fn bus_freq_dev(&self, x: &[f64], sol: &AreaSolution, i: usize) -> f64 {
        let o = self.bus_filter_offset(i);
        wrap_angle(sol.v[i].arg() - x[o]) / (FREQ_FILTER_TC * self.omega_s)
    }

    pub fn gfm_freq_dev(&self, x: &[f64], k: usize) -> f64 {
        let o = self.gfm_offset(k);
        -self.gfms[k].p_droop * (x[o + 1] - self.gfm_p_set[k])
    }

    /// Resets references and filter states so that `x` is an exact
    /// equilibrium for the given external currents. Returns the network
    /// solution at that equilibrium.
    pub fn settle(&mut self, x: &mut [f64], ext: &[Complex64]) -> Result<AreaSolution> {
        let sol = self.solve_network(x, ext)?;
        for (k, m) in self.machines.iter().enumerate() {
            let o = self.machine_offset(k);
            x[o + 1] = 0.0;
            x[o + 2] = sol.machine_pe[k];
            self.pm_ref[k] = sol.machine_pe[k];
            self.efd0[k] = x[o + 3];
            self.v_ref[k] = sol.v[m.bus].norm();
        }
        for k in 0..self.gfms.len() {
            let o = self.gfm_offset(k);
            let emf = self.gfm_emf(x, k).norm();
            x[o + 1] = sol.gfm_p[k];
            x[o + 2] = sol.gfm_q[k];
            self.gfm_p_set[k] = sol.gfm_p[k];
            self.gfm_q_set[k] = sol.gfm_q[k];
            self.gfm_v_set[k] = emf;
        }
        for i in 0..self.net.n_bus() {
            let o = self.bus_filter_offset(i);
            x[o] = sol.v[i].arg();
        }
        Ok(sol)
    }

    /// Speed (pu deviation) of machine `k`.
    pub fn machine_speed(&self, x: &[f64], k: usize) -> f64 {
        x[self.machine_offset(k) + 1]
    }
}
