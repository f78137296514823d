use super::{dc_powerflow, DcOptions, DcSolution, MtdcSystem};
use crate::error::{Error, Result};
use crate::grid::{ac_powerflow, PowerNetwork, PowerflowOptions, PowerflowSolution};
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct SequentialOptions {
    /// Max change of any converter AC injection between outer iterations, pu.
    pub tolerance: f64,
    pub max_outer: usize,
    pub ac: PowerflowOptions,
    pub dc: DcOptions,
}

impl Default for SequentialOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_outer: 50,
            ac: PowerflowOptions { tolerance: 1e-10, ..Default::default() },
            dc: DcOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcDcSteadyState {
    pub ac: Vec<PowerflowSolution>,
    pub dc: DcSolution,
    /// Converter power delivered to the AC side, pu.
    pub converter_s: Vec<Complex64>,
    /// `(area index, bus index)` of each converter.
    pub converter_bus: Vec<(usize, usize)>,
    pub outer_iterations: usize,
    pub trace: Vec<f64>,
}

impl AcDcSteadyState {
    pub fn converter_voltage(&self, k: usize) -> Complex64 {
        let (a, b) = self.converter_bus[k];
        self.ac[a].voltage(b)
    }

    /// DC-side power injected by each converter, pu.
    pub fn converter_p_dc(&self, sys: &MtdcSystem) -> Vec<f64> {
        (0..sys.converters.len())
            .map(|k| {
                let s = self.converter_s[k];
                let i2 = s.norm_sqr() / self.converter_voltage(k).norm_sqr();
                -(s.re + sys.converters[k].loss_coeff * i2)
            })
            .collect()
    }
}

/// Locates each converter's AC bus among the given interconnections.
pub(crate) fn converter_buses(areas: &[PowerNetwork], sys: &MtdcSystem) -> Result<Vec<(usize, usize)>> {
    sys.converters
        .iter()
        .map(|c| {
            let a = areas
                .iter()
                .position(|n| n.name == c.area)
                .ok_or_else(|| Error::Validation(format!("converter {}: unknown area {}", c.name, c.area)))?;
            Ok((a, areas[a].bus_index(&c.ac_bus)?))
        })
        .collect()
}

/// Alternates DC and AC powerflows until the converter AC-side injections
/// stop changing. Converter losses (`loss_coeff·|I|²`) depend on the AC
/// terminal voltage, which is what couples the two halves.
pub fn sequential_acdc_powerflow(
    areas: &[PowerNetwork],
    sys: &MtdcSystem,
    opts: &SequentialOptions,
) -> Result<AcDcSteadyState> {
    for a in areas {
        if (a.system_mva - sys.system_mva).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "area {} base {} MVA differs from MTDC base {} MVA",
                a.name, a.system_mva, sys.system_mva
            )));
        }
    }
    let buses = converter_buses(areas, sys)?;
    let nc = sys.converters.len();
    let ks = sys.slack_converter();
    let mut vmag: Vec<f64> = buses.iter().map(|&(a, b)| areas[a].buses[b].v).collect();
    let mut s_prev: Option<Vec<Complex64>> = None;
    let mut warm: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; areas.len()];
    let mut trace = Vec::new();

    for outer in 1..=opts.max_outer {
        let mut s: Vec<Complex64> = sys
            .converters
            .iter()
            .map(|c| Complex64::new(sys.pu(c.p_mw), sys.pu(c.q_mvar)))
            .collect();
        let p_dc_mw: Vec<f64> = (0..nc)
            .map(|k| {
                let i2 = s[k].norm_sqr() / (vmag[k] * vmag[k]);
                -(s[k].re + sys.converters[k].loss_coeff * i2) * sys.system_mva
            })
            .collect();
        let dc = dc_powerflow(sys, &p_dc_mw, &opts.dc)?;
        s[ks].re = slack_ac_power(dc.slack_power, s[ks].im, vmag[ks], sys.converters[ks].loss_coeff);

        let mut ac = Vec::with_capacity(areas.len());
        for (ai, net) in areas.iter().enumerate() {
            let mut ext = vec![Complex64::new(0.0, 0.0); net.n_bus()];
            for (k, &(a, b)) in buses.iter().enumerate() {
                if a == ai {
                    ext[b] += s[k];
                }
            }
            let o = PowerflowOptions { warm_start: warm[ai].clone(), ..opts.ac.clone() };
            let pf = ac_powerflow(net, &ext, &o)?;
            warm[ai] = Some((pf.v.clone(), pf.theta.clone()));
            ac.push(pf);
        }
        for (k, &(a, b)) in buses.iter().enumerate() {
            vmag[k] = ac[a].v[b];
        }
        let change = match &s_prev {
            Some(p) => p.iter().zip(&s).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        trace.push(change);
        // Without converter losses the AC side cannot feed back.
        let lossless = sys.converters.iter().all(|c| c.loss_coeff == 0.0);
        if change <= opts.tolerance || lossless {
            return Ok(AcDcSteadyState {
                ac,
                dc,
                converter_s: s,
                converter_bus: buses,
                outer_iterations: outer,
                trace,
            });
        }
        s_prev = Some(s);
    }
    Err(Error::OuterLoopNonConvergence { trace })
}

/// AC power delivered by the slack converter given its DC injection:
/// solves `P + c·(P² + Q²)/V² = −P_dc` for the root continuous with the
/// lossless solution.
pub(crate) fn slack_ac_power(p_dc: f64, q: f64, v: f64, c: f64) -> f64 {
    if c == 0.0 {
        return -p_dc;
    }
    let a = c / (v * v);
    let rhs = -p_dc - a * q * q;
    // a·P² + P − rhs = 0
    2.0 * rhs / (1.0 + (1.0 + 4.0 * a * rhs).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{line, node};
    use super::super::VscConverter;
    use super::*;
    use crate::grid::{Bus, BusKind, PowerNetwork};
    use crate::grid::fixtures as acf;
    use nalgebra::{DMatrix, DVector};

    fn area(name: &str, buses: &[(&str, BusKind, f64)], lines: &[(&str, &str, f64)]) -> PowerNetwork {
        let bs: Vec<Bus> = buses
            .iter()
            .map(|(n, k, p)| Bus { p_mw: *p, q_mvar: 0.2 * p, ..acf::bus(n, *k) })
            .collect();
        let mut net = PowerNetwork::new(name, 1000.0, bs);
        for (f, t, x) in lines {
            net.branches.push(acf::line(&format!("{f}{t}"), f, t, 0.1 * x, *x));
        }
        net.machines.push(acf::machine(&format!("G{name}"), buses[0].0, 5000.0, 0.0, 5.0, 0.0));
        net.finalize().unwrap()
    }

    fn three_terminal(loss: f64) -> (Vec<PowerNetwork>, MtdcSystem) {
        let a = area("a", &[("A1", BusKind::Slack, 0.0), ("A2", BusKind::Pq, -300.0)], &[("A1", "A2", 0.05)]);
        let b = area(
            "b",
            &[("B1", BusKind::Slack, 0.0), ("B2", BusKind::Pq, -200.0), ("B3", BusKind::Pq, -100.0)],
            &[("B1", "B2", 0.04), ("B2", "B3", 0.06)],
        );
        let mut sys = MtdcSystem::new(640.0, 1000.0, vec![node("D1", 50.0), node("D2", 50.0), node("D3", 50.0)]);
        sys.lines.push(line("D12", "D1", "D2", 400.0));
        sys.lines.push(line("D23", "D2", "D3", 300.0));
        let mut cs = VscConverter::slack("CS", "D1", "a", "A2", 2000.0);
        cs.q_mvar = 50.0;
        let mut c2 = VscConverter::pq("C2", "D2", "b", "B2", 2000.0, 500.0);
        c2.q_mvar = 100.0;
        let c3 = VscConverter::pq("C3", "D3", "b", "B3", 2000.0, 300.0);
        sys.converters = vec![cs, c2, c3];
        for c in &mut sys.converters {
            c.loss_coeff = loss;
        }
        (vec![a, b], sys.finalize().unwrap())
    }

    #[test]
    fn zero_setpoints_decouple() {
        let (areas, mut sys) = three_terminal(0.0);
        for c in &mut sys.converters {
            c.p_mw = 0.0;
            c.q_mvar = 0.0;
        }
        let st = sequential_acdc_powerflow(&areas, &sys, &SequentialOptions::default()).unwrap();
        for (net, pf) in areas.iter().zip(&st.ac) {
            let plain = ac_powerflow(net, &[], &SequentialOptions::default().ac).unwrap();
            assert_eq!(plain.v, pf.v);
            assert_eq!(plain.theta, pf.theta);
        }
        assert!(st.dc.v.iter().all(|v| *v == 1.0));
    }

    /// Solves the whole coupled system at once with Newton on a
    /// finite-difference Jacobian and compares with the sequential result.
    #[test]
    fn matches_monolithic_solution() {
        let (areas, sys) = three_terminal(0.02);
        let st = sequential_acdc_powerflow(&areas, &sys, &SequentialOptions { tolerance: 1e-12, ..Default::default() })
            .unwrap();

        // Unknowns: (θ, V) at non-slack AC buses, DC voltages at D2, D3,
        // slack converter AC power.
        let ac_unknowns: Vec<(usize, usize)> = vec![(0, 1), (1, 1), (1, 2)];
        let ybus: Vec<_> = areas.iter().map(|n| n.ybus()).collect();
        let g = sys.conductance();
        let loss = 0.02;
        let residual = |z: &[f64]| -> Vec<f64> {
            let mut v: Vec<Vec<Complex64>> = areas.iter().map(|n| vec![Complex64::new(1.0, 0.0); n.n_bus()]).collect();
            for (k, &(a, b)) in ac_unknowns.iter().enumerate() {
                v[a][b] = Complex64::from_polar(z[2 * k + 1], z[2 * k]);
            }
            let vdc = [1.0, z[6], z[7]];
            let s_conv = [
                Complex64::new(z[8], 0.05),
                Complex64::new(0.5, 0.1),
                Complex64::new(0.3, 0.0),
            ];
            let at = [(0, 1), (1, 1), (1, 2)];
            let mut r = Vec::new();
            for (a, b) in ac_unknowns.iter().copied() {
                let vv = DVector::from_vec(v[a].clone());
                let i = &ybus[a] * &vv;
                let s_calc = v[a][b] * i[b].conj();
                let mut s_sched = Complex64::new(areas[a].pu(areas[a].buses[b].p_mw), areas[a].pu(areas[a].buses[b].q_mvar));
                for (k, &(ca, cb)) in at.iter().enumerate() {
                    if (ca, cb) == (a, b) {
                        s_sched += s_conv[k];
                    }
                }
                r.push(s_calc.re - s_sched.re);
                r.push(s_calc.im - s_sched.im);
            }
            for node in 0..3 {
                let (a, b) = at[node];
                let i2 = s_conv[node].norm_sqr() / v[a][b].norm_sqr();
                let p_dc = -(s_conv[node].re + loss * i2);
                let inj: f64 = (0..3).map(|j| g[(node, j)] * vdc[j]).sum::<f64>() * vdc[node];
                r.push(inj - p_dc);
            }
            r
        };
        let mut z = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, -0.8];
        for _ in 0..30 {
            let r0 = DVector::from_vec(residual(&z));
            if r0.amax() < 1e-13 {
                break;
            }
            let jac = DMatrix::from_fn(9, 9, |i, j| {
                let h = 1e-7;
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[j] += h;
                zm[j] -= h;
                (residual(&zp)[i] - residual(&zm)[i]) / (2.0 * h)
            });
            let dz = jac.lu().solve(&r0).unwrap();
            for i in 0..9 {
                z[i] -= dz[i];
            }
        }
        assert!(DVector::from_vec(residual(&z)).amax() < 1e-10);

        for (k, &(a, b)) in ac_unknowns.iter().enumerate() {
            assert!((st.ac[a].theta[b] - z[2 * k]).abs() < 1e-6);
            assert!((st.ac[a].v[b] - z[2 * k + 1]).abs() < 1e-6);
        }
        assert!((st.dc.v[1] - z[6]).abs() < 1e-6 && (st.dc.v[2] - z[7]).abs() < 1e-6);
        assert!((st.converter_s[0].re - z[8]).abs() < 1e-6);
        assert!(st.outer_iterations > 2);
    }

    #[test]
    fn slack_power_root_is_consistent() {
        let (p_dc, q, v, c) = (0.7, 0.2, 0.97, 0.03);
        let p = slack_ac_power(p_dc, q, v, c);
        assert!((p + c * (p * p + q * q) / (v * v) + p_dc).abs() < 1e-14);
    }
}
