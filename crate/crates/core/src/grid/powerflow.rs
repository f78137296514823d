use super::{BusKind, PowerNetwork};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct PowerflowOptions {
    /// Max |ΔP|, |ΔQ| at non-slack buses, pu.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial (|V|, θ) per bus; flat start from bus data when `None`.
    pub warm_start: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for PowerflowOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 30, warm_start: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchFlow {
    pub name: String,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerflowSolution {
    pub bus_names: Vec<String>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Net injection into the branch network (generation + fixed + external − load), pu.
    pub p_net: Vec<f64>,
    pub q_net: Vec<f64>,
    /// Power drawn by constant-impedance loads, pu.
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    /// Power supplied by the machines/GFMs at each bus, pu.
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub branches: Vec<BranchFlow>,
    pub mismatch: f64,
    pub iterations: usize,
}

impl PowerflowSolution {
    pub fn voltage(&self, i: usize) -> Complex64 {
        Complex64::from_polar(self.v[i], self.theta[i])
    }

    pub fn total_branch_loss(&self) -> f64 {
        self.branches.iter().map(|b| b.loss).sum()
    }
}

fn scheduled(net: &PowerNetwork, external: &[Complex64]) -> Vec<Complex64> {
    let mut s: Vec<Complex64> = net
        .buses
        .iter()
        .map(|b| Complex64::new(net.pu(b.p_mw), net.pu(b.q_mvar)))
        .collect();
    for m in &net.machines {
        s[net.index[&m.bus]].re += net.pu(m.dispatch_mw);
    }
    for g in &net.gfms {
        s[net.index[&g.bus]].re += net.pu(g.dispatch_mw);
    }
    for (si, e) in s.iter_mut().zip(external) {
        *si += e;
    }
    s
}

/// Newton-Raphson powerflow in polar form. `external` holds additional
/// per-bus complex power injections in pu (e.g. converter injections); it may
/// be empty.
pub fn ac_powerflow(
    net: &PowerNetwork,
    external: &[Complex64],
    opts: &PowerflowOptions,
) -> Result<PowerflowSolution> {
    let n = net.n_bus();
    if !external.is_empty() && external.len() != n {
        return Err(Error::Validation(format!(
            "external injection vector has {} entries, network {} has {n} buses",
            external.len(),
            net.name
        )));
    }
    let ybus = net.ybus();
    let s_sched = scheduled(net, external);

    let (mut vm, mut va): (Vec<f64>, Vec<f64>) = match &opts.warm_start {
        Some((v, a)) if v.len() == n && a.len() == n => (v.clone(), a.clone()),
        _ => (net.buses.iter().map(|b| b.v).collect(), net.buses.iter().map(|b| b.angle).collect()),
    };
    for (i, b) in net.buses.iter().enumerate() {
        if b.kind != BusKind::Pq {
            vm[i] = b.v;
        }
        if b.kind == BusKind::Slack {
            va[i] = b.angle;
        }
    }

    let pvpq: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| net.buses[i].kind == BusKind::Pq).collect();
    let npv = pvpq.len();
    let dim = npv + pq.len();

    let mut iterations = 0;
    loop {
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
        let vvec = DVector::from_vec(v.clone());
        let ibus = &ybus * &vvec;
        let s_calc: Vec<Complex64> = (0..n).map(|i| v[i] * ibus[i].conj()).collect();

        let mut f = DVector::<f64>::zeros(dim);
        let mut worst = (0.0f64, 0usize);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s_calc[i].re - s_sched[i].re;
            if f[r].abs() > worst.0 {
                worst = (f[r].abs(), i);
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            f[npv + r] = s_calc[i].im - s_sched[i].im;
            if f[npv + r].abs() > worst.0 {
                worst = (f[npv + r].abs(), i);
            }
        }
        if worst.0 <= opts.tolerance {
            return Ok(finish(net, &ybus, &s_sched, vm, va, worst.0, iterations));
        }
        if iterations >= opts.max_iterations || !worst.0.is_finite() {
            return Err(Error::NonConvergence {
                solver: "ac_powerflow",
                iterations,
                mismatch: worst.0,
                location: format!("{} bus {}", net.name, net.buses[worst.1].name),
            });
        }

        // dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V)),
        // dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|)
        let mut j = DMatrix::<f64>::zeros(dim, dim);
        let unit: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        let ds = |row: usize, col: usize, wrt_angle: bool| -> Complex64 {
            let ycol = ybus[(row, col)];
            if wrt_angle {
                let diag = if row == col { ibus[row] } else { Complex64::new(0.0, 0.0) };
                Complex64::new(0.0, 1.0) * v[row] * (diag - ycol * v[col]).conj()
            } else {
                let mut val = v[row] * (ycol * unit[col]).conj();
                if row == col {
                    val += ibus[row].conj() * unit[row];
                }
                val
            }
        };
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                j[(r, c)] = ds(i, k, true).re;
            }
            for (c, &k) in pq.iter().enumerate() {
                j[(r, npv + c)] = ds(i, k, false).re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                j[(npv + r, c)] = ds(i, k, true).im;
            }
            for (c, &k) in pq.iter().enumerate() {
                j[(npv + r, npv + c)] = ds(i, k, false).im;
            }
        }
        let dx = j.lu().solve(&(-f)).ok_or(Error::SingularJacobian("ac_powerflow"))?;
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian("ac_powerflow"));
        }
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += dx[npv + r];
        }
        iterations += 1;
    }
}

fn finish(
    net: &PowerNetwork,
    ybus: &DMatrix<Complex64>,
    s_sched: &[Complex64],
    vm: Vec<f64>,
    va: Vec<f64>,
    mismatch: f64,
    iterations: usize,
) -> PowerflowSolution {
    let n = net.n_bus();
    let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
    let vvec = DVector::from_vec(v.clone());
    let ybr = net.branch_ybus(&[]);
    let i_branch = &ybr * &vvec;
    let i_total = ybus * &vvec;
    let s_net: Vec<Complex64> = (0..n).map(|i| v[i] * i_branch[i].conj()).collect();
    let s_ext: Vec<Complex64> = (0..n).map(|i| v[i] * i_total[i].conj()).collect();
    let yl = net.load_admittance();
    let s_load: Vec<Complex64> = (0..n).map(|i| yl[i].conj() * vm[i] * vm[i]).collect();

    // Sources deliver whatever the buses absorb beyond their fixed schedule;
    // the schedule includes unit dispatch, so add it back.
    let mut dispatch = vec![0.0; n];
    for m in &net.machines {
        dispatch[net.index[&m.bus]] += net.pu(m.dispatch_mw);
    }
    for g in &net.gfms {
        dispatch[net.index[&g.bus]] += net.pu(g.dispatch_mw);
    }
    let s_gen: Vec<Complex64> = (0..n)
        .map(|i| s_ext[i] - s_sched[i] + Complex64::new(dispatch[i], 0.0))
        .collect();

    let branches = net
        .branches
        .iter()
        .filter(|b| b.in_service)
        .map(|br| {
            let f = net.index[&br.from];
            let t = net.index[&br.to];
            let (ys, ysh) = PowerNetwork::branch_admittance(br);
            let i_ft = (ys + ysh) * v[f] - ys * v[t];
            let i_tf = (ys + ysh) * v[t] - ys * v[f];
            let s_ft = v[f] * i_ft.conj();
            let s_tf = v[t] * i_tf.conj();
            BranchFlow {
                name: br.name.clone(),
                p_from: s_ft.re,
                q_from: s_ft.im,
                p_to: s_tf.re,
                q_to: s_tf.im,
                loss: s_ft.re + s_tf.re,
            }
        })
        .collect();

    PowerflowSolution {
        bus_names: net.buses.iter().map(|b| b.name.clone()).collect(),
        v: vm,
        theta: va,
        p_net: s_net.iter().map(|s| s.re).collect(),
        q_net: s_net.iter().map(|s| s.im).collect(),
        p_load: s_load.iter().map(|s| s.re).collect(),
        q_load: s_load.iter().map(|s| s.im).collect(),
        p_gen: s_gen.iter().map(|s| s.re).collect(),
        q_gen: s_gen.iter().map(|s| s.im).collect(),
        branches,
        mismatch,
        iterations,
    }
}
