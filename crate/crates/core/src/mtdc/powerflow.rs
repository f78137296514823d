use super::{ConverterMode, MtdcSystem};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct DcOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DcOptions {
    fn default() -> Self {
        Self { tolerance: 1e-12, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DcSolution {
    pub node_names: Vec<String>,
    /// Node voltages, pu.
    pub v: Vec<f64>,
    /// Net power injected into the DC network at each node, pu.
    pub injection: Vec<f64>,
    /// Line currents from → to, pu (zero for out-of-service lines).
    pub line_current: Vec<f64>,
    pub line_loss: Vec<f64>,
    /// DC power injected by the slack converter, pu.
    pub slack_power: f64,
    pub total_loss: f64,
    pub mismatch: f64,
    pub iterations: usize,
}

impl DcSolution {
    /// Largest nodal current imbalance, pu.
    pub fn current_balance(&self, sys: &MtdcSystem) -> f64 {
        let mut bal: Vec<f64> = self.injection.iter().zip(&self.v).map(|(p, v)| p / v).collect();
        for (k, l) in sys.lines.iter().enumerate() {
            let (f, t) = (sys.index[&l.from], sys.index[&l.to]);
            bal[f] -= self.line_current[k];
            bal[t] += self.line_current[k];
        }
        bal.into_iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Solves the DC network for the given per-converter DC-side power
/// injections (MW into the DC grid). The slack converter's entry is ignored;
/// its node is held at its voltage reference.
pub fn dc_powerflow(sys: &MtdcSystem, p_setpoints: &[f64], opts: &DcOptions) -> Result<DcSolution> {
    if p_setpoints.len() != sys.converters.len() {
        return Err(Error::Validation(format!(
            "mtdc: {} setpoints for {} converters",
            p_setpoints.len(),
            sys.converters.len()
        )));
    }
    let n = sys.nodes.len();
    let ks = sys.slack_converter();
    let slack_conv = &sys.converters[ks];
    if slack_conv.mode != ConverterMode::Slack {
        return Err(Error::Validation("mtdc: no slack converter".into()));
    }
    let s = sys.node_index(&slack_conv.dc_node)?;
    let mut p = vec![0.0; n];
    for (k, c) in sys.converters.iter().enumerate() {
        if k != ks {
            p[sys.node_index(&c.dc_node)?] += sys.pu(p_setpoints[k]);
        }
    }
    let g = sys.conductance();
    let free: Vec<usize> = (0..n).filter(|&i| i != s).collect();
    let mut v = vec![slack_conv.v_dc_ref; n];

    let mismatch = |v: &[f64]| -> Vec<f64> {
        free.iter()
            .map(|&i| {
                let gi: f64 = (0..n).map(|j| g[(i, j)] * v[j]).sum();
                p[i] - v[i] * gi
            })
            .collect()
    };

    let mut iterations = 0;
    let mut f = mismatch(&v);
    let mut worst = f.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    while worst > opts.tolerance {
        if iterations >= opts.max_iterations {
            let at = free[f.iter().enumerate().fold(0, |b, (i, x)| if x.abs() > f[b].abs() { i } else { b })];
            return Err(Error::NonConvergence {
                solver: "DC powerflow",
                iterations,
                mismatch: worst,
                location: sys.nodes[at].name.clone(),
            });
        }
        let m = free.len();
        let jac = DMatrix::from_fn(m, m, |a, b| {
            let (i, j) = (free[a], free[b]);
            if i == j {
                (0..n).map(|k| g[(i, k)] * v[k]).sum::<f64>() + g[(i, i)] * v[i]
            } else {
                v[i] * g[(i, j)]
            }
        });
        let dv = jac
            .lu()
            .solve(&DVector::from_vec(f.clone()))
            .ok_or(Error::SingularJacobian("DC powerflow"))?;
        for (a, &i) in free.iter().enumerate() {
            v[i] += dv[a];
        }
        iterations += 1;
        let low = (0..n).fold(s, |b, i| if v[i] < v[b] { i } else { b });
        if !(v[low] > 0.1) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::VoltageCollapse { node: sys.nodes[low].name.clone() });
        }
        f = mismatch(&v);
        worst = f.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    }

    let mut line_current = vec![0.0; sys.lines.len()];
    let mut line_loss = vec![0.0; sys.lines.len()];
    for (k, l) in sys.lines.iter().enumerate().filter(|(_, l)| l.in_service) {
        let (a, b) = (sys.index[&l.from], sys.index[&l.to]);
        let r = sys.line_r_pu(l);
        line_current[k] = (v[a] - v[b]) / r;
        line_loss[k] = r * line_current[k] * line_current[k];
    }
    let injection: Vec<f64> = (0..n).map(|i| v[i] * (0..n).map(|j| g[(i, j)] * v[j]).sum::<f64>()).collect();
    let slack_power = injection[s] - (p[s]);
    Ok(DcSolution {
        node_names: sys.nodes.iter().map(|n| n.name.clone()).collect(),
        v,
        injection,
        line_current,
        total_loss: line_loss.iter().sum(),
        line_loss,
        slack_power,
        mismatch: worst,
        iterations,
    })
}
