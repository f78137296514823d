use super::{eval_sdc, SdcParams};
use crate::error::{Error, Result};
use crate::mode::Mode;
use crate::poly;
use crate::sysid::TransferFunctionModel;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Smallest decay rate giving damping ratio `zeta` at frequency `omega`:
/// `σ = ωζ/√(1−ζ²)`.
pub fn required_sigma(omega: f64, zeta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&zeta) {
        return Err(Error::InfeasibleDesign(format!("damping ratio {zeta} outside [0, 1)")));
    }
    Ok(omega * zeta / (1.0 - zeta * zeta).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DesignTarget {
    /// Open-loop dominant pole `−σ_OL + jω_OL` (upper half plane).
    pub lambda_ol: Complex64,
    pub zeta_target: f64,
    /// Closed-loop decay rate; defaults to 1.1 × the required minimum.
    #[serde(default)]
    pub sigma_cl: Option<f64>,
}

impl DesignTarget {
    pub fn new(lambda_ol: Complex64, zeta_target: f64) -> Self {
        Self { lambda_ol, zeta_target, sigma_cl: None }
    }

    pub fn omega(&self) -> f64 {
        self.lambda_ol.im.abs()
    }

    /// Closed-loop pole at the open-loop frequency.
    pub fn lambda_cl(&self) -> Result<Complex64> {
        if !(self.zeta_target > 0.0 && self.zeta_target < 1.0) {
            return Err(Error::InfeasibleDesign(format!("target damping {} outside (0, 1)", self.zeta_target)));
        }
        let w = self.omega();
        if !(w > 0.0) {
            return Err(Error::InfeasibleDesign("open-loop pole must be oscillatory".into()));
        }
        let sigma = match self.sigma_cl {
            Some(s) => s,
            None => 1.1 * required_sigma(w, self.zeta_target)?,
        };
        if !(sigma > 0.0) {
            return Err(Error::InfeasibleDesign(format!("closed-loop pole −{sigma} ± j{w} not in the left half plane")));
        }
        Ok(Complex64::new(-sigma, w))
    }
}

/// How the lead-lag ratio α is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMatching {
    /// α solved numerically so that washout plus lead-lag phase at λ_CL
    /// equals ∠H exactly; the design then places the pole exactly.
    #[default]
    Exact,
    /// Closed-form α = (1 − sin φ)/(1 + sin φ), i.e. the block phase at jω.
    ImaginaryAxis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOptions {
    #[serde(default = "default_max_phase")]
    pub max_phase_per_block_deg: f64,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_tw")]
    pub tw: f64,
    #[serde(default)]
    pub phase_matching: PhaseMatching,
    #[serde(default)]
    pub output_limit_mw: Option<f64>,
}

fn default_max_phase() -> f64 {
    55.0
}
fn default_m_max() -> usize {
    4
}
fn default_tw() -> f64 {
    10.0
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            max_phase_per_block_deg: default_max_phase(),
            m_max: default_m_max(),
            tw: default_tw(),
            phase_matching: PhaseMatching::Exact,
            output_limit_mw: None,
        }
    }
}

fn wrap(a: f64) -> f64 {
    crate::grid::wrap_angle(a)
}

/// Pole-placement design: chooses `H` so that `1 + G(λ_CL)·H(λ_CL) = 0`.
pub fn design_sdc(g_ol: &TransferFunctionModel, target: &DesignTarget, opts: &DesignOptions) -> Result<SdcParams> {
    let lambda = target.lambda_cl()?;
    let w = lambda.im;
    let g = g_ol.eval(lambda);
    if !(g.norm() > 0.0) || !g.norm().is_finite() {
        return Err(Error::InfeasibleDesign(format!("open-loop response at λ_CL is {g}")));
    }
    let h_req = -1.0 / g;
    let phi_h = h_req.arg();
    let max_phase = opts.max_phase_per_block_deg.to_radians();
    let m = ((phi_h.abs() / max_phase - 1e-12).ceil() as usize).max(1);
    if m > opts.m_max {
        return Err(Error::InfeasibleDesign(format!(
            "required phase {:.1}° needs {m} blocks of ≤ {:.0}°, more than the allowed {}",
            phi_h.to_degrees(),
            opts.max_phase_per_block_deg,
            opts.m_max
        )));
    }

    let shape = |alpha: f64| -> SdcParams {
        let t1 = 1.0 / (w * alpha.sqrt());
        SdcParams { k: 1.0, t1, t2: alpha * t1, tw: opts.tw, m, output_limit_mw: opts.output_limit_mw }
    };
    let alpha = match opts.phase_matching {
        PhaseMatching::ImaginaryAxis => {
            let phi = phi_h / m as f64;
            (1.0 - phi.sin()) / (1.0 + phi.sin())
        }
        PhaseMatching::Exact => {
            let washout = shape(1.0).washout(lambda).arg();
            let psi = wrap(phi_h - washout) / m as f64;
            solve_alpha(|a| shape(a).lead_lag(lambda).arg() - psi)?
        }
    };
    let mut p = shape(alpha);
    let unit = eval_sdc(&p, lambda).norm();
    p.k = h_req.norm() / unit;
    p.validate()?;
    Ok(p)
}

/// Bisection on ln α; the lead-lag phase decreases monotonically in α.
fn solve_alpha<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let (flo, fhi) = (f(lo.exp()), f(hi.exp()));
    if flo < 0.0 || fhi > 0.0 {
        return Err(Error::InfeasibleDesign("per-block phase beyond what a lead-lag stage can provide".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedLoop {
    pub poles: Vec<Complex64>,
    /// One entry per real pole or conjugate pair.
    pub modes: Vec<Mode>,
    /// Lowest-damped oscillatory mode.
    pub dominant: Option<Mode>,
    pub unstable: bool,
}

/// Roots of `den_G·den_H + num_G·num_H`.
pub fn closed_loop_poles(g_ol: &TransferFunctionModel, p: &SdcParams) -> ClosedLoop {
    let poles = if p.k == 0.0 {
        poly::roots(&g_ol.den)
    } else {
        let (nh, dh) = p.polynomials();
        poly::roots(&poly::add(&poly::mul(&g_ol.den, &dh), &poly::mul(&g_ol.num, &nh)))
    };
    summarize(poles)
}

pub(crate) fn summarize(poles: Vec<Complex64>) -> ClosedLoop {
    let modes: Vec<Mode> = poles.iter().filter(|z| z.im >= 0.0).map(|z| Mode::from_eigenvalue(*z)).collect();
    let dominant = modes
        .iter()
        .filter(|m| m.is_oscillatory())
        .min_by(|a, b| a.damping_ratio.total_cmp(&b.damping_ratio))
        .copied();
    let unstable = poles.iter().any(|z| z.re > 0.0);
    ClosedLoop { poles, modes, dominant, unstable }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn second_order(sigma: f64, w: f64, gain: f64) -> TransferFunctionModel {
        TransferFunctionModel::new(vec![gain, 0.0], vec![1.0, 2.0 * sigma, sigma * sigma + w * w])
    }

    #[test]
    fn required_sigma_values() {
        assert_eq!(required_sigma(4.69, 0.0).unwrap(), 0.0);
        assert!((required_sigma(4.69, 0.15).unwrap() - 0.7116).abs() < 5e-5);
        assert!(required_sigma(4.69, 0.15).unwrap() < 0.8);
        assert!((required_sigma(2.0 * PI * 0.84, 0.12).unwrap() - 0.6380).abs() < 5e-5);
        assert!(required_sigma(1.0, 1.0).is_err());
    }

    #[test]
    fn placement_residual_and_identity() {
        let g = second_order(0.266, 4.69, 0.002);
        let t = DesignTarget { sigma_cl: Some(0.8), ..DesignTarget::new(Complex64::new(-0.266, 4.69), 0.15) };
        let p = design_sdc(&g, &t, &DesignOptions::default()).unwrap();
        let lam = Complex64::new(-0.8, 4.69);
        let r = (1.0 + g.eval(lam) * eval_sdc(&p, lam)).norm();
        assert!(r < 1e-6, "{r}");
        assert!((p.t1 * p.t2 * 4.69 * 4.69 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_phase_gives_unit_shape_in_imaginary_axis_mode() {
        // G(λ) real and negative ⇒ ∠H = 0.
        let lam = Complex64::new(-0.5, 3.0);
        let g = TransferFunctionModel::new(vec![-1.0], vec![1.0]);
        let t = DesignTarget { sigma_cl: Some(0.5), ..DesignTarget::new(Complex64::new(-0.1, 3.0), 0.1) };
        let opts = DesignOptions { phase_matching: PhaseMatching::ImaginaryAxis, ..Default::default() };
        let p = design_sdc(&g, &t, &opts).unwrap();
        assert_eq!(p.m, 1);
        assert!((p.t1 - p.t2).abs() < 1e-12);
        let expect_k = 1.0 / p.washout(lam).norm();
        assert!((p.k - expect_k).abs() < 1e-9);
    }

    #[test]
    fn exact_mode_with_zero_required_phase_only_cancels_washout() {
        // Static negative plant: ∠H = 0, so the lead-lag only has to undo
        // the small washout lead at λ_CL.
        let lam = Complex64::new(-0.5, 3.0);
        let g = TransferFunctionModel::new(vec![-0.02], vec![1.0]);
        let t = DesignTarget { sigma_cl: Some(0.5), ..DesignTarget::new(Complex64::new(-0.1, 3.0), 0.1) };
        let p = design_sdc(&g, &t, &DesignOptions::default()).unwrap();
        assert_eq!(p.m, 1);
        assert!(p.t2 > p.t1 && p.t2 / p.t1 < 1.1);
        let r = (1.0 + g.eval(lam) * eval_sdc(&p, lam)).norm();
        assert!(r < 1e-9);
    }

    #[test]
    fn m_is_smallest_within_budget() {
        let g = second_order(0.266, 4.69, 0.002);
        let t = DesignTarget { sigma_cl: Some(0.8), ..DesignTarget::new(Complex64::new(-0.266, 4.69), 0.15) };
        let p = design_sdc(&g, &t, &DesignOptions::default()).unwrap();
        let phi = (-1.0 / g.eval(Complex64::new(-0.8, 4.69))).arg().abs().to_degrees();
        assert!(phi / p.m as f64 <= 55.0);
        assert!(p.m == 1 || phi / (p.m - 1) as f64 > 55.0);
    }

    #[test]
    fn infeasible_when_too_many_blocks() {
        let g = second_order(0.266, 4.69, 0.002);
        let t = DesignTarget { sigma_cl: Some(0.8), ..DesignTarget::new(Complex64::new(-0.266, 4.69), 0.15) };
        let opts = DesignOptions { max_phase_per_block_deg: 1.0, ..Default::default() };
        assert!(matches!(design_sdc(&g, &t, &opts), Err(Error::InfeasibleDesign(_))));
    }

    #[test]
    fn ei_lead_lag_pair_is_near_identity() {
        let w = 2.0 * PI * 0.84;
        let prod = 0.1483 * 0.2409;
        assert!((prod * w * w - 1.0).abs() < 0.005);
    }

    #[test]
    fn closed_loop_with_zero_gain_is_open_loop() {
        let g = second_order(0.266, 4.69, 1.0);
        let p = SdcParams { k: 0.0, t1: 0.1, t2: 0.3, tw: 10.0, m: 2, output_limit_mw: None };
        let cl = closed_loop_poles(&g, &p);
        assert_eq!(cl.poles.len(), 2);
        let d = cl.dominant.unwrap();
        assert!((d.sigma - 0.266).abs() < 1e-9 && (d.omega() - 4.69).abs() < 1e-9);
    }

    #[test]
    fn static_feedback_on_first_order_plant() {
        // H = 3 realized with T1 = T2 and a washout far below the pole.
        let g = TransferFunctionModel::new(vec![1.0], vec![1.0, 1.0]);
        let char_poly = poly::add(&g.den, &poly::mul(&g.num, &[3.0]));
        let r = poly::roots(&char_poly);
        assert!((r[0] - Complex64::new(-4.0, 0.0)).norm() < 1e-12);
        let p = SdcParams { k: 3.0, t1: 0.5, t2: 0.5, tw: 1e6, m: 1, output_limit_mw: None };
        let cl = closed_loop_poles(&g, &p);
        assert!(cl.poles.iter().any(|z| (z - Complex64::new(-4.0, 0.0)).norm() < 1e-5));
        assert!(!cl.unstable);
    }

    /// Synthetic plants: designs reach the damping target at the open-loop
    /// frequency when checked against the closed-loop characteristic roots.
    #[test]
    fn closed_loop_targets_met() {
        for (zeta_ol, f, zeta_t) in [(0.034, 0.84, 0.12), (0.056, 0.7464, 0.15), (0.03, 0.5, 0.12)] {
            let w = 2.0 * PI * f;
            let sigma = required_sigma(w, zeta_ol).unwrap();
            let g = second_order(sigma, w, 0.003);
            let p = design_sdc(&g, &DesignTarget::new(Complex64::new(-sigma, w), zeta_t), &Default::default()).unwrap();
            let cl = closed_loop_poles(&g, &p);
            let target = cl
                .modes
                .iter()
                .filter(|m| m.is_oscillatory())
                .min_by(|a, b| (a.omega() - w).abs().total_cmp(&(b.omega() - w).abs()))
                .unwrap();
            assert!((target.damping_ratio / zeta_t - 1.0) > -0.1, "{target:?}");
            assert!((target.omega() / w - 1.0).abs() < 0.05);
            assert!(!cl.unstable);
        }
    }
}
