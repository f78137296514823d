//! Supplementary damping controllers: washout plus cascaded lead-lag plus
//! gain, the pole-placement design recipe and closed-loop checks.

mod design;

pub use design::{
    closed_loop_poles, design_sdc, required_sigma, ClosedLoop, DesignOptions, DesignTarget, PhaseMatching,
};

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

fn default_tw() -> f64 {
    10.0
}

/// `H(s) = K·((1+sT1)/(1+sT2))^m · sTw/(1+sTw)`, K in MW per Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdcParams {
    pub k: f64,
    pub t1: f64,
    pub t2: f64,
    #[serde(default = "default_tw")]
    pub tw: f64,
    pub m: usize,
    /// Output limit, MW; defaults to 10% of the host converter rating.
    #[serde(default)]
    pub output_limit_mw: Option<f64>,
}

impl SdcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0 && self.t2 > 0.0 && self.tw > 0.0) || self.m == 0 || !self.k.is_finite() {
            return Err(Error::Validation(format!("SDC needs T1, T2, Tw > 0, m ≥ 1 and finite K: {self:?}")));
        }
        Ok(())
    }

    pub fn washout(&self, s: Complex64) -> Complex64 {
        s * self.tw / (s * self.tw + 1.0)
    }

    pub fn lead_lag(&self, s: Complex64) -> Complex64 {
        (s * self.t1 + 1.0) / (s * self.t2 + 1.0)
    }

    /// Numerator and denominator of H in descending powers of s.
    pub fn polynomials(&self) -> (Vec<f64>, Vec<f64>) {
        use crate::poly::{mul, pow};
        let num = mul(&pow(&[self.t1, 1.0], self.m), &[self.k * self.tw, 0.0]);
        let den = mul(&pow(&[self.t2, 1.0], self.m), &[self.tw, 1.0]);
        (num, den)
    }
}

/// Exact complex value of the controller transfer function at `s`.
pub fn eval_sdc(p: &SdcParams, s: Complex64) -> Complex64 {
    p.k * p.lead_lag(s).powu(p.m as u32) * p.washout(s)
}

/// Time-domain realization of an [`SdcParams`] controller.
///
/// States: washout filter then one state per lead-lag stage. The output is
/// the power-reference modulation `−H·Δf`, clamped to `±limit`.
#[derive(Debug, Clone)]
pub struct SdcBlock {
    pub params: SdcParams,
    pub limit_mw: f64,
}

impl SdcBlock {
    pub fn new(params: SdcParams, rating_mw: f64) -> Self {
        let limit_mw = params.output_limit_mw.unwrap_or(0.1 * rating_mw);
        Self { params, limit_mw }
    }

    pub fn n_states(&self) -> usize {
        1 + self.params.m
    }

    /// State giving zero output for a constant input `u0`.
    pub fn initial_state(&self, u0: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.n_states()];
        x[0] = u0;
        x
    }

    /// Writes derivatives and returns the output, MW. `u` is the feedback
    /// frequency deviation, Hz.
    pub fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]) -> f64 {
        let p = &self.params;
        dx[0] = (u - x[0]) / p.tw;
        let mut sig = u - x[0];
        for i in 0..p.m {
            let z = x[1 + i];
            dx[1 + i] = (sig - z) / p.t2;
            sig = z + p.t1 / p.t2 * (sig - z);
        }
        (-p.k * sig).clamp(-self.limit_mw, self.limit_mw)
    }

    pub fn output(&self, x: &[f64], u: f64) -> f64 {
        let mut dx = vec![0.0; self.n_states()];
        self.rhs(x, u, &mut dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(k: f64, t1: f64, t2: f64, m: usize) -> SdcParams {
        SdcParams { k, t1, t2, tw: 10.0, m, output_limit_mw: None }
    }

    #[test]
    fn washout_blocks_dc() {
        assert_eq!(eval_sdc(&params(5.0, 0.1, 0.3, 2), Complex64::new(0.0, 0.0)).norm(), 0.0);
    }

    #[test]
    fn washout_corner() {
        let p = params(3.0, 0.2, 0.2, 1);
        let h = eval_sdc(&p, Complex64::new(0.0, 1.0 / p.tw));
        assert!((h.norm() - 3.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((h.arg().to_degrees() - 45.0).abs() < 1e-10);
    }

    /// φ = 30° ⇒ α = (1 − sin φ)/(1 + sin φ) = 1/3; each block adds 30° at ω.
    #[test]
    fn thirty_degree_lead_block() {
        let phi = 30f64.to_radians();
        let alpha = (1.0 - phi.sin()) / (1.0 + phi.sin());
        assert!((alpha - 1.0 / 3.0).abs() < 1e-12);
        let w = 2.0 * PI * 0.84;
        let t1 = 1.0 / (w * alpha.sqrt());
        let p = params(1.0, t1, alpha * t1, 2);
        let ll = p.lead_lag(Complex64::new(0.0, w));
        assert!((ll.arg().to_degrees() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn polynomials_agree_with_eval() {
        let p = params(7.0, 0.15, 0.4, 3);
        let (n, d) = p.polynomials();
        let s = Complex64::new(-0.3, 2.1);
        let h = crate::poly::eval(&n, s) / crate::poly::eval(&d, s);
        assert!((h - eval_sdc(&p, s)).norm() < 1e-12 * h.norm());
    }

    #[test]
    fn constant_input_gives_zero_steady_output() {
        let b = SdcBlock::new(params(200.0, 0.15, 0.24, 2), 2000.0);
        let u = 0.05;
        let mut x = b.initial_state(u);
        let dt = 1e-3;
        let mut dx = vec![0.0; b.n_states()];
        for _ in 0..60_000 {
            // Heun is adequate for this linear check.
            b.rhs(&x, u, &mut dx);
            let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + dt * d).collect();
            let mut dx2 = vec![0.0; b.n_states()];
            b.rhs(&xp, u, &mut dx2);
            for i in 0..x.len() {
                x[i] += 0.5 * dt * (dx[i] + dx2[i]);
            }
        }
        let y = b.output(&x, u);
        assert!(y.abs() < 1e-9, "{y}");
    }

    #[test]
    fn output_is_clamped() {
        let b = SdcBlock::new(params(1e6, 0.15, 0.24, 1), 1000.0);
        let x = b.initial_state(0.0);
        assert_eq!(b.output(&x, 1.0), -100.0);
        assert_eq!(b.output(&x, -1.0), 100.0);
    }
}
