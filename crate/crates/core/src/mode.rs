//! Oscillation modes shared by the modal, sysid and sdc modules.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Oscillatory,
    /// Real eigenvalue: `freq_hz` is 0.
    Real,
}

/// One eigenvalue `-sigma ± j·2π·freq_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub freq_hz: f64,
    /// Decay rate in 1/s; positive means stable.
    pub sigma: f64,
    pub damping_ratio: f64,
    /// Relative energy, normalized so the strongest mode of an estimate is 1.
    pub energy: f64,
    pub kind: ModeKind,
}

impl Mode {
    pub fn new(freq_hz: f64, sigma: f64) -> Self {
        let omega = 2.0 * PI * freq_hz.abs();
        let kind = if freq_hz == 0.0 { ModeKind::Real } else { ModeKind::Oscillatory };
        Self {
            freq_hz: freq_hz.abs(),
            sigma,
            damping_ratio: damping_ratio(sigma, omega),
            energy: 1.0,
            kind,
        }
    }

    /// From a continuous-time eigenvalue; the sign of the imaginary part is ignored.
    pub fn from_eigenvalue(lambda: Complex64) -> Self {
        if lambda.im == 0.0 {
            return Self::new(0.0, -lambda.re);
        }
        Self::new(lambda.im.abs() / (2.0 * PI), -lambda.re)
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.freq_hz
    }

    /// Upper-half-plane eigenvalue.
    pub fn eigenvalue(&self) -> Complex64 {
        Complex64::new(-self.sigma, self.omega())
    }

    pub fn is_oscillatory(&self) -> bool {
        self.kind == ModeKind::Oscillatory
    }

    pub fn is_stable(&self) -> bool {
        self.sigma > 0.0
    }

    pub fn with_energy(mut self, energy: f64) -> Self {
        self.energy = energy;
        self
    }
}

/// ζ = σ / √(σ² + ω²); a zero eigenvalue is reported as ζ = 0.
pub fn damping_ratio(sigma: f64, omega: f64) -> f64 {
    let mag = sigma.hypot(omega);
    if mag == 0.0 {
        0.0
    } else {
        sigma / mag
    }
}

/// Decay rate giving damping ratio `zeta` at damped frequency `omega`.
pub fn sigma_for(omega: f64, zeta: f64) -> f64 {
    omega * zeta / (1.0 - zeta * zeta).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wi_open_loop_pole() {
        let m = Mode::from_eigenvalue(Complex64::new(-0.266, 4.69));
        assert!((m.damping_ratio - 0.0566).abs() < 1e-4);
        assert!((m.freq_hz - 0.7464).abs() < 1e-4);
        assert!((m.damping_ratio * m.sigma.hypot(m.omega()) - m.sigma).abs() < 1e-12);
    }

    #[test]
    fn real_pole_is_flagged() {
        let m = Mode::from_eigenvalue(Complex64::new(-2.0, 0.0));
        assert_eq!(m.kind, ModeKind::Real);
        assert_eq!(m.freq_hz, 0.0);
        assert_eq!(m.damping_ratio, 1.0);
    }
}
