use crate::mode::Mode;
use crate::poly;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    /// Largest relative magnitude error over the fitted bins.
    pub max_mag_error: f64,
    pub max_phase_error_deg: f64,
    pub passed: bool,
    /// Unstable poles reflected into the left half plane.
    pub flipped_poles: usize,
    pub iterations: usize,
}

/// Continuous-time SISO model `num(s)/den(s)`, coefficients in descending
/// powers of s, denominator monic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunctionModel {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<FitQuality>,
}

impl TransferFunctionModel {
    /// Normalizes the denominator to be monic. Panics on a zero denominator.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Self {
        let den = poly::trim(&den);
        let lead = den[0];
        assert!(lead != 0.0, "zero denominator");
        Self {
            num: poly::trim(&num).iter().map(|c| c / lead).collect(),
            den: den.iter().map(|c| c / lead).collect(),
            quality: None,
        }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    pub fn freq_response(&self, f_hz: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, 2.0 * std::f64::consts::PI * f_hz))
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly::roots(&self.num)
    }

    pub fn order(&self) -> usize {
        poly::degree(&self.den)
    }

    pub fn is_proper(&self) -> bool {
        poly::degree(&self.num) <= poly::degree(&self.den)
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.re < 0.0)
    }
}

/// Denominator roots as modes, lowest damping first.
pub fn dominant_poles(tf: &TransferFunctionModel) -> Vec<Mode> {
    let mut modes: Vec<Mode> = tf.poles().into_iter().filter(|p| p.im >= 0.0).map(Mode::from_eigenvalue).collect();
    modes.sort_by(|a, b| a.damping_ratio.total_cmp(&b.damping_ratio));
    modes
}

/// Simulates a proper model on a uniformly sampled input with RK4 in
/// controllable canonical form, interpolating the input linearly between
/// samples. Zero initial state.
pub fn simulate_tf(tf: &TransferFunctionModel, u: &[f64], dt: f64) -> Vec<f64> {
    assert!(tf.is_proper(), "improper model");
    let n = tf.order();
    let a = &tf.den[1..];
    let mut b = vec![0.0; n + 1 - tf.num.len()];
    b.extend_from_slice(&tf.num);
    let d = b[0];
    // y = Σ c_i x_i + d·u with x_{n-1}' = u − Σ a_k x_{n-k}.
    let c: Vec<f64> = (0..n).map(|i| b[n - i] - d * a[n - 1 - i]).collect();
    let f = |x: &[f64], u: f64, dx: &mut [f64]| {
        for i in 0..n.saturating_sub(1) {
            dx[i] = x[i + 1];
        }
        if n > 0 {
            dx[n - 1] = u - (0..n).map(|i| a[n - 1 - i] * x[i]).sum::<f64>();
        }
    };
    let mut x = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut y = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        y.push(c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum::<f64>() + d * u[k]);
        let u0 = u[k];
        let u1 = *u.get(k + 1).unwrap_or(&u0);
        let um = 0.5 * (u0 + u1);
        f(&x, u0, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        f(&tmp, um, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        f(&tmp, um, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        f(&tmp, u1, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode::ModeKind;

    #[test]
    fn real_poles_are_not_oscillatory() {
        let tf = TransferFunctionModel::new(vec![1.0], poly::mul(&[1.0, 1.0], &[1.0, 2.0]));
        let m = dominant_poles(&tf);
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|m| m.kind == ModeKind::Real && m.freq_hz == 0.0));
    }

    #[test]
    fn wi_denominator_mode() {
        let tf = TransferFunctionModel::new(vec![1.0], vec![1.0, 0.532, 22.066]);
        let m = dominant_poles(&tf);
        assert_eq!(m.len(), 1);
        assert!((m[0].freq_hz - 0.7464).abs() < 1e-4);
        assert!((m[0].damping_ratio - 0.0566).abs() < 1e-4);
    }

    #[test]
    fn lowest_damping_listed_first() {
        let w = 2.0 * std::f64::consts::PI * 0.84;
        let s = crate::mode::sigma_for(w, 0.034);
        let den = poly::mul(&[1.0, 2.0 * s, s * s + w * w], &[1.0, 1.0, 4.0]);
        let m = dominant_poles(&TransferFunctionModel::new(vec![1.0], den));
        assert!((m[0].freq_hz - 0.84).abs() < 1e-9);
        assert!((m[0].damping_ratio - 0.034).abs() < 1e-9);
    }

    #[test]
    fn monic_normalization() {
        let tf = TransferFunctionModel::new(vec![2.0], vec![2.0, 4.0]);
        assert_eq!(tf.den, vec![1.0, 2.0]);
        assert_eq!(tf.num, vec![1.0]);
    }

    #[test]
    fn step_response_of_first_order_plant() {
        let tf = TransferFunctionModel::new(vec![1.0], vec![1.0, 1.0]);
        let dt = 1e-3;
        let y = simulate_tf(&tf, &vec![1.0; 3001], dt);
        let exact = 1.0 - (-3.0f64).exp();
        assert!((y[3000] - exact).abs() < 1e-9);
    }

    #[test]
    fn biproper_feedthrough() {
        let tf = TransferFunctionModel::new(vec![2.0, 1.0], vec![1.0, 1.0]);
        let y = simulate_tf(&tf, &vec![1.0; 20001], 1e-3);
        assert_eq!(y[0], 2.0);
        assert!((y[20000] - 1.0).abs() < 1e-8);
    }
}
