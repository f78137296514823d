use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::mode::Mode;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

/// Result of fitting `x[k] = Σ Bᵢ·zᵢᵏ` to a single channel.
#[derive(Debug, Clone, Serialize)]
pub struct ModalEstimate {
    /// Oscillatory modes, strongest first; energies relative to the strongest.
    pub modes: Vec<Mode>,
    /// Every continuous-time pole of the fitted model.
    pub poles: Vec<Complex64>,
    pub residues: Vec<Complex64>,
    /// Relative RMS error of the reconstruction.
    pub reconstruction_error: f64,
}

impl ModalEstimate {
    /// Reconstructs the fitted signal on `n` samples.
    pub fn synthesize(&self, n: usize, dt: f64) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                self.poles
                    .iter()
                    .zip(&self.residues)
                    .map(|(p, b)| (b * (p * t).exp()).re)
                    .sum()
            })
            .collect()
    }
}

/// Given discrete poles, solves for residues and builds the estimate.
pub(crate) fn finish(x: &[f64], dt: f64, z: &[Complex64]) -> Result<ModalEstimate> {
    let n = x.len();
    let m = z.len();
    if m == 0 {
        return Err(Error::NoModes);
    }
    let mut v = DMatrix::from_element(n, m, Complex64::new(0.0, 0.0));
    for (j, zj) in z.iter().enumerate() {
        let mut p = Complex64::new(1.0, 0.0);
        for k in 0..n {
            v[(k, j)] = p;
            p *= zj;
        }
    }
    let rhs = DVector::from_iterator(n, x.iter().map(|v| Complex64::new(*v, 0.0)));
    // Unit-norm columns keep growing or fast-decaying poles from swamping
    // the rank decision.
    let norms: Vec<f64> = v.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
    for (j, mut c) in v.column_iter_mut().enumerate() {
        c.unscale_mut(norms[j]);
    }
    let (mut b, _) = lstsq(&v, &rhs, 1e-14)?;
    for (j, bj) in b.iter_mut().enumerate() {
        *bj /= norms[j];
        v.column_mut(j).scale_mut(norms[j]);
    }
    let fit = &v * &b;
    let err: f64 = fit.iter().zip(x).map(|(f, xv)| (f.re - xv).powi(2)).sum();
    let norm: f64 = x.iter().map(|v| v * v).sum();
    let reconstruction_error = if norm > 0.0 { (err / norm).sqrt() } else { 0.0 };

    let poles: Vec<Complex64> = z.iter().map(|zi| zi.ln() / dt).collect();
    let residues: Vec<Complex64> = b.iter().copied().collect();
    let mut modes: Vec<(Mode, f64)> = Vec::new();
    for (j, (p, bj)) in poles.iter().zip(&residues).enumerate() {
        if p.im <= 0.0 {
            continue;
        }
        let r2 = z[j].norm_sqr();
        let geo = if (r2 - 1.0).abs() < 1e-12 { n as f64 } else { (1.0 - r2.powi(n as i32)) / (1.0 - r2) };
        let energy = 2.0 * bj.norm_sqr() * geo;
        modes.push((Mode::from_eigenvalue(*p), energy));
    }
    let emax = modes.iter().map(|m| m.1).fold(0.0, f64::max);
    let mut modes: Vec<Mode> = modes
        .into_iter()
        .map(|(m, e)| m.with_energy(if emax > 0.0 { e / emax } else { 0.0 }))
        .collect();
    modes.sort_by(|a, b| b.energy.total_cmp(&a.energy));
    Ok(ModalEstimate { modes, poles, residues, reconstruction_error })
}
