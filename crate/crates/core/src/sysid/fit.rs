use super::{FitQuality, FrequencyResponse, TransferFunctionModel};
use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::poly;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Quality gate: relative magnitude error.
    pub mag_tolerance: f64,
    pub phase_tolerance_deg: f64,
    /// Column-scaled condition number below which the order is rejected.
    pub min_rcond: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 60, mag_tolerance: 0.02, phase_tolerance_deg: 2.0, min_rcond: 1e-10 }
    }
}

/// Builds the weighted linearized system `N(s) − H·D(s) = 0` with monic D,
/// stacking real and imaginary parts, columns scaled to unit norm.
fn assemble(
    s: &[Complex64],
    h: &[Complex64],
    w: &[f64],
    nz: usize,
    np: usize,
    den_free: bool,
    den: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let ncol = nz + 1 + if den_free { np } else { 0 };
    let mut a = DMatrix::zeros(2 * s.len(), ncol);
    let mut b = DVector::zeros(2 * s.len());
    for (k, (&sk, &hk)) in s.iter().zip(h).enumerate() {
        let mut pw = Complex64::new(1.0, 0.0);
        let mut powers = Vec::with_capacity(np + 1);
        for _ in 0..=np.max(nz) {
            powers.push(pw);
            pw *= sk;
        }
        let mut col = 0;
        for j in 0..=nz {
            let v = powers[j] * w[k];
            a[(2 * k, col)] = v.re;
            a[(2 * k + 1, col)] = v.im;
            col += 1;
        }
        let rhs = if den_free {
            for i in 0..np {
                let v = -hk * powers[i] * w[k];
                a[(2 * k, col)] = v.re;
                a[(2 * k + 1, col)] = v.im;
                col += 1;
            }
            hk * powers[np] * w[k]
        } else {
            hk * poly::eval(den, sk) * w[k]
        };
        b[2 * k] = rhs.re;
        b[2 * k + 1] = rhs.im;
    }
    (a, b)
}

fn solve_scaled(a: &DMatrix<f64>, b: &DVector<f64>, min_rcond: f64) -> Result<DVector<f64>> {
    let norms: Vec<f64> = (0..a.ncols()).map(|j| a.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    let mut scaled = a.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*n);
    }
    let rcond = crate::linalg::rcond(&scaled)?;
    if !(rcond > min_rcond) {
        return Err(Error::OrderTooHigh { rcond });
    }
    let (x, _) = lstsq(&scaled, b, 0.0)?;
    Ok(DVector::from_iterator(x.len(), x.iter().zip(&norms).map(|(v, n)| v / n)))
}

/// Ascending coefficients (in the scaled variable) to a descending
/// polynomial in s, where `s_scaled = s/ω0`.
fn unscale(asc: &[f64], w0: f64) -> Vec<f64> {
    asc.iter().enumerate().rev().map(|(j, c)| c / w0.powi(j as i32)).collect()
}

/// Fits `num/den` with `deg num = nz`, `deg den = np` by iteratively
/// reweighted linear least squares (Sanathanan–Koerner) on relative error. Unstable poles of
/// the result are reflected into the left half plane and the numerator is
/// refit. The quality gate compares magnitude and phase on every bin.
pub fn fit_tf(frf: &FrequencyResponse, nz: usize, np: usize, opts: &FitOptions) -> Result<TransferFunctionModel> {
    if np == 0 || nz > np {
        return Err(Error::Validation(format!("need 1 ≤ np and nz ≤ np, got ({nz}, {np})")));
    }
    let m = frf.freqs.len();
    if m < 3 * (nz + np) {
        return Err(Error::Validation(format!("{m} bins are too few for order ({nz}, {np})")));
    }
    let w0 = 2.0 * PI * frf.freqs.iter().cloned().fold(0.0, f64::max);
    let s: Vec<Complex64> = frf.freqs.iter().map(|f| Complex64::new(0.0, 2.0 * PI * f / w0)).collect();
    let h = &frf.values;

    // Denominator ascending coefficients in the scaled variable, monic.
    let mut den_asc = vec![0.0; np + 1];
    den_asc[np] = 1.0;
    let mut num_asc = vec![0.0; nz + 1];
    let mut iterations = 0;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let den_desc: Vec<f64> = den_asc.iter().rev().cloned().collect();
        let w: Vec<f64> = s
            .iter()
            .zip(h)
            .map(|(sk, hk)| 1.0 / (poly::eval(&den_desc, *sk).norm() * hk.norm()).max(1e-300))
            .collect();
        let (a, b) = assemble(&s, h, &w, nz, np, true, &[]);
        let x = solve_scaled(&a, &b, opts.min_rcond)?;
        num_asc = x.iter().take(nz + 1).cloned().collect();
        let mut next = x.iter().skip(nz + 1).cloned().collect::<Vec<f64>>();
        next.push(1.0);
        let change = next.iter().zip(&den_asc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        den_asc = next;
        if change < 1e-13 {
            break;
        }
    }

    // Reflect unstable poles, then refit the numerator for the fixed denominator.
    let den_desc: Vec<f64> = den_asc.iter().rev().cloned().collect();
    let poles = poly::roots(&den_desc);
    let flipped = poles.iter().filter(|p| p.re > 0.0).count();
    if flipped > 0 {
        let stable: Vec<Complex64> = poles.iter().map(|p| if p.re > 0.0 { Complex64::new(-p.re, p.im) } else { *p }).collect();
        let den_desc = poly::from_roots(&stable);
        let w: Vec<f64> = s
            .iter()
            .zip(h)
            .map(|(sk, hk)| 1.0 / (poly::eval(&den_desc, *sk).norm() * hk.norm()).max(1e-300))
            .collect();
        let (a, b) = assemble(&s, h, &w, nz, np, false, &den_desc);
        let x = solve_scaled(&a, &b, opts.min_rcond)?;
        num_asc = x.iter().cloned().collect();
        den_asc = den_desc.iter().rev().cloned().collect();
    }

    let mut tf = TransferFunctionModel::new(unscale(&num_asc, w0), unscale(&den_asc, w0));
    let mut max_mag: f64 = 0.0;
    let mut max_ph: f64 = 0.0;
    for (f, hk) in frf.freqs.iter().zip(h) {
        let r = tf.freq_response(*f) / hk;
        max_mag = max_mag.max((r.norm() - 1.0).abs());
        max_ph = max_ph.max(r.arg().abs().to_degrees());
    }
    tf.quality = Some(FitQuality {
        max_mag_error: max_mag,
        max_phase_error_deg: max_ph,
        passed: max_mag <= opts.mag_tolerance && max_ph <= opts.phase_tolerance_deg,
        flipped_poles: flipped,
        iterations,
    });
    Ok(tf)
}
