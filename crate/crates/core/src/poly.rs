//! Real polynomials in descending-power coefficient order (`c[0]` multiplies
//! the highest power), as used for transfer-function numerators and
//! denominators.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

fn eval_complex(coeffs: &[Complex64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn degree(coeffs: &[f64]) -> usize {
    let lead = coeffs.iter().position(|c| *c != 0.0).unwrap_or(coeffs.len());
    coeffs.len().saturating_sub(lead + 1)
}

/// Drops leading zero coefficients (keeps at least one entry).
pub fn trim(coeffs: &[f64]) -> Vec<f64> {
    let lead = coeffs.iter().position(|c| *c != 0.0);
    match lead {
        Some(i) => coeffs[i..].to_vec(),
        None => vec![0.0],
    }
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![0.0];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().enumerate() {
        out[n - a.len() + i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[n - b.len() + i] += y;
    }
    out
}

pub fn pow(a: &[f64], m: usize) -> Vec<f64> {
    (0..m).fold(vec![1.0], |acc, _| mul(&acc, a))
}

/// Builds the real monic polynomial with the given roots. Complex roots must
/// come in conjugate pairs; the imaginary residue is discarded.
pub fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        c = next;
    }
    c.into_iter().map(|z| z.re).collect()
}

/// Roots via companion-matrix eigenvalues, each polished by a few Newton steps.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let c = trim(coeffs);
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[0];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -c[j + 1] / lead;
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    let eig = crate::linalg::eigenvalues(&comp).unwrap_or_else(|_| {
        comp.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect()
    });
    let dc: Vec<Complex64> = (0..n).map(|k| Complex64::new(c[k] * (n - k) as f64, 0.0)).collect();
    let cc: Vec<Complex64> = c.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let mut out: Vec<Complex64> = eig
        .iter()
        .map(|z0| {
            let mut z = Complex64::new(z0.re, z0.im);
            for _ in 0..3 {
                let p = eval_complex(&cc, z);
                let dp = eval_complex(&dc, z);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = p / dp;
                if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 1e-3 * (1.0 + z.norm()) {
                    break;
                }
                z -= step;
            }
            z
        })
        .collect();
    // Snap near-real roots and enforce exact conjugate symmetry.
    for z in out.iter_mut() {
        if z.im.abs() <= 1e-12 * (1.0 + z.re.abs()) {
            z.im = 0.0;
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}
