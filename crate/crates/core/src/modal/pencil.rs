use super::estimate::{finish, ModalEstimate};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy)]
pub struct PencilOptions {
    /// Pencil parameter L; default N/3.
    pub pencil: Option<usize>,
    /// Relative singular-value cutoff used to select the model order.
    pub sv_cutoff: f64,
    /// Fixed model order overriding the cutoff.
    pub order: Option<usize>,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self { pencil: None, sv_cutoff: 1e-8, order: None }
    }
}

/// Matrix Pencil estimate from the SVD of the Hankel data matrix.
pub fn matrix_pencil(x: &[f64], dt: f64, opts: &PencilOptions) -> Result<ModalEstimate> {
    let n = x.len();
    let l = opts.pencil.unwrap_or(n / 3);
    if n < 6 || 3 * l < n.saturating_sub(2) || 2 * l > n {
        return Err(Error::Validation(format!("pencil parameter {l} outside [N/3, N/2] for N = {n}")));
    }
    let rows = n - l;
    let y = DMatrix::from_fn(rows, l + 1, |r, c| x[r + c]);
    let svd = crate::linalg::svd(&y)?;
    let s = &svd.s;
    let smax = s.first().copied().unwrap_or(0.0);
    let m = match opts.order {
        Some(m) => m.min(l),
        None => s.iter().filter(|v| **v > opts.sv_cutoff * smax).count(),
    };
    if m == 0 || !(smax > 0.0) {
        return Err(Error::NoModes);
    }
    // V' = leading right singular vectors as columns, (L+1) × M.
    let vp = svd.v.columns(0, m);
    let v1 = vp.rows(0, l).into_owned();
    let v2 = vp.rows(1, l).into_owned();
    let pinv = crate::linalg::svd(&v1)?.pseudo_inverse(1e-14);
    let a = pinv * v2;
    let z = crate::linalg::eigenvalues(&a)?;
    finish(x, dt, &z)
}
