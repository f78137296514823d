use super::estimate::{finish, ModalEstimate};
use crate::error::{Error, Result};
use crate::poly;
use nalgebra::{DMatrix, DVector};

/// Prony's method: linear prediction of order `order`, roots of the
/// characteristic polynomial, then least-squares residues.
///
/// The prediction equations are solved in the minimum-norm sense by a
/// truncated SVD, so over-specified orders on clean data add only
/// negligible-energy extraneous poles.
pub fn prony(x: &[f64], dt: f64, order: usize) -> Result<ModalEstimate> {
    let n = x.len();
    if order == 0 || n < 3 * order {
        return Err(Error::IllConditioned(format!(
            "order {order} needs at least {} samples, got {n}",
            3 * order.max(1)
        )));
    }
    let rows = n - order;
    // x[k] = −Σ a_i x[k−i]
    let a = DMatrix::from_fn(rows, order, |r, c| x[r + order - 1 - c]);
    let b = DVector::from_fn(rows, |r, _| -x[r + order]);
    if a.iter().any(|v| !v.is_finite()) || a.iter().all(|v| *v == 0.0) {
        return Err(Error::IllConditioned("prediction matrix is zero or non-finite".into()));
    }
    let (coef, rank) = crate::linalg::lstsq(&a, &b, 1e-10)?;
    if rank == 0 {
        return Err(Error::IllConditioned("prediction matrix has no usable rank".into()));
    }
    let mut char_poly = vec![1.0];
    char_poly.extend(coef.iter());
    let z = poly::roots(&char_poly);
    if z.iter().any(|zi| !zi.re.is_finite() || zi.norm() == 0.0) {
        return Err(Error::IllConditioned("degenerate prediction polynomial".into()));
    }
    finish(x, dt, &z)
}
