//! Small dense numerical helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{ComplexField, DMatrix, DVector, Scalar};
use num_complex::Complex64;

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(mut f: F, x: &[f64], h: f64) -> DMatrix<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for k in 0..n {
        let step = h * (1.0 + x[k].abs());
        xp[k] = x[k] + step;
        f(&xp, &mut fp);
        xp[k] = x[k] - step;
        f(&xp, &mut fm);
        xp[k] = x[k];
        for i in 0..n {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned("non-finite matrix entry".into()));
    }
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let eig = f.eigenvalues().map_err(|_| Error::NonConvergence {
        solver: "eigenvalues",
        iterations: 0,
        mismatch: f64::NAN,
        location: format!("{}x{} matrix", m.nrows(), m.ncols()),
    })?;
    Ok(eig.into_iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

/// Thin SVD `a = U·diag(s)·Vᴴ`, singular values in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd<T: Scalar> {
    pub u: DMatrix<T>,
    pub s: Vec<f64>,
    pub v: DMatrix<T>,
}

/// Element types accepted by the SVD helpers.
pub trait SvdScalar: ComplexField<RealField = f64> + faer::traits::ComplexField<Real = f64> + Copy {}
impl SvdScalar for f64 {}
impl SvdScalar for Complex64 {}

fn svd_error(a: (usize, usize)) -> Error {
    Error::NonConvergence {
        solver: "singular value decomposition",
        iterations: 0,
        mismatch: f64::NAN,
        location: format!("{}x{} matrix", a.0, a.1),
    }
}

pub fn svd<T: SvdScalar>(a: &DMatrix<T>) -> Result<Svd<T>> {
    if a.iter().any(|v| !v.clone().is_finite()) {
        return Err(Error::IllConditioned("non-finite matrix entry".into()));
    }
    let f = faer::Mat::<T>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let d = f.thin_svd().map_err(|_| svd_error(a.shape()))?;
    let (u, sv, v) = (d.U(), d.S().column_vector(), d.V());
    Ok(Svd {
        u: DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        s: (0..sv.nrows()).map(|i| sv[i].real()).collect(),
        v: DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    })
}

pub fn singular_values<T: SvdScalar>(a: &DMatrix<T>) -> Result<Vec<f64>> {
    Ok(svd(a)?.s)
}

impl<T: SvdScalar> Svd<T> {
    /// Number of singular values above `rtol·σ_max`.
    pub fn rank(&self, rtol: f64) -> usize {
        let cut = rtol * self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|s| **s > cut).count()
    }

    /// Minimum-norm solution of `a·x ≈ b` using singular values above `rtol·σ_max`.
    pub fn solve(&self, b: &DVector<T>, rtol: f64) -> DVector<T> {
        let r = self.rank(rtol);
        let mut c = self.u.columns(0, r).adjoint() * b;
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = ck.clone().unscale(self.s[k]);
        }
        self.v.columns(0, r) * c
    }

    /// Pseudo-inverse using singular values above `rtol·σ_max`.
    pub fn pseudo_inverse(&self, rtol: f64) -> DMatrix<T> {
        let r = self.rank(rtol);
        let mut vs = self.v.columns(0, r).into_owned();
        for (k, mut col) in vs.column_iter_mut().enumerate() {
            col.unscale_mut(self.s[k]);
        }
        vs * self.u.columns(0, r).adjoint()
    }
}

/// Minimum-norm least squares `a·x ≈ b` via SVD, discarding singular values
/// below `rtol·σ_max`. Returns the solution and the numerical rank.
pub fn lstsq<T: SvdScalar>(a: &DMatrix<T>, b: &DVector<T>, rtol: f64) -> Result<(DVector<T>, usize)> {
    let d = svd(a)?;
    let rtol = rtol.max(f64::MIN_POSITIVE);
    Ok((d.solve(b, rtol), d.rank(rtol)))
}

/// Ratio of smallest to largest singular value.
pub fn rcond<T: SvdScalar>(a: &DMatrix<T>) -> Result<f64> {
    let s = singular_values(a)?;
    let max = s.first().copied().unwrap_or(0.0);
    Ok(if max == 0.0 { 0.0 } else { s.last().copied().unwrap_or(0.0) / max })
}
