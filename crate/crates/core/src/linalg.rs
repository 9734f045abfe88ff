//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factorisation of a symmetric positive-definite matrix.
pub fn spd_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// `log |A|` from a Cholesky factor.
pub fn chol_log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// A factor `F` with `F F' = A` for a symmetric positive-semidefinite `A`.
///
/// Uses the Cholesky factor when it exists and falls back to the symmetric
/// eigendecomposition (negative eigenvalues clipped to zero) otherwise, so a
/// zero covariance yields a zero factor.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = Cholesky::new(symmetrize(a)) {
        return c.l();
    }
    let eig = symmetrize(a).symmetric_eigen();
    let mut f = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// Log of the multivariate gamma function `Gamma_p(a)`.
pub fn ln_mvgamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln() + (0..p).map(|i| ln_gamma(a - i as f64 / 2.0)).sum::<f64>()
}

/// Determinant of the 2x2 matrix `[[a, b], [b, c]]`.
#[inline]
pub(crate) fn det2(a: f64, b: f64, c: f64) -> f64 {
    a * c - b * b
}
