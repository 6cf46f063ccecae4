//! Cholesky-only dense linear algebra helpers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Relative ridge added (scaled by mean diagonal) on the single retry.
pub const RIDGE: f64 = 1e-8;

/// Cholesky factor of a symmetric positive definite matrix, retrying once
/// with a trace-scaled ridge.
pub fn spd_cholesky(m: &DMatrix<f64>, name: &'static str) -> Result<Chol> {
    if let Some(c) = Cholesky::new(m.clone()) {
        if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
            return Ok(c);
        }
    }
    let n = m.nrows();
    let scale = (m.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut ridged = m.clone();
    for i in 0..n {
        ridged[(i, i)] += RIDGE * scale;
    }
    match Cholesky::new(ridged) {
        Some(c) if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) => Ok(c),
        _ => Err(Error::NotPositiveDefinite { matrix: name }),
    }
}

/// Cholesky factor without the ridge retry.
pub fn strict_cholesky(m: &DMatrix<f64>, name: &'static str) -> Result<Chol> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NotPositiveDefinite { matrix: name });
    }
    match Cholesky::new(m.clone()) {
        Some(c) if c.l_dirty().diagonal().iter().all(|d| *d > 0.0) => Ok(c),
        _ => Err(Error::NotPositiveDefinite { matrix: name }),
    }
}

pub fn chol_logdet(c: &Chol) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn spd_inverse(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    let c = spd_cholesky(m, name)?;
    Ok(symmetrize(&c.inverse()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Multivariate log-gamma `ln Γ_p(a)`.
pub fn ln_mv_gamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    let mut out = pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 0..p {
        out += ln_gamma(a - j as f64 / 2.0);
    }
    out
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))
}

pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn ridge_retry_rescues_semidefinite() {
        // rank-one PSD matrix: plain Cholesky fails, ridge succeeds
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert!(strict_cholesky(&m, "m").is_err());
        let c = spd_cholesky(&m, "m").unwrap();
        assert!(chol_logdet(&c).is_finite());
    }

    #[test]
    fn indefinite_is_reported_by_name() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match spd_cholesky(&m, "SN") {
            Err(Error::NotPositiveDefinite { matrix }) => assert_eq!(matrix, "SN"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn logdet_and_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let c = spd_cholesky(&m, "m").unwrap();
        assert_close(chol_logdet(&c), 8f64.ln(), 1e-12);
        let inv = spd_inverse(&m, "m").unwrap();
        let id = &m * inv;
        assert_close(id[(0, 0)], 1.0, 1e-12);
        assert_close(id[(0, 1)], 0.0, 1e-12);
    }

    #[test]
    fn mv_gamma_reduces_to_gamma() {
        assert_close(ln_mv_gamma(1, 3.5), ln_gamma(3.5), 1e-14);
        // Γ_2(a) = sqrt(pi) Γ(a) Γ(a - 1/2)
        let a = 2.7;
        let expect = 0.5 * std::f64::consts::PI.ln() + ln_gamma(a) + ln_gamma(a - 0.5);
        assert_close(ln_mv_gamma(2, a), expect, 1e-12);
    }
}
