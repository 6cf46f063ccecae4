//! Recursive (Cholesky) identification and shock scaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::strict_cholesky;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralFactor {
    /// Lower-triangular impact matrix with positive diagonal, `Σ = P P'`.
    pub pmat: DMatrix<f64>,
    /// Position of the shocked variable.
    pub shock_index: usize,
    /// Unconditional standard deviations of the variables.
    pub s: Vec<f64>,
}

/// Unique lower-triangular factor of `sigma` with positive diagonal.
pub fn cholesky_identify(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(Error::Dimension(format!("Sigma is {:?}", sigma.shape())));
    }
    let sym = (sigma - sigma.transpose()).abs().max();
    if sym > 1e-10 * sigma.abs().max().max(1.0) {
        return Err(Error::NotPositiveDefinite { matrix: "Sigma" });
    }
    Ok(strict_cholesky(sigma, "Sigma")?.unpack())
}

impl StructuralFactor {
    pub fn new(pmat: DMatrix<f64>, shock_index: usize, s: Vec<f64>) -> Result<Self> {
        let m = pmat.nrows();
        if shock_index >= m {
            return Err(Error::Index {
                what: "shock_index",
                index: shock_index,
                limit: m,
            });
        }
        if s.len() != m {
            return Err(Error::Dimension(format!("s has {} entries, M = {m}", s.len())));
        }
        if (0..m).any(|i| !(pmat[(i, i)] > 0.0)) {
            return Err(Error::Numerical("impact matrix needs a positive diagonal".into()));
        }
        Ok(StructuralFactor { pmat, shock_index, s })
    }

    pub fn from_sigma(sigma: &DMatrix<f64>, shock_index: usize, s: Vec<f64>) -> Result<Self> {
        Self::new(cholesky_identify(sigma)?, shock_index, s)
    }

    /// Impact vector `ς s_j P e_j / (P e_j)_j`; element `j` equals `ς s_j`
    /// and every element ordered before `j` is zero.
    pub fn scaled_impact(&self, varsigma: f64) -> Vec<f64> {
        self.impact(varsigma * self.s[self.shock_index])
    }

    /// Impact in standardized units, i.e. with `s_j` replaced by one.
    pub fn unit_impact(&self, varsigma: f64) -> Vec<f64> {
        self.impact(varsigma)
    }

    fn impact(&self, scale: f64) -> Vec<f64> {
        let j = self.shock_index;
        let pjj = self.pmat[(j, j)];
        (0..self.pmat.nrows())
            .map(|i| {
                if i < j {
                    0.0
                } else if i == j {
                    scale
                } else {
                    scale * (self.pmat[(i, j)] / pjj)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_spd(m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, &[m as u64]);
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + DMatrix::identity(m, m) * 0.5
    }

    #[test]
    fn identity_factor() {
        let p = cholesky_identify(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(p, DMatrix::identity(3, 3));
    }

    #[test]
    fn two_by_two_by_hand() {
        let sigma = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let p = cholesky_identify(&sigma).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
        assert!((&p - &expect).abs().max() < 1e-15);
        assert!((&p * p.transpose() - sigma).abs().max() < 1e-14);
    }

    #[test]
    fn reconstruction_of_random_spd() {
        for m in [1, 2, 5, 11, 20] {
            let sigma = random_spd(m, 17);
            let p = cholesky_identify(&sigma).unwrap();
            let err = (&p * p.transpose() - &sigma).abs().max() / sigma.abs().max();
            assert!(err < 1e-12, "m = {m}: {err}");
            for i in 0..m {
                assert!(p[(i, i)] > 0.0);
                for j in i + 1..m {
                    assert_eq!(p[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn non_spd_is_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky_identify(&bad).is_err());
    }

    #[test]
    fn identity_factor_gives_unit_vector() {
        let f = StructuralFactor::new(DMatrix::identity(4, 4), 2, vec![1.0; 4]).unwrap();
        assert_eq!(f.scaled_impact(1.0), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn impact_normalization_and_zero_restrictions() {
        let sigma = random_spd(6, 3);
        let s = vec![0.3, 1.2, 2.5, 0.7, 4.0, 0.9];
        let f = StructuralFactor::from_sigma(&sigma, 3, s.clone()).unwrap();
        for varsigma in [-6.0, -0.1, 0.1, 1.5, 6.0] {
            let imp = f.scaled_impact(varsigma);
            assert_eq!(imp[3], varsigma * s[3]);
            assert!(imp[..3].iter().all(|v| *v == 0.0));
            let neg = f.scaled_impact(-varsigma);
            let dbl = f.scaled_impact(2.0 * varsigma);
            for i in 0..6 {
                assert_eq!(imp[i], -neg[i]);
                assert_eq!(dbl[i], 2.0 * imp[i]);
            }
        }
    }

    #[test]
    fn ordering_changes_the_factor() {
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.8, 0.5, 0.8, 1.5, 0.3, 0.5, 0.3, 1.0]);
        let perm = [2usize, 0, 1];
        let permuted = DMatrix::from_fn(3, 3, |i, j| sigma[(perm[i], perm[j])]);
        let p = cholesky_identify(&sigma).unwrap();
        let q = cholesky_identify(&permuted).unwrap();
        let q_back = DMatrix::from_fn(3, 3, |i, j| {
            let pi = perm.iter().position(|&x| x == i).unwrap();
            let pj = perm.iter().position(|&x| x == j).unwrap();
            q[(pi, pj)]
        });
        assert!((&p - &q_back).abs().max() > 1e-3);
    }
}
