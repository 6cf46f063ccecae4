//! Logistic transition functions and the `T_eff × 2R` basis matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound on `|φ (z - μ)|` beyond which the logistic saturates at exactly 0 or 1.
pub const EXP_CLAMP: f64 = 500.0;

/// One weak learner: threshold variable (column of the lag design), threshold
/// and speed of adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub sel: usize,
    pub mu: f64,
    pub phi: f64,
}

impl TransitionSpec {
    pub fn new(sel: usize, mu: f64, phi: f64) -> Self {
        debug_assert!(phi > 0.0, "speed must be positive");
        TransitionSpec { sel, mu, phi }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        eval_transition(self, z)
    }
}

#[inline]
pub fn eval_transition(spec: &TransitionSpec, z: f64) -> f64 {
    let a = spec.phi * (z - spec.mu);
    if a >= EXP_CLAMP {
        1.0
    } else if a <= -EXP_CLAMP {
        0.0
    } else {
        1.0 / (1.0 + (-a).exp())
    }
}

/// Basis columns `(S, 1 - S)` for one learner over all rows of `x`.
pub fn pair_columns(x: &DMatrix<f64>, spec: &TransitionSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.sel >= x.ncols() {
        return Err(Error::Index {
            what: "sel",
            index: spec.sel,
            limit: x.ncols(),
        });
    }
    let s: Vec<f64> = x.column(spec.sel).iter().map(|z| spec.eval(*z)).collect();
    let c = s.iter().map(|v| 1.0 - v).collect();
    Ok((s, c))
}

/// Writes the basis row `W_t` for a single lag state into `out` (length 2R).
pub fn basis_row(specs: &[TransitionSpec], state: &[f64], out: &mut [f64]) {
    for (r, spec) in specs.iter().enumerate() {
        let s = spec.eval(state[spec.sel]);
        out[2 * r] = s;
        out[2 * r + 1] = 1.0 - s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisState {
    pub specs: Vec<TransitionSpec>,
    /// Columns `(S_1, 1-S_1, ..., S_R, 1-S_R)`.
    pub w: DMatrix<f64>,
}

impl BasisState {
    pub fn n_learners(&self) -> usize {
        self.specs.len()
    }

    /// Copy of `self` with learner `r` replaced; only columns `2r, 2r+1` change.
    pub fn replace_learner(&self, x: &DMatrix<f64>, r: usize, spec: TransitionSpec) -> Result<Self> {
        let mut out = self.clone();
        out.replace_in_place(x, r, spec)?;
        Ok(out)
    }

    pub fn replace_in_place(&mut self, x: &DMatrix<f64>, r: usize, spec: TransitionSpec) -> Result<()> {
        if r >= self.specs.len() {
            return Err(Error::Index {
                what: "learner",
                index: r,
                limit: self.specs.len(),
            });
        }
        let (s, c) = pair_columns(x, &spec)?;
        self.set_pair(r, spec, &s, &c);
        Ok(())
    }

    /// Installs precomputed columns for learner `r`.
    pub(crate) fn set_pair(&mut self, r: usize, spec: TransitionSpec, s: &[f64], c: &[f64]) {
        self.w.column_mut(2 * r).copy_from_slice(s);
        self.w.column_mut(2 * r + 1).copy_from_slice(c);
        self.specs[r] = spec;
    }
}

pub fn build_basis(x: &DMatrix<f64>, specs: &[TransitionSpec]) -> Result<BasisState> {
    let mut w = DMatrix::zeros(x.nrows(), 2 * specs.len());
    for (r, spec) in specs.iter().enumerate() {
        let (s, c) = pair_columns(x, spec)?;
        w.column_mut(2 * r).copy_from_slice(&s);
        w.column_mut(2 * r + 1).copy_from_slice(&c);
    }
    Ok(BasisState {
        specs: specs.to_vec(),
        w,
    })
}
