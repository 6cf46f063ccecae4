//! Conditional-mean functions `F: R^K -> R^M` shared by the GIRF engine.

use nalgebra::DMatrix;

use crate::basis::{basis_row, TransitionSpec};

/// A conditional mean `E[Y_t | X_t] = F(X_t)` over the stacked lag state
/// `X_t = (Y'_{t-1}, ..., Y'_{t-P})'`.
pub trait ConditionalMean: Sync {
    fn n_vars(&self) -> usize;

    fn n_lags(&self) -> usize;

    /// Writes `F(state)` into `out` (length M).
    fn eval(&self, state: &[f64], out: &mut [f64]);

    /// Whether `F` is affine in the state.
    fn is_affine(&self) -> bool {
        false
    }

    /// Writes `F(state + dev) - F(state)` into `out`.
    fn eval_deviation(&self, state: &[f64], dev: &[f64], out: &mut [f64]) {
        let shifted: Vec<f64> = state.iter().zip(dev).map(|(a, b)| a + b).collect();
        let mut base = vec![0.0; out.len()];
        self.eval(state, &mut base);
        self.eval(&shifted, out);
        for (o, b) in out.iter_mut().zip(&base) {
            *o -= b;
        }
    }
}

/// Sum of `R` two-intercept logistic switches, `F(X_t) = B' W_t`.
#[derive(Debug, Clone)]
pub struct VastMean {
    pub specs: Vec<TransitionSpec>,
    /// `2R × M` coefficient matrix.
    pub b: DMatrix<f64>,
    pub lags: usize,
}

impl ConditionalMean for VastMean {
    fn n_vars(&self) -> usize {
        self.b.ncols()
    }

    fn n_lags(&self) -> usize {
        self.lags
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        let nb = self.b.nrows();
        let mut w = vec![0.0; nb];
        basis_row(&self.specs, state, &mut w);
        for (m, o) in out.iter_mut().enumerate() {
            let col = self.b.column(m);
            *o = w.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

/// Linear VAR mean `F(X_t) = A [X_t; 1]` with the intercept in the last column.
#[derive(Debug, Clone)]
pub struct LinearMean {
    /// `M × (MP + 1)`.
    pub a: DMatrix<f64>,
    pub lags: usize,
}

impl ConditionalMean for LinearMean {
    fn n_vars(&self) -> usize {
        self.a.nrows()
    }

    fn n_lags(&self) -> usize {
        self.lags
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        let k = self.a.ncols() - 1;
        for (m, o) in out.iter_mut().enumerate() {
            let mut acc = self.a[(m, k)];
            for (n, x) in state.iter().enumerate().take(k) {
                acc += self.a[(m, n)] * x;
            }
            *o = acc;
        }
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn eval_deviation(&self, _state: &[f64], dev: &[f64], out: &mut [f64]) {
        let k = self.a.ncols() - 1;
        for (m, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (n, x) in dev.iter().enumerate().take(k) {
                acc += self.a[(m, n)] * x;
            }
            *o = acc;
        }
    }
}
