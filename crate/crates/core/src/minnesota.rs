//! Linear BVAR with a Minnesota-style prior in conjugate Normal-inverse-
//! Wishart form (diagonal `V0`, no dummy observations).

use nalgebra::DMatrix;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, Transform, VariableMeta};
use crate::error::{Error, Result};
use crate::identify::StructuralFactor;
use crate::model::LinearMean;
use crate::niw::{self, NiwPosterior, NiwPrior};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinnesotaConfig {
    /// Overall tightness.
    pub lambda1: f64,
    /// Cross-variable tightness. The Kronecker-structured conjugate prior
    /// cannot give own and cross lags different variances, so this value is
    /// carried for the record only.
    pub lambda2: f64,
    /// Lag decay.
    pub lambda3: f64,
    /// Intercept looseness relative to `lambda1`.
    pub lambda4: f64,
    #[serde(rename = "P")]
    pub lags: usize,
    pub n_draws: usize,
}

impl Default for MinnesotaConfig {
    fn default() -> Self {
        MinnesotaConfig {
            lambda1: 0.2,
            lambda2: 0.5,
            lambda3: 2.0,
            lambda4: 100.0,
            lags: 12,
            n_draws: 1000,
        }
    }
}

impl MinnesotaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(Error::config(format!("minnesota.{f}"), m));
        if !(self.lambda1 > 0.0) {
            return bad("lambda1", "must be positive");
        }
        if !(self.lambda2 > 0.0 && self.lambda2 <= 1.0) {
            return bad("lambda2", "must lie in (0, 1]");
        }
        if !(self.lambda3 > 0.0) {
            return bad("lambda3", "must be positive");
        }
        if !(self.lambda4 > 0.0) {
            return bad("lambda4", "must be positive");
        }
        if self.lags == 0 {
            return bad("P", "must be at least 1");
        }
        if self.n_draws == 0 {
            return bad("n_draws", "must be at least 1");
        }
        Ok(())
    }
}

/// One posterior draw of the linear VAR, intercept in the last column of `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearVarDraw {
    pub a: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl LinearVarDraw {
    pub fn conditional_mean(&self, lags: usize) -> LinearMean {
        LinearMean {
            a: self.a.clone(),
            lags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBvar {
    pub config: MinnesotaConfig,
    pub lags: usize,
    pub posterior: NiwPosterior,
    /// Residual variances of the univariate AR(1) scale regressions.
    pub ar_scales: Vec<f64>,
    pub draws: Vec<LinearVarDraw>,
}

impl LinearBvar {
    /// Posterior mean of `A` (`M × (K+1)`).
    pub fn posterior_mean_a(&self) -> DMatrix<f64> {
        self.posterior.mean.transpose()
    }
}

/// Own-lag prior means: persistence for level-type series, zero for
/// differenced ones.
pub fn own_lag_means(meta: &[VariableMeta]) -> Vec<f64> {
    meta.iter()
        .map(|v| match v.transform {
            Transform::LogDiff => 0.0,
            Transform::Level | Transform::Log => 1.0,
        })
        .collect()
}

/// Residual variance of `y_t = c + ρ y_{t-1} + e_t` for every variable.
fn ar1_scales(design: &DesignMatrix) -> Result<Vec<f64>> {
    let n = design.n_rows();
    if n < 4 {
        return Err(Error::Design("too few rows for AR(1) scale regressions".into()));
    }
    (0..design.n_vars())
        .map(|m| {
            let y = design.y.column(m);
            let x = design.x.column(m);
            let (mx, my) = (x.mean(), y.mean());
            let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
            let sxy: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - mx) * (b - my)).sum();
            let rho = sxy / sxx;
            let ssr: f64 = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| {
                    let e = b - my - rho * (a - mx);
                    e * e
                })
                .sum();
            let s2 = ssr / (n - 2) as f64;
            if !(s2 > 0.0) {
                return Err(Error::Numerical(format!("AR(1) residual variance of variable {m} is {s2}")));
            }
            Ok(s2)
        })
        .collect()
}

/// Regressor matrix `[X, 1]`.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    out.columns_mut(0, x.ncols()).copy_from(x);
    out
}

/// Minnesota prior moments as a conjugate NIW prior over `[X, 1]`.
pub fn minnesota_prior(design: &DesignMatrix, own_means: &[f64], cfg: &MinnesotaConfig) -> Result<(NiwPrior, Vec<f64>)> {
    let m = design.n_vars();
    let k = design.n_regressors();
    if own_means.len() != m {
        return Err(Error::Dimension(format!("{} own-lag means for M = {m}", own_means.len())));
    }
    if k != m * design.lags {
        return Err(Error::Dimension("design is not a stacked lag design".into()));
    }
    let scales = ar1_scales(design)?;
    let mut b0 = DMatrix::zeros(k + 1, m);
    for (i, mean) in own_means.iter().enumerate() {
        b0[(i, i)] = *mean;
    }
    let mut v0 = DMatrix::zeros(k + 1, k + 1);
    for (n, &(var, lag)) in design.lag_labels.iter().enumerate() {
        let decay = (lag as f64).powf(cfg.lambda3);
        v0[(n, n)] = (cfg.lambda1 / decay).powi(2) / scales[var];
    }
    v0[(k, k)] = (cfg.lambda1 * cfg.lambda4).powi(2);
    let dof = m as f64 + 2.0;
    let s0 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(scales.clone())) * (dof - m as f64 - 1.0);
    Ok((NiwPrior::new(dof, s0, b0, v0)?, scales))
}

pub fn estimate_bvar(
    design: &DesignMatrix,
    own_means: &[f64],
    cfg: &MinnesotaConfig,
    n_draws: usize,
    seed: u64,
) -> Result<LinearBvar> {
    cfg.validate()?;
    if design.lags != cfg.lags {
        return Err(Error::config("minnesota.P", format!("design has {} lags", design.lags)));
    }
    let (prior, ar_scales) = minnesota_prior(design, own_means, cfg)?;
    let w = with_intercept(&design.x);
    let posterior = niw::update(&prior, &w, &design.y)?;
    let mut rng = StreamRng::seed_from_u64(seed);
    let draws = (0..n_draws)
        .map(|_| {
            niw::sample(&posterior, &mut rng).map(|d| LinearVarDraw {
                a: d.b.transpose(),
                sigma: d.sigma,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearBvar {
        config: cfg.clone(),
        lags: design.lags,
        posterior,
        ar_scales,
        draws,
    })
}

/// Companion matrix of the lag coefficients in `a` (intercept ignored).
pub fn companion(a: &DMatrix<f64>, lags: usize) -> DMatrix<f64> {
    let m = a.nrows();
    let k = m * lags;
    let mut c = DMatrix::zeros(k, k);
    c.rows_mut(0, m).copy_from(&a.columns(0, k));
    for i in m..k {
        c[(i, i - m)] = 1.0;
    }
    c
}

/// Responses `(H+1) × M` to a recursively identified shock of size `ς`,
/// de-standardized by `scale`. The draw lives in standardized units.
pub fn linear_irf(
    draw: &LinearVarDraw,
    lags: usize,
    shock_index: usize,
    varsigma: f64,
    horizon: usize,
    scale: &[f64],
) -> Result<DMatrix<f64>> {
    let m = draw.a.nrows();
    let factor = StructuralFactor::from_sigma(&draw.sigma, shock_index, vec![1.0; m])?;
    let impact = factor.scaled_impact(varsigma);
    let c = companion(&draw.a, lags);
    if !c.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("companion matrix is not finite".into()));
    }
    let k = m * lags;
    let mut state = nalgebra::DVector::zeros(k);
    state.rows_mut(0, m).copy_from_slice(&impact);
    let mut out = DMatrix::zeros(horizon + 1, m);
    for h in 0..=horizon {
        if h > 0 {
            state = &c * &state;
        }
        for v in 0..m {
            out[(h, v)] = state[v] * scale[v];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Bivariate VAR(1) with known coefficients.
    fn var1_design(t: usize, seed: u64) -> (DesignMatrix, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.4]);
        let c = [0.3, -0.2];
        let mut rng = stream(seed, &[]);
        let mut y = vec![[0.0, 0.0]];
        for _ in 0..t + 50 {
            let p = *y.last().unwrap();
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            y.push([
                c[0] + a[(0, 0)] * p[0] + a[(0, 1)] * p[1] + e0,
                c[1] + a[(1, 0)] * p[0] + a[(1, 1)] * p[1] + 0.5 * e0 + e1,
            ]);
        }
        let y = &y[51..];
        let x = DMatrix::from_fn(t - 1, 2, |i, j| y[i][j]);
        let yy = DMatrix::from_fn(t - 1, 2, |i, j| y[i + 1][j]);
        let mut truth = DMatrix::zeros(2, 3);
        truth.columns_mut(0, 2).copy_from(&a);
        truth[(0, 2)] = c[0];
        truth[(1, 2)] = c[1];
        (DesignMatrix::from_matrices(x, yy, 1).unwrap(), truth)
    }

    fn cfg(lambda1: f64, lambda4: f64) -> MinnesotaConfig {
        MinnesotaConfig {
            lambda1,
            lambda4,
            lags: 1,
            ..MinnesotaConfig::default()
        }
    }

    #[test]
    fn infinite_shrinkage_returns_prior_mean() {
        let (d, _) = var1_design(200, 1);
        let fit = estimate_bvar(&d, &[1.0, 0.0], &cfg(1e-7, 1.0), 1, 0).unwrap();
        let a = fit.posterior_mean_a();
        let prior = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((a - prior).abs().max() < 1e-3);
    }

    #[test]
    fn no_shrinkage_returns_ols() {
        let (d, _) = var1_design(200, 2);
        let fit = estimate_bvar(&d, &[1.0, 1.0], &cfg(1e6, 100.0), 1, 0).unwrap();
        let w = with_intercept(&d.x);
        // OLS oracle via the normal equations solved by QR
        let qr = w.clone().qr();
        let ols = qr.r().solve_upper_triangular(&(qr.q().transpose() * &d.y)).unwrap();
        assert!((fit.posterior_mean_a() - ols.transpose()).abs().max() < 1e-6);
    }

    #[test]
    fn recovers_known_var1() {
        let (d, truth) = var1_design(200, 3);
        let c = cfg(0.5, 100.0);
        let fit = estimate_bvar(&d, &[0.0, 0.0], &c, 2000, 4).unwrap();
        let mean = fit.posterior_mean_a();
        for i in 0..2 {
            for j in 0..3 {
                let xs: Vec<f64> = fit.draws.iter().map(|dr| dr.a[(i, j)]).collect();
                let sd = crate::stats::sample_sd(&xs);
                assert!((mean[(i, j)] - truth[(i, j)]).abs() < 3.0 * sd, "A[{i},{j}]");
            }
        }
    }

    fn fixture_draw() -> LinearVarDraw {
        let a = DMatrix::from_row_slice(3, 7, &[
            0.5, 0.1, 0.0, 0.1, 0.0, 0.0, 0.2,
            -0.2, 0.6, 0.1, 0.0, 0.1, 0.0, -0.1,
            0.1, 0.3, 0.4, 0.0, 0.0, 0.2, 0.0,
        ]);
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 0.8, 0.2, 0.1, 0.2, 0.5]);
        LinearVarDraw { a, sigma }
    }

    #[test]
    fn no_dynamics_means_impact_only() {
        let mut d = fixture_draw();
        d.a.fill(0.0);
        let irf = linear_irf(&d, 2, 1, 1.0, 5, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(irf[(0, 0)], 0.0);
        assert_eq!(irf[(0, 1)], 2.0);
        assert!(irf[(0, 2)] != 0.0);
        assert!(irf.rows(1, 5).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_irf_is_odd_and_homogeneous_exactly() {
        let d = fixture_draw();
        let s = [0.7, 1.3, 2.0];
        for v in [0.1, 1.0, 3.5, 6.0] {
            let pos = linear_irf(&d, 2, 1, v, 24, &s).unwrap();
            let neg = linear_irf(&d, 2, 1, -v, 24, &s).unwrap();
            let dbl = linear_irf(&d, 2, 1, 2.0 * v, 24, &s).unwrap();
            assert_eq!(pos, -neg);
            assert_eq!(dbl, pos * 2.0);
        }
    }
}
