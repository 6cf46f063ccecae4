//! Conjugate Normal-inverse-Wishart machinery for `Y = W B + E`,
//! `E_t ~ N(0, Σ)`, with `Σ ~ IW(v0, S0)` and `B | Σ ~ MN(B0, V0, Σ)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, ln_mv_gamma, spd_cholesky, symmetrize};

/// Prior scale `ξ` of `S0 = ξ I`.
pub const DEFAULT_XI: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct NiwPrior {
    pub dof: f64,
    pub scale: DMatrix<f64>,
    pub mean: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
    col_prec: DMatrix<f64>,
    prec_mean: DMatrix<f64>,
    mean_quad: DMatrix<f64>,
    col_cov_logdet: f64,
    scale_logdet: f64,
}

impl NiwPrior {
    pub fn new(
        dof: f64,
        scale: DMatrix<f64>,
        mean: DMatrix<f64>,
        col_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let m = scale.nrows();
        let n = col_cov.nrows();
        if scale.ncols() != m || col_cov.ncols() != n || mean.shape() != (n, m) {
            return Err(Error::Dimension(format!(
                "prior shapes: S0 {:?}, B0 {:?}, V0 {:?}",
                scale.shape(),
                mean.shape(),
                col_cov.shape()
            )));
        }
        if !(dof > m as f64 - 1.0) {
            return Err(Error::Dimension(format!(
                "prior degrees of freedom {dof} must exceed M - 1 = {}",
                m as f64 - 1.0
            )));
        }
        let s_chol = spd_cholesky(&scale, "S0")?;
        let v_chol = spd_cholesky(&col_cov, "V0")?;
        let col_prec = symmetrize(&v_chol.inverse());
        let prec_mean = &col_prec * &mean;
        let mean_quad = symmetrize(&(mean.transpose() * &prec_mean));
        Ok(NiwPrior {
            dof,
            col_cov_logdet: chol_logdet(&v_chol),
            scale_logdet: chol_logdet(&s_chol),
            scale,
            mean,
            col_cov,
            col_prec,
            prec_mean,
            mean_quad,
        })
    }

    /// `v0 = M`, `S0 = ξ I_M`, `B0 = 0`, `V0 = (1/J) I` over `n_basis` columns.
    pub fn standard(m: usize, n_basis: usize, xi: f64, j: f64) -> Result<Self> {
        Self::new(
            m as f64,
            DMatrix::identity(m, m) * xi,
            DMatrix::zeros(n_basis, m),
            DMatrix::identity(n_basis, n_basis) / j,
        )
    }

    pub fn n_vars(&self) -> usize {
        self.scale.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.col_cov.nrows()
    }

    pub fn col_prec(&self) -> &DMatrix<f64> {
        &self.col_prec
    }
}

/// Sufficient statistics `(W'W, W'Y, Y'Y, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossProducts {
    pub wtw: DMatrix<f64>,
    pub wty: DMatrix<f64>,
    pub yty: DMatrix<f64>,
    pub n: usize,
}

impl CrossProducts {
    pub fn from_data(w: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if w.nrows() != y.nrows() {
            return Err(Error::Dimension(format!(
                "W has {} rows, Y has {}",
                w.nrows(),
                y.nrows()
            )));
        }
        Ok(CrossProducts {
            wtw: symmetrize(&w.tr_mul(w)),
            wty: w.tr_mul(y),
            yty: symmetrize(&y.tr_mul(y)),
            n: w.nrows(),
        })
    }

    /// Replaces the contributions of basis columns `2r, 2r+1` given the full
    /// updated `w` (whose columns `2r, 2r+1` already hold the new values).
    pub fn refresh_pair(&mut self, w: &DMatrix<f64>, y: &DMatrix<f64>, r: usize) {
        let n_basis = w.ncols();
        for c in [2 * r, 2 * r + 1] {
            let col = w.column(c);
            for j in 0..n_basis {
                let v = col.dot(&w.column(j));
                self.wtw[(c, j)] = v;
                self.wtw[(j, c)] = v;
            }
            for m in 0..y.ncols() {
                self.wty[(c, m)] = col.dot(&y.column(m));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwPosterior {
    pub dof: f64,
    pub scale: DMatrix<f64>,
    pub mean: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
    pub logml: f64,
}

/// One joint draw of the coefficient matrix (rows: basis columns, columns:
/// equations) and the error covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub b: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

struct Core {
    prec_chol: crate::linalg::Chol,
    mean: DMatrix<f64>,
    scale: DMatrix<f64>,
    logml: f64,
}

fn core(prior: &NiwPrior, cp: &CrossProducts) -> Result<Core> {
    let m = prior.n_vars();
    let nb = prior.n_basis();
    if cp.wtw.shape() != (nb, nb) || cp.wty.shape() != (nb, m) || cp.yty.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "cross products {:?}/{:?}/{:?} do not match prior with {nb} basis columns and M = {m}",
            cp.wtw.shape(),
            cp.wty.shape(),
            cp.yty.shape()
        )));
    }
    let precision = &prior.col_prec + &cp.wtw;
    let prec_chol = spd_cholesky(&precision, "posterior precision V0^-1 + W'W")?;
    let rhs = &prior.prec_mean + &cp.wty;
    let mean = prec_chol.solve(&rhs);
    let scale = symmetrize(&(&prior.scale + &cp.yty + &prior.mean_quad - rhs.tr_mul(&mean)));
    let scale_chol = spd_cholesky(&scale, "SN")?;
    let n = cp.n as f64;
    let mf = m as f64;
    let dof_n = prior.dof + n;
    let logdet_vn = -chol_logdet(&prec_chol);
    let logml = -0.5 * n * mf * std::f64::consts::PI.ln()
        + 0.5 * mf * (logdet_vn - prior.col_cov_logdet)
        + 0.5 * prior.dof * prior.scale_logdet
        - 0.5 * dof_n * chol_logdet(&scale_chol)
        + ln_mv_gamma(m, 0.5 * dof_n)
        - ln_mv_gamma(m, 0.5 * prior.dof);
    if !logml.is_finite() {
        return Err(Error::Numerical(format!("log marginal likelihood is {logml}")));
    }
    Ok(Core {
        prec_chol,
        mean,
        scale,
        logml,
    })
}

pub fn update_from_crossprod(prior: &NiwPrior, cp: &CrossProducts) -> Result<NiwPosterior> {
    if cp.n == 0 {
        return Ok(NiwPosterior {
            dof: prior.dof,
            scale: prior.scale.clone(),
            mean: prior.mean.clone(),
            col_cov: prior.col_cov.clone(),
            logml: 0.0,
        });
    }
    let c = core(prior, cp)?;
    Ok(NiwPosterior {
        dof: prior.dof + cp.n as f64,
        scale: c.scale,
        mean: c.mean,
        col_cov: symmetrize(&c.prec_chol.inverse()),
        logml: c.logml,
    })
}

pub fn log_marginal_from_crossprod(prior: &NiwPrior, cp: &CrossProducts) -> Result<f64> {
    if cp.n == 0 {
        return Ok(0.0);
    }
    Ok(core(prior, cp)?.logml)
}

pub fn update(prior: &NiwPrior, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<NiwPosterior> {
    update_from_crossprod(prior, &CrossProducts::from_data(w, y)?)
}

pub fn log_marginal(prior: &NiwPrior, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    log_marginal_from_crossprod(prior, &CrossProducts::from_data(w, y)?)
}

/// `Σ ~ IW(dof, scale)` via the Bartlett decomposition.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    dof: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let m = scale.nrows();
    let c = spd_cholesky(scale, "inverse-Wishart scale")?;
    // Σ^{-1} = F A A' F' with F F' = scale^{-1} and F = C^{-T}, so
    // Σ = (C A^{-T}) (C A^{-T})'.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let chi = ChiSquared::new(dof - i as f64)
            .map_err(|e| Error::Numerical(format!("Bartlett chi-square: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let a_inv = a
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::Numerical("degenerate Bartlett factor".into()))?;
    let g = c.l() * a_inv.transpose();
    Ok(symmetrize(&(&g * g.transpose())))
}

/// `B ~ MN(mean, col_cov, sigma)`.
pub fn sample_matrix_normal<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    col_cov: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let lv = spd_cholesky(col_cov, "VN")?.l();
    let ls = spd_cholesky(sigma, "Sigma")?.l();
    let z = DMatrix::<f64>::from_fn(mean.nrows(), mean.ncols(), |_, _| rng.sample(StandardNormal));
    Ok(mean + lv * z * ls.transpose())
}

pub fn sample<R: Rng + ?Sized>(post: &NiwPosterior, rng: &mut R) -> Result<PosteriorDraw> {
    let sigma = sample_inverse_wishart(post.dof, &post.scale, rng)?;
    let b = sample_matrix_normal(&post.mean, &post.col_cov, &sigma, rng)?;
    Ok(PosteriorDraw { b, sigma })
}

/// Draw from the prior itself.
pub fn sample_prior<R: Rng + ?Sized>(prior: &NiwPrior, rng: &mut R) -> Result<PosteriorDraw> {
    let sigma = sample_inverse_wishart(prior.dof, &prior.scale, rng)?;
    let b = sample_matrix_normal(&prior.mean, &prior.col_cov, &sigma, rng)?;
    Ok(PosteriorDraw { b, sigma })
}
