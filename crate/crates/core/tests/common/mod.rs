#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use vastvar_core::basis::{build_basis, TransitionSpec};
use vastvar_core::data::{Block, Month};
use vastvar_core::girf::GirfResult;
use vastvar_core::niw::{self, NiwPrior};
use vastvar_core::rng::StreamRng;
use vastvar_core::sampler::{StepSizes, SweepState, TransitionPrior};
use vastvar_core::stats::{batch_means_se, mean, sample_sd};
use vastvar_core::{DesignMatrix, GirfRequest, McmcChain, NoiseMode, TrueModel};

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Scalar regression `y = W b + e` with `b | σ² ~ N(b0, σ² V0)` and
/// `σ² ~ IG(v0/2, s0/2)`.
pub struct ScalarFixture {
    pub w: [[f64; 2]; 3],
    pub y: [f64; 3],
    pub b0: [f64; 2],
    pub v0: [[f64; 2]; 2],
    pub dof: f64,
    pub s0: f64,
}

pub struct ScalarPosterior {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub dof: f64,
    pub scale: f64,
}

fn inv2(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

fn quad2(a: [[f64; 2]; 2], x: [f64; 2]) -> f64 {
    x[0] * (a[0][0] * x[0] + a[0][1] * x[1]) + x[1] * (a[1][0] * x[0] + a[1][1] * x[1])
}

impl ScalarFixture {
    pub fn standard() -> Self {
        ScalarFixture {
            w: [[1.0, 0.3], [0.2, -1.1], [-0.7, 0.4]],
            y: [0.9, -1.3, 0.25],
            b0: [0.2, -0.1],
            v0: [[1.5, 0.3], [0.3, 0.8]],
            dof: 3.0,
            s0: 0.7,
        }
    }

    pub fn prior(&self) -> NiwPrior {
        NiwPrior::new(
            self.dof,
            DMatrix::from_element(1, 1, self.s0),
            DMatrix::from_row_slice(2, 1, &self.b0),
            DMatrix::from_fn(2, 2, |i, j| self.v0[i][j]),
        )
        .unwrap()
    }

    pub fn w_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, 2, |i, j| self.w[i][j])
    }

    pub fn y_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 1, &self.y)
    }

    /// Posterior hyperparameters by hand.
    pub fn closed_form(&self) -> ScalarPosterior {
        let vinv = inv2(self.v0);
        let mut prec = vinv;
        let mut rhs = [
            vinv[0][0] * self.b0[0] + vinv[0][1] * self.b0[1],
            vinv[1][0] * self.b0[0] + vinv[1][1] * self.b0[1],
        ];
        for t in 0..3 {
            for i in 0..2 {
                for j in 0..2 {
                    prec[i][j] += self.w[t][i] * self.w[t][j];
                }
                rhs[i] += self.w[t][i] * self.y[t];
            }
        }
        let cov = inv2(prec);
        let mean = [
            cov[0][0] * rhs[0] + cov[0][1] * rhs[1],
            cov[1][0] * rhs[0] + cov[1][1] * rhs[1],
        ];
        let yy: f64 = self.y.iter().map(|v| v * v).sum();
        let scale = self.s0 + yy + quad2(vinv, self.b0) - quad2(prec, mean);
        ScalarPosterior {
            mean,
            cov,
            dof: self.dof + 3.0,
            scale,
        }
    }

    /// `ln p(y, b)` with `σ²` integrated out analytically.
    pub fn log_joint(&self, b: [f64; 2]) -> f64 {
        let vinv = inv2(self.v0);
        let det_v0 = self.v0[0][0] * self.v0[1][1] - self.v0[0][1] * self.v0[1][0];
        let mut q = quad2(vinv, [b[0] - self.b0[0], b[1] - self.b0[1]]);
        for t in 0..3 {
            let r = self.y[t] - self.w[t][0] * b[0] - self.w[t][1] * b[1];
            q += r * r;
        }
        let n = 3.0;
        let a = 0.5 * (self.dof + n + 2.0);
        0.5 * self.dof * (0.5 * self.s0).ln() - ln_gamma(0.5 * self.dof) - 0.5 * det_v0.ln()
            - 0.5 * (n + 2.0) * (2.0 * std::f64::consts::PI).ln()
            + ln_gamma(a)
            - a * (0.5 * (self.s0 + q)).ln()
    }

    /// `ln p(y)` by nested adaptive quadrature over both coefficients.
    pub fn quadrature_log_marginal(&self) -> f64 {
        let post = self.closed_form();
        let sd = [
            (post.cov[0][0] * post.scale / post.dof).sqrt(),
            (post.cov[1][1] * post.scale / post.dof).sqrt(),
        ];
        let c = post.mean;
        let anchor = self.log_joint(c);
        let half = std::f64::consts::FRAC_PI_2;
        let inner = |t1: f64| {
            let b1 = c[0] + sd[0] * t1.tan();
            let j1 = sd[0] / t1.cos().powi(2);
            let g = |t2: f64| {
                let b2 = c[1] + sd[1] * t2.tan();
                let j2 = sd[1] / t2.cos().powi(2);
                let v = (self.log_joint([b1, b2]) - anchor).exp() * j1 * j2;
                if v.is_finite() { v } else { 0.0 }
            };
            simpson(&g, -half, half, 1e-11)
        };
        anchor + simpson(&inner, -half, half, 1e-10).ln()
    }
}

/// Moments of one Geweke comparison.
pub struct GewekeRow {
    pub name: &'static str,
    pub prior_mean: f64,
    pub chain_mean: f64,
    pub z: f64,
}

fn geweke_prior() -> (NiwPrior, TransitionPrior) {
    let prior = NiwPrior::new(
        8.0,
        DMatrix::from_element(1, 1, 6.0),
        DMatrix::zeros(2, 1),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let tp = TransitionPrior {
        mu_mean: 0.0,
        mu_var: 1.0,
        phi_shape: 4.0,
        phi_rate: 2.0,
    };
    (prior, tp)
}

fn simulate_y(x: &DMatrix<f64>, specs: &[TransitionSpec], b: &DMatrix<f64>, sigma2: f64, rng: &mut StreamRng) -> DMatrix<f64> {
    let w = build_basis(x, specs).unwrap().w;
    let mean = w * b;
    DMatrix::from_fn(x.nrows(), 1, |t, _| mean[(t, 0)] + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal))
}

fn summaries(specs: &[TransitionSpec], b: &DMatrix<f64>, sigma2: f64) -> [f64; 8] {
    let s = specs[0];
    [s.mu, s.phi, f64::from(u8::from(s.sel == 0)), b[(0, 0)], b[(1, 0)], sigma2, s.mu * s.mu, b[(0, 0)] * b[(0, 0)]]
}

const GEWEKE_NAMES: [&str; 8] = ["mu", "phi", "delta=0", "beta_S", "beta_1-S", "sigma2", "mu^2", "beta_S^2"];

/// Joint-distribution test with `M = 1`, `R = 1`, `T = 5`: draws of the
/// marginal-conditional simulator against the successive-conditional chain
/// that alternates one sampler sweep with a fresh `y | θ`.
pub fn geweke(n: usize, seed: u64) -> Vec<GewekeRow> {
    let (prior, tp) = geweke_prior();
    let mut rng = StreamRng::seed_from_u64(seed);
    let x = DMatrix::from_fn(5, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let draw_theta = |rng: &mut StreamRng| {
        let sel = rng.random_range(0..2);
        let (mu, phi) = tp.sample(rng);
        let d = niw::sample_prior(&prior, rng).unwrap();
        (vec![TransitionSpec::new(sel, mu, phi)], d.b, d.sigma[(0, 0)])
    };

    let mut marginal: Vec<[f64; 8]> = Vec::with_capacity(n);
    for _ in 0..n {
        let (specs, b, s2) = draw_theta(&mut rng);
        marginal.push(summaries(&specs, &b, s2));
    }

    let steps = StepSizes { mu: 1.0, log_phi: 0.7 };
    let (mut specs, mut b, mut s2) = draw_theta(&mut rng);
    let mut y = simulate_y(&x, &specs, &b, s2, &mut rng);
    let mut successive: Vec<[f64; 8]> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut st = SweepState::new(&x, &y, &prior, build_basis(&x, &specs).unwrap()).unwrap();
        st.update_delta(0, 0, &mut rng).unwrap();
        st.update_mu_phi(0, &tp, steps, &mut rng).unwrap();
        let d = st.draw_coefficients(&mut rng).unwrap();
        specs = st.basis.specs.clone();
        b = d.b;
        s2 = d.sigma[(0, 0)];
        y = simulate_y(&x, &specs, &b, s2, &mut rng);
        successive.push(summaries(&specs, &b, s2));
    }

    (0..8)
        .map(|k| {
            let a: Vec<f64> = marginal.iter().map(|r| r[k]).collect();
            let c: Vec<f64> = successive.iter().map(|r| r[k]).collect();
            let se_a = sample_sd(&a) / (a.len() as f64).sqrt();
            let se_c = batch_means_se(&c, 50);
            let (ma, mc) = (mean(&a), mean(&c));
            GewekeRow {
                name: GEWEKE_NAMES[k],
                prior_mean: ma,
                chain_mean: mc,
                z: (mc - ma) / (se_a * se_a + se_c * se_c).sqrt(),
            }
        })
        .collect()
}

pub struct Recovery {
    pub r2: f64,
    pub r2_by_var: Vec<f64>,
    pub selection: f64,
    pub n_active: usize,
}

/// In-sample fit of the posterior-mean conditional mean against the truth,
/// and the share of active learners (regime contrast at least `active_frac`
/// of the largest in their draw) that split on one of `true_columns`.
pub fn recovery(chain: &McmcChain, design: &DesignMatrix, truth: &TrueModel, true_columns: &[usize], active_frac: f64) -> Recovery {
    let fit = chain.posterior_mean_fit(&design.x).unwrap();
    let tru = truth.fitted(&design.x);
    let m = tru.ncols();
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut r2_by_var = Vec::with_capacity(m);
    for v in 0..m {
        let col = tru.column(v);
        let mu = col.mean();
        let res: f64 = (0..tru.nrows()).map(|t| (fit[(t, v)] - tru[(t, v)]).powi(2)).sum();
        let tot: f64 = col.iter().map(|c| (c - mu).powi(2)).sum();
        r2_by_var.push(if tot > 0.0 { 1.0 - res / tot } else { f64::NAN });
        ss_res += res;
        ss_tot += tot;
    }
    let mut hits = 0usize;
    let mut active = 0usize;
    for d in &chain.draws {
        let b = &d.draw.b;
        let contrast: Vec<f64> = (0..d.specs.len())
            .map(|r| (0..b.ncols()).map(|v| (b[(2 * r, v)] - b[(2 * r + 1, v)]).powi(2)).sum::<f64>().sqrt())
            .collect();
        let top = contrast.iter().copied().fold(0.0, f64::max);
        for (r, c) in contrast.iter().enumerate() {
            if top > 0.0 && *c >= active_frac * top {
                active += 1;
                if true_columns.contains(&d.specs[r].sel) {
                    hits += 1;
                }
            }
        }
    }
    Recovery {
        r2: 1.0 - ss_res / ss_tot,
        r2_by_var,
        selection: hits as f64 / active.max(1) as f64,
        n_active: active,
    }
}

/// Design columns holding `(variable, lag)` pairs.
pub fn columns_of(design: &DesignMatrix, pairs: &[(usize, usize)]) -> Vec<usize> {
    design
        .lag_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| pairs.contains(l))
        .map(|(i, _)| i)
        .collect()
}

/// A hand-built GIRF result with `responses[d][o][s][h][m] = f(d, o, s, h, m)`.
pub fn girf_fixture(
    n_draws: usize,
    n_origins: usize,
    sigmas: &[f64],
    horizon: usize,
    n_vars: usize,
    f: impl Fn(usize, usize, usize, usize, usize) -> f64,
) -> GirfResult {
    let block = sigmas.len() * (horizon + 1) * n_vars;
    let mut responses = Vec::with_capacity(n_draws * n_origins * block);
    for d in 0..n_draws {
        for o in 0..n_origins {
            for s in 0..sigmas.len() {
                for h in 0..=horizon {
                    for m in 0..n_vars {
                        responses.push(f(d, o, s, h, m));
                    }
                }
            }
        }
    }
    let mut time_avg = vec![0.0; n_draws * block];
    for d in 0..n_draws {
        for i in 0..block {
            let xs: Vec<f64> = (0..n_origins).map(|o| responses[(d * n_origins + o) * block + i]).collect();
            time_avg[d * block + i] = mean(&xs);
        }
    }
    GirfResult {
        shock_index: 0,
        sigmas: sigmas.to_vec(),
        horizon,
        n_vars,
        names: (0..n_vars).map(|m| format!("v{m}")).collect(),
        blocks: vec![Block::Macro; n_vars],
        scale: vec![1.0; n_vars],
        origins: (0..n_origins).collect(),
        origin_dates: (0..n_origins).map(|o| Month::new(2000 + o as i32, 1)).collect(),
        draw_ids: (0..n_draws).collect(),
        quantile_levels: vec![],
        n_sim: 1,
        noise: NoiseMode::Zero,
        seed: 0,
        responses,
        time_avg,
        quantiles: vec![],
    }
}

/// GIRF request over every `stride`-th origin for the given shock sizes.
pub fn request(sigmas: &[f64], horizon: usize, n_sim: usize, stride: usize, draw_thin: usize, seed: u64) -> GirfRequest {
    GirfRequest {
        sigmas: sigmas.to_vec(),
        horizon,
        n_sim,
        origin_stride: stride,
        draw_thin,
        seed,
        ..GirfRequest::default()
    }
}
