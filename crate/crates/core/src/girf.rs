//! Generalized impulse responses by Monte Carlo integration over the
//! conditional mean, per draw, origin and shock size.
//!
//! The shocked branch is propagated as a deviation from the baseline branch,
//! `Y^s = Y^b + [F(X^b + D) - F(X^b)]`, so shared innovations cancel exactly
//! instead of up to rounding.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Block, Month, PanelDataset};
use crate::error::{Error, Result};
use crate::identify::StructuralFactor;
use crate::minnesota::LinearBvar;
use crate::model::{ConditionalMean, LinearMean, VastMean};
use crate::rng::{stream, StreamRng};
use crate::sampler::McmcChain;
use crate::stats::{pairwise_sum, quantile_sorted};

/// Benign (negative) and adverse (positive) shock sizes in standard deviations.
pub const DEFAULT_SIGMAS: [f64; 18] = [
    -6.0, -5.0, -4.0, -3.0, -2.0, -1.5, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Innovations shared between the shocked and baseline branches.
    #[default]
    Common,
    /// Independent innovations per branch.
    Independent,
    /// Means propagated without innovations (one path).
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GirfRequest {
    /// Shocked variable; defaults to the EBP position.
    pub shock_index: Option<usize>,
    pub sigmas: Vec<f64>,
    #[serde(rename = "H")]
    pub horizon: usize,
    /// Design-row indices (origin `o` shocks data row `P + o`); all by default.
    pub origins: Option<Vec<usize>>,
    pub origin_stride: usize,
    pub n_sim: usize,
    pub draw_thin: usize,
    pub seed: u64,
    /// Percentiles over draws of the time-averaged responses.
    pub quantiles: Vec<f64>,
    pub noise: NoiseMode,
}

impl Default for GirfRequest {
    fn default() -> Self {
        GirfRequest {
            shock_index: None,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            horizon: 24,
            origins: None,
            origin_stride: 1,
            n_sim: 100,
            draw_thin: 1,
            seed: 1,
            quantiles: vec![16.0, 50.0, 84.0],
            noise: NoiseMode::Common,
        }
    }
}

impl GirfRequest {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: String| Err(Error::config(format!("girf.{f}"), m));
        if self.sigmas.is_empty() {
            return bad("sigmas", "needs at least one shock size".into());
        }
        if let Some(i) = self.sigmas.iter().position(|s| *s == 0.0 || !s.is_finite()) {
            return bad(&format!("sigmas[{i}]"), "must be finite and nonzero".into());
        }
        if self.noise != NoiseMode::Zero && self.n_sim < 2 {
            return bad("n_sim", "must be at least 2".into());
        }
        if self.origin_stride == 0 {
            return bad("origin_stride", "must be at least 1".into());
        }
        if self.draw_thin == 0 {
            return bad("draw_thin", "must be at least 1".into());
        }
        if let Some(i) = self.quantiles.iter().position(|q| !(0.0..=100.0).contains(q)) {
            return bad(&format!("quantiles[{i}]"), "must lie in [0, 100]".into());
        }
        if matches!(&self.origins, Some(o) if o.is_empty()) {
            return bad("origins", "must not be empty".into());
        }
        Ok(())
    }

    fn paths(&self) -> usize {
        if self.noise == NoiseMode::Zero {
            1
        } else {
            self.n_sim
        }
    }
}

/// One posterior draw: conditional mean plus standardized innovation covariance.
#[derive(Debug, Clone)]
pub struct ModelDraw<F> {
    pub mean: F,
    pub sigma: DMatrix<f64>,
}

pub fn vast_draws(chain: &McmcChain) -> Vec<ModelDraw<VastMean>> {
    chain
        .draws
        .iter()
        .map(|d| ModelDraw {
            mean: d.conditional_mean(chain.config.lags),
            sigma: d.draw.sigma.clone(),
        })
        .collect()
}

pub fn linear_draws(bvar: &LinearBvar) -> Vec<ModelDraw<LinearMean>> {
    bvar.draws
        .iter()
        .map(|d| ModelDraw {
            mean: d.conditional_mean(bvar.lags),
            sigma: d.sigma.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirfResult {
    pub shock_index: usize,
    pub sigmas: Vec<f64>,
    pub horizon: usize,
    pub n_vars: usize,
    pub names: Vec<String>,
    pub blocks: Vec<Block>,
    /// Transformed-unit standard deviations used to de-standardize.
    pub scale: Vec<f64>,
    /// Design-row index of every origin and the date of the shocked month.
    pub origins: Vec<usize>,
    pub origin_dates: Vec<Month>,
    /// Position of every kept draw in the input draw list.
    pub draw_ids: Vec<usize>,
    pub quantile_levels: Vec<f64>,
    pub n_sim: usize,
    pub noise: NoiseMode,
    pub seed: u64,
    /// `[draw][origin][ς][h][m]`.
    pub responses: Vec<f64>,
    /// `[draw][ς][h][m]`, mean over origins.
    pub time_avg: Vec<f64>,
    /// `[quantile][ς][h][m]` over draws of `time_avg`.
    pub quantiles: Vec<f64>,
}

impl GirfResult {
    pub fn n_draws(&self) -> usize {
        self.draw_ids.len()
    }

    pub fn n_origins(&self) -> usize {
        self.origins.len()
    }

    pub fn n_sigmas(&self) -> usize {
        self.sigmas.len()
    }

    fn block(&self) -> usize {
        (self.horizon + 1) * self.n_vars
    }

    pub fn response(&self, d: usize, o: usize, s: usize, h: usize, m: usize) -> f64 {
        let i = ((d * self.n_origins() + o) * self.n_sigmas() + s) * self.block() + h * self.n_vars + m;
        self.responses[i]
    }

    /// Response path over horizons for one draw, origin, shock and variable.
    pub fn response_path(&self, d: usize, o: usize, s: usize, m: usize) -> Vec<f64> {
        (0..=self.horizon).map(|h| self.response(d, o, s, h, m)).collect()
    }

    pub fn time_avg_path(&self, d: usize, s: usize, m: usize) -> Vec<f64> {
        let base = (d * self.n_sigmas() + s) * self.block();
        (0..=self.horizon)
            .map(|h| self.time_avg[base + h * self.n_vars + m])
            .collect()
    }

    pub fn quantile_path(&self, q: usize, s: usize, m: usize) -> Vec<f64> {
        let base = (q * self.n_sigmas() + s) * self.block();
        (0..=self.horizon)
            .map(|h| self.quantiles[base + h * self.n_vars + m])
            .collect()
    }

    /// Pointwise posterior median over draws of the response at one origin.
    pub fn median_path(&self, o: usize, s: usize, m: usize) -> Vec<f64> {
        (0..=self.horizon)
            .map(|h| {
                let mut v: Vec<f64> = (0..self.n_draws()).map(|d| self.response(d, o, s, h, m)).collect();
                v.sort_by(f64::total_cmp);
                quantile_sorted(&v, 0.5)
            })
            .collect()
    }
}

/// Mean response in standardized units, `(H+1) × M` row-major.
#[allow(clippy::too_many_arguments)]
fn simulate<F: ConditionalMean>(
    mean: &F,
    chol: &DMatrix<f64>,
    data: &PanelDataset,
    row: usize,
    impact: &[f64],
    horizon: usize,
    n_paths: usize,
    noise: NoiseMode,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let m = data.n_vars();
    let lags = mean.n_lags();
    let k = m * lags;
    let base0 = data.lag_state(row + 1, lags);
    let mut dev0 = vec![0.0; k];
    dev0[..m].copy_from_slice(impact);

    let block = horizon * m;
    let mut sims = vec![0.0; n_paths * block];
    let (mut fb, mut fd, mut e, mut e2, mut z) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut draw_noise = |rng: &mut StreamRng, out: &mut [f64]| {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..m {
            out[i] = (0..=i).map(|j| chol[(i, j)] * z[j]).sum();
        }
    };
    let shift = |state: &mut Vec<f64>, y: &[f64]| {
        state.copy_within(0..k - m, m);
        state[..m].copy_from_slice(y);
    };

    for path in 0..n_paths {
        let out = &mut sims[path * block..(path + 1) * block];
        let mut base = base0.clone();
        match noise {
            NoiseMode::Common | NoiseMode::Zero => {
                let mut dev = dev0.clone();
                for h in 1..=horizon {
                    mean.eval(&base, &mut fb);
                    mean.eval_deviation(&base, &dev, &mut fd);
                    if noise == NoiseMode::Common {
                        draw_noise(rng, &mut e);
                        for i in 0..m {
                            fb[i] += e[i];
                        }
                    }
                    out[(h - 1) * m..h * m].copy_from_slice(&fd);
                    shift(&mut base, &fb);
                    shift(&mut dev, &fd);
                }
            }
            NoiseMode::Independent => {
                let mut shocked: Vec<f64> = base.iter().zip(&dev0).map(|(a, b)| a + b).collect();
                for h in 1..=horizon {
                    mean.eval(&base, &mut fb);
                    mean.eval(&shocked, &mut fd);
                    draw_noise(rng, &mut e);
                    draw_noise(rng, &mut e2);
                    for i in 0..m {
                        fb[i] += e[i];
                        fd[i] += e2[i];
                        out[(h - 1) * m + i] = fd[i] - fb[i];
                    }
                    shift(&mut base, &fb);
                    shift(&mut shocked, &fd);
                }
            }
        }
    }

    let mut result = vec![0.0; (horizon + 1) * m];
    result[..m].copy_from_slice(impact);
    let mut col = vec![0.0; n_paths];
    for i in 0..block {
        for (p, c) in col.iter_mut().enumerate() {
            *c = sims[p * block + i];
        }
        result[m + i] = pairwise_sum(&col) / n_paths as f64;
    }
    result
}

fn check_origin(data: &PanelDataset, lags: usize, origin: usize) -> Result<usize> {
    let row = lags + origin;
    if row >= data.n_obs() {
        return Err(Error::Index {
            what: "origin",
            index: origin,
            limit: data.n_obs().saturating_sub(lags),
        });
    }
    Ok(row)
}

/// Response of one draw at one origin, `(H+1) × M` in transformed units.
/// `factor.pmat` is the Cholesky factor of the standardized covariance and
/// `factor.s` the de-standardization scale.
#[allow(clippy::too_many_arguments)]
pub fn girf_one<F: ConditionalMean>(
    mean: &F,
    factor: &StructuralFactor,
    data: &PanelDataset,
    origin: usize,
    varsigma: f64,
    horizon: usize,
    n_sim: usize,
    noise: NoiseMode,
    rng: &mut StreamRng,
) -> Result<DMatrix<f64>> {
    let m = data.n_vars();
    if mean.n_vars() != m || factor.pmat.nrows() != m {
        return Err(Error::Dimension("model and data disagree on M".into()));
    }
    let row = check_origin(data, mean.n_lags(), origin)?;
    let n_paths = if noise == NoiseMode::Zero { 1 } else { n_sim.max(1) };
    let std = simulate(
        mean,
        &factor.pmat,
        data,
        row,
        &factor.unit_impact(varsigma),
        horizon,
        n_paths,
        noise,
        rng,
    );
    Ok(DMatrix::from_fn(horizon + 1, m, |h, v| std[h * m + v] * factor.s[v]))
}

/// Responses for every kept draw, origin and shock size.
pub fn girf_batch<F: ConditionalMean>(
    draws: &[ModelDraw<F>],
    data: &PanelDataset,
    req: &GirfRequest,
) -> Result<GirfResult> {
    req.validate()?;
    let first = draws
        .first()
        .ok_or_else(|| Error::config("girf", "no posterior draws to simulate from"))?;
    let m = data.n_vars();
    let lags = first.mean.n_lags();
    if first.mean.n_vars() != m {
        return Err(Error::Dimension(format!(
            "model has {} variables, data has {m}",
            first.mean.n_vars()
        )));
    }
    let j = req.shock_index.unwrap_or_else(|| data.ebp_index());
    if j >= m {
        return Err(Error::config("girf.shock_index", format!("{j} is out of range for M = {m}")));
    }
    let n_design = data.n_obs().saturating_sub(lags);
    let origins: Vec<usize> = match &req.origins {
        Some(o) => o.clone(),
        None => (0..n_design).step_by(req.origin_stride).collect(),
    };
    let rows = origins
        .iter()
        .map(|&o| check_origin(data, lags, o))
        .collect::<Result<Vec<_>>>()?;
    let draw_ids: Vec<usize> = (0..draws.len()).step_by(req.draw_thin).collect();
    let scale = data.scale_sds();
    let h1 = req.horizon + 1;
    let block = h1 * m;
    let n_sig = req.sigmas.len();
    let n_paths = req.paths();

    let factors = draw_ids
        .par_iter()
        .map(|&d| StructuralFactor::from_sigma(&draws[d].sigma, j, scale.clone()))
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> = (0..draw_ids.len())
        .flat_map(|d| (0..origins.len()).map(move |o| (d, o)))
        .collect();
    let chunks: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(d, o)| {
            let draw = &draws[draw_ids[d]];
            let factor = &factors[d];
            let mut out = Vec::with_capacity(n_sig * block);
            for &sig in &req.sigmas {
                let mut rng = stream(req.seed, &[draw_ids[d] as u64, origins[o] as u64]);
                let std = simulate(
                    &draw.mean,
                    &factor.pmat,
                    data,
                    rows[o],
                    &factor.unit_impact(sig),
                    req.horizon,
                    n_paths,
                    req.noise,
                    &mut rng,
                );
                out.extend(std.iter().enumerate().map(|(i, v)| v * scale[i % m]));
            }
            out
        })
        .collect();
    let responses: Vec<f64> = chunks.concat();
    if let Some(i) = responses.iter().position(|v| !v.is_finite()) {
        let per_draw = origins.len() * n_sig * block;
        return Err(Error::Numerical(format!(
            "non-finite response for draw {}",
            draw_ids[i / per_draw]
        )));
    }

    let n_o = origins.len();
    let per_sig = n_sig * block;
    let mut time_avg = vec![0.0; draw_ids.len() * per_sig];
    let mut col = vec![0.0; n_o];
    for d in 0..draw_ids.len() {
        for i in 0..per_sig {
            for (o, c) in col.iter_mut().enumerate() {
                *c = responses[(d * n_o + o) * per_sig + i];
            }
            time_avg[d * per_sig + i] = pairwise_sum(&col) / n_o as f64;
        }
    }

    let mut quantiles = vec![0.0; req.quantiles.len() * per_sig];
    let mut v = vec![0.0; draw_ids.len()];
    for i in 0..per_sig {
        for (d, x) in v.iter_mut().enumerate() {
            *x = time_avg[d * per_sig + i];
        }
        v.sort_by(f64::total_cmp);
        for (q, level) in req.quantiles.iter().enumerate() {
            quantiles[q * per_sig + i] = quantile_sorted(&v, level / 100.0);
        }
    }

    Ok(GirfResult {
        shock_index: j,
        sigmas: req.sigmas.clone(),
        horizon: req.horizon,
        n_vars: m,
        names: data.names(),
        blocks: data.meta.iter().map(|v| v.block).collect(),
        scale,
        origin_dates: rows.iter().map(|&r| data.dates[r]).collect(),
        origins,
        draw_ids,
        quantile_levels: req.quantiles.clone(),
        n_sim: n_paths,
        noise: req.noise,
        seed: req.seed,
        responses,
        time_avg,
        quantiles,
    })
}
