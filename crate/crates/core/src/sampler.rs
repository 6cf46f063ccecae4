//! Posterior simulation for the VAST model.
//!
//! Each sweep updates every learner in turn: the threshold variable is drawn
//! from its discrete conditional with `B` and `Σ` integrated out, then
//! `(μ_r, log φ_r)` moves jointly by random-walk Metropolis-Hastings, again
//! against the marginal likelihood. With all transitions fixed the model is a
//! SUR regression, so `(Σ, B)` are drawn from their conjugate posterior.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, pair_columns, BasisState, TransitionSpec};
use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::VastMean;
use crate::niw::{self, CrossProducts, NiwPrior, PosteriorDraw};
use crate::rng::{keyed_gumbel, StreamRng};

/// Candidate sets at least this large are scored on the rayon pool.
const PARALLEL_CANDIDATES: usize = 32;

/// Independent priors on the transition parameters of every learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionPrior {
    pub mu_mean: f64,
    pub mu_var: f64,
    pub phi_shape: f64,
    pub phi_rate: f64,
}

impl Default for TransitionPrior {
    fn default() -> Self {
        TransitionPrior {
            mu_mean: 0.0,
            mu_var: 100.0,
            phi_shape: 0.01,
            phi_rate: 0.01,
        }
    }
}

impl TransitionPrior {
    /// Unnormalized log density of `(μ, φ)`.
    pub fn log_density(&self, mu: f64, phi: f64) -> f64 {
        if !(phi > 0.0) || !phi.is_finite() {
            return f64::NEG_INFINITY;
        }
        let d = mu - self.mu_mean;
        -0.5 * d * d / self.mu_var + (self.phi_shape - 1.0) * phi.ln() - self.phi_rate * phi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let mu = Normal::new(self.mu_mean, self.mu_var.sqrt())
            .expect("valid normal")
            .sample(rng);
        let phi = Gamma::new(self.phi_shape, 1.0 / self.phi_rate)
            .expect("valid gamma")
            .sample(rng);
        (mu, phi.max(f64::MIN_POSITIVE))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Number of weak learners.
    #[serde(rename = "R")]
    pub n_learners: usize,
    /// Lag order.
    #[serde(rename = "P")]
    pub lags: usize,
    pub n_draws: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub mh_step_mu: f64,
    pub mh_step_logphi: f64,
    pub adapt: bool,
    pub target_accept: f64,
    /// Random candidates per threshold-variable update (0 = all K).
    pub candidate_subsample: usize,
    /// Prior precision multiplier `J` of `V0 = I / J`; `None` means `2R`.
    pub prior_j: Option<f64>,
    pub xi: f64,
    pub transition_prior: TransitionPrior,
    /// Sweeps between from-scratch checks of the cached cross products.
    pub check_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_learners: 50,
            lags: 12,
            n_draws: 30_000,
            n_burn: 15_000,
            thin: 1,
            seed: 1,
            mh_step_mu: 0.5,
            mh_step_logphi: 0.5,
            adapt: true,
            target_accept: 0.30,
            candidate_subsample: 0,
            prior_j: None,
            xi: niw::DEFAULT_XI,
            transition_prior: TransitionPrior::default(),
            check_every: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("sampler.{field}"), msg));
        if self.n_learners == 0 {
            return bad("R", "must be at least 1");
        }
        if self.lags == 0 {
            return bad("P", "must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin", "must be at least 1");
        }
        if self.n_burn >= self.n_draws {
            return bad("n_burn", "must be smaller than n_draws");
        }
        if !(self.mh_step_mu > 0.0) {
            return bad("mh_step_mu", "must be positive");
        }
        if !(self.mh_step_logphi > 0.0) {
            return bad("mh_step_logphi", "must be positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept", "must lie in (0, 1)");
        }
        if matches!(self.prior_j, Some(j) if !(j > 0.0)) {
            return bad("prior_j", "must be positive");
        }
        if !(self.xi > 0.0) {
            return bad("xi", "must be positive");
        }
        let tp = &self.transition_prior;
        if !(tp.mu_var > 0.0 && tp.phi_shape > 0.0 && tp.phi_rate > 0.0) {
            return bad("transition_prior", "variances, shape and rate must be positive");
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_draws - self.n_burn) / self.thin
    }

    pub fn prior_j(&self) -> f64 {
        self.prior_j.unwrap_or(2.0 * self.n_learners as f64)
    }

    /// The default NIW prior for `m` equations.
    pub fn niw_prior(&self, m: usize) -> Result<NiwPrior> {
        NiwPrior::standard(m, 2 * self.n_learners, self.xi, self.prior_j())
    }
}

/// Random-walk scales for the `(μ, log φ)` block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub mu: f64,
    pub log_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraw {
    pub iteration: usize,
    pub draw: PosteriorDraw,
    pub specs: Vec<TransitionSpec>,
}

impl ChainDraw {
    pub fn conditional_mean(&self, lags: usize) -> VastMean {
        VastMean {
            specs: self.specs.clone(),
            b: self.draw.b.clone(),
            lags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    pub config: SamplerConfig,
    pub draws: Vec<ChainDraw>,
    /// Post-burn-in acceptance fraction of the `(μ, φ)` move per learner.
    pub accept_rate_mu_phi: Vec<f64>,
    /// Log marginal likelihood after the learner updates of every sweep.
    pub logml_trace: Vec<f64>,
    pub final_steps: Vec<StepSizes>,
}

impl McmcChain {
    /// Posterior mean of `F(X_t)` over retained draws, `T_eff × M`.
    pub fn posterior_mean_fit(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = self.draws.first().map(|d| d.draw.b.ncols()).unwrap_or(0);
        let mut acc = DMatrix::zeros(x.nrows(), m);
        for d in &self.draws {
            let basis = build_basis(x, &d.specs)?;
            acc += basis.w * &d.draw.b;
        }
        Ok(acc / self.draws.len().max(1) as f64)
    }
}

/// Cross products with learner `r`'s pair replaced by `(s, c)`, leaving
/// `cp` and `w` untouched.
fn swapped_crossprod(
    cp: &CrossProducts,
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: usize,
    s: &[f64],
    c: &[f64],
) -> CrossProducts {
    let mut out = cp.clone();
    let nb = w.ncols();
    let dot = |a: &[f64], j: usize| -> f64 { a.iter().zip(w.column(j).iter()).map(|(p, q)| p * q).sum() };
    let ss: f64 = s.iter().map(|v| v * v).sum();
    let sc: f64 = s.iter().zip(c).map(|(a, b)| a * b).sum();
    let cc: f64 = c.iter().map(|v| v * v).sum();
    for j in 0..nb {
        if j == 2 * r || j == 2 * r + 1 {
            continue;
        }
        let vs = dot(s, j);
        let vc = dot(c, j);
        out.wtw[(2 * r, j)] = vs;
        out.wtw[(j, 2 * r)] = vs;
        out.wtw[(2 * r + 1, j)] = vc;
        out.wtw[(j, 2 * r + 1)] = vc;
    }
    out.wtw[(2 * r, 2 * r)] = ss;
    out.wtw[(2 * r + 1, 2 * r + 1)] = cc;
    out.wtw[(2 * r, 2 * r + 1)] = sc;
    out.wtw[(2 * r + 1, 2 * r)] = sc;
    for m in 0..y.ncols() {
        let col = y.column(m);
        out.wty[(2 * r, m)] = s.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
        out.wty[(2 * r + 1, m)] = c.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
    }
    out
}

/// Working state of one chain: basis, cached cross products and the current
/// log marginal likelihood.
#[derive(Debug, Clone)]
pub struct SweepState<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    prior: &'a NiwPrior,
    pub basis: BasisState,
    cp: CrossProducts,
    pub logml: f64,
}

impl<'a> SweepState<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        y: &'a DMatrix<f64>,
        prior: &'a NiwPrior,
        basis: BasisState,
    ) -> Result<Self> {
        if basis.w.nrows() != y.nrows() || x.nrows() != y.nrows() {
            return Err(Error::Dimension("basis, X and Y must share rows".into()));
        }
        if 2 * basis.n_learners() != prior.n_basis() || y.ncols() != prior.n_vars() {
            return Err(Error::Dimension(format!(
                "prior covers {} basis columns / {} equations, state has {} / {}",
                prior.n_basis(),
                prior.n_vars(),
                2 * basis.n_learners(),
                y.ncols()
            )));
        }
        let cp = CrossProducts::from_data(&basis.w, y)?;
        let logml = niw::log_marginal_from_crossprod(prior, &cp)?;
        Ok(SweepState {
            x,
            y,
            prior,
            basis,
            cp,
            logml,
        })
    }

    fn check_learner(&self, r: usize) -> Result<()> {
        if r >= self.basis.n_learners() {
            return Err(Error::Index {
                what: "learner",
                index: r,
                limit: self.basis.n_learners(),
            });
        }
        Ok(())
    }

    fn candidate_logml(&self, r: usize, spec: &TransitionSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (s, c) = pair_columns(self.x, spec)?;
        let cp = swapped_crossprod(&self.cp, &self.basis.w, self.y, r, &s, &c);
        let l = niw::log_marginal_from_crossprod(self.prior, &cp)?;
        Ok((l, s, c))
    }

    fn install(&mut self, r: usize, spec: TransitionSpec, s: &[f64], c: &[f64], logml: f64) {
        self.basis.set_pair(r, spec, s, c);
        self.cp.refresh_pair(&self.basis.w, self.y, r);
        self.logml = logml;
    }

    /// Unnormalized log posterior weights of the threshold variable of
    /// learner `r` over `candidates` (uniform prior `1/K`).
    pub fn delta_log_weights(&self, r: usize, candidates: &[usize]) -> Result<Vec<f64>> {
        self.check_learner(r)?;
        let cur = self.basis.specs[r];
        let ln_prior = -(self.x.ncols() as f64).ln();
        let score = |&n: &usize| -> Result<f64> {
            let spec = TransitionSpec { sel: n, ..cur };
            Ok(self.candidate_logml(r, &spec)?.0 + ln_prior)
        };
        if candidates.len() >= PARALLEL_CANDIDATES {
            candidates.par_iter().map(score).collect()
        } else {
            candidates.iter().map(score).collect()
        }
    }

    /// Draws the threshold variable of learner `r` and installs it.
    pub fn update_delta<R: RngCore + ?Sized>(
        &mut self,
        r: usize,
        subsample: usize,
        rng: &mut R,
    ) -> Result<TransitionSpec> {
        self.check_learner(r)?;
        let k = self.x.ncols();
        let incumbent = self.basis.specs[r].sel;
        let candidates: Vec<usize> = if subsample == 0 || subsample + 1 >= k {
            (0..k).collect()
        } else {
            let mut v: Vec<usize> = index::sample(rng, k - 1, subsample)
                .into_iter()
                .map(|i| if i >= incumbent { i + 1 } else { i })
                .collect();
            v.push(incumbent);
            v.sort_unstable();
            v
        };
        if candidates.len() == 1 {
            return Ok(self.basis.specs[r]);
        }
        let key = rng.next_u64();
        let weights = self.delta_log_weights(r, &candidates)?;
        let mut best = (f64::NEG_INFINITY, incumbent);
        for (&n, w) in candidates.iter().zip(&weights) {
            let g = w + keyed_gumbel(key, &[n as u64]);
            if g > best.0 {
                best = (g, n);
            }
        }
        let chosen = best.1;
        if chosen != incumbent {
            let spec = TransitionSpec {
                sel: chosen,
                ..self.basis.specs[r]
            };
            let (l, s, c) = self.candidate_logml(r, &spec)?;
            self.install(r, spec, &s, &c, l);
        }
        Ok(self.basis.specs[r])
    }

    /// One random-walk MH move of `(μ_r, log φ_r)`; returns the accept flag.
    pub fn update_mu_phi<R: Rng + ?Sized>(
        &mut self,
        r: usize,
        tprior: &TransitionPrior,
        steps: StepSizes,
        rng: &mut R,
    ) -> Result<bool> {
        self.check_learner(r)?;
        let cur = self.basis.specs[r];
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let mu = cur.mu + steps.mu * z0;
        let log_phi = cur.phi.ln() + steps.log_phi * z1;
        let phi = log_phi.exp();
        let u: f64 = rng.random();
        let lp_new = tprior.log_density(mu, phi);
        if !lp_new.is_finite() || !(phi > 0.0) {
            return Ok(false);
        }
        let spec = TransitionSpec { sel: cur.sel, mu, phi };
        let (l, s, c) = self.candidate_logml(r, &spec)?;
        let log_alpha = l - self.logml + lp_new - tprior.log_density(cur.mu, cur.phi) + log_phi - cur.phi.ln();
        if u.ln() < log_alpha {
            self.install(r, spec, &s, &c, l);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Conjugate draw of `(Σ, B)` given the current transitions.
    pub fn draw_coefficients<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PosteriorDraw> {
        let post = niw::update_from_crossprod(self.prior, &self.cp)?;
        niw::sample(&post, rng)
    }

    /// Recomputes cross products and the marginal likelihood from scratch,
    /// returning the absolute drift of the cached log marginal likelihood.
    pub fn resync(&mut self) -> Result<f64> {
        let fresh = build_basis(self.x, &self.basis.specs)?;
        let cp = CrossProducts::from_data(&fresh.w, self.y)?;
        let l = niw::log_marginal(self.prior, &fresh.w, self.y)?;
        let drift = (l - self.logml).abs();
        self.basis = fresh;
        self.cp = cp;
        self.logml = l;
        Ok(drift)
    }
}

/// Draws a new threshold variable for learner `r` from its discrete
/// posterior, integrating out `B` and `Σ`.
pub fn sample_delta<R: RngCore + ?Sized>(
    r: usize,
    basis: &BasisState,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    prior: &NiwPrior,
    subsample: usize,
    rng: &mut R,
) -> Result<TransitionSpec> {
    let mut st = SweepState::new(x, y, prior, basis.clone())?;
    st.update_delta(r, subsample, rng)
}

/// Random-walk MH update of `(μ_r, φ_r)` against the marginal likelihood.
#[allow(clippy::too_many_arguments)]
pub fn sample_mu_phi<R: Rng + ?Sized>(
    r: usize,
    basis: &BasisState,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    prior: &NiwPrior,
    tprior: &TransitionPrior,
    steps: StepSizes,
    rng: &mut R,
) -> Result<(TransitionSpec, bool)> {
    let mut st = SweepState::new(x, y, prior, basis.clone())?;
    let acc = st.update_mu_phi(r, tprior, steps, rng)?;
    Ok((st.basis.specs[r], acc))
}

/// Random initial transitions: threshold variable uniform, `μ = 0`, `φ = 1`.
pub fn initial_specs<R: Rng + ?Sized>(k: usize, r: usize, rng: &mut R) -> Vec<TransitionSpec> {
    (0..r)
        .map(|_| TransitionSpec::new(rng.random_range(0..k), 0.0, 1.0))
        .collect()
}

pub fn run_chain(data: &DesignMatrix, prior: &NiwPrior, config: &SamplerConfig) -> Result<McmcChain> {
    config.validate()?;
    let t_eff = data.n_rows();
    let r_count = config.n_learners;
    if t_eff <= 2 * r_count + 2 {
        return Err(Error::Design(format!(
            "T_eff = {t_eff} rows is too short for R = {r_count} learners (need > {})",
            2 * r_count + 2
        )));
    }
    let mut rng = StreamRng::seed_from_u64(config.seed);
    let k = data.n_regressors();
    let specs = initial_specs(k, r_count, &mut rng);
    let basis = build_basis(&data.x, &specs)?;
    let mut st = SweepState::new(&data.x, &data.y, prior, basis)
        .map_err(|e| wrap(0, None, e))?;

    let mut log_scale = vec![0.0f64; r_count];
    let mut accepted = vec![0usize; r_count];
    let mut draws = Vec::with_capacity(config.retained());
    let mut logml_trace = Vec::with_capacity(config.n_draws);
    let steps_for = |ls: f64| StepSizes {
        mu: config.mh_step_mu * ls.exp(),
        log_phi: config.mh_step_logphi * ls.exp(),
    };

    for it in 0..config.n_draws {
        let burning = it < config.n_burn;
        for r in 0..r_count {
            st.update_delta(r, config.candidate_subsample, &mut rng)
                .map_err(|e| wrap(it, Some(r), e))?;
            let acc = st
                .update_mu_phi(r, &config.transition_prior, steps_for(log_scale[r]), &mut rng)
                .map_err(|e| wrap(it, Some(r), e))?;
            if burning {
                if config.adapt {
                    let gain = (it as f64 + 1.0).powf(-0.6);
                    log_scale[r] += gain * (f64::from(u8::from(acc)) - config.target_accept);
                    log_scale[r] = log_scale[r].clamp(-15.0, 15.0);
                }
            } else if acc {
                accepted[r] += 1;
            }
        }
        if config.check_every > 0 && (it + 1) % config.check_every == 0 {
            let cached = st.logml;
            let drift = st.resync().map_err(|e| wrap(it, None, e))?;
            if drift > 1e-8 * cached.abs().max(1.0) {
                return Err(wrap(
                    it,
                    None,
                    Error::Numerical(format!("cached log marginal drifted by {drift:e}")),
                ));
            }
        }
        logml_trace.push(st.logml);
        let draw = st.draw_coefficients(&mut rng).map_err(|e| wrap(it, None, e))?;
        if !burning && (it - config.n_burn + 1).is_multiple_of(config.thin) {
            draws.push(ChainDraw {
                iteration: it,
                draw: PosteriorDraw {
                    b: draw.b,
                    sigma: symmetrize(&draw.sigma),
                },
                specs: st.basis.specs.clone(),
            });
        }
    }
    let kept = (config.n_draws - config.n_burn) as f64;
    Ok(McmcChain {
        config: config.clone(),
        draws,
        accept_rate_mu_phi: accepted.iter().map(|a| *a as f64 / kept).collect(),
        logml_trace,
        final_steps: log_scale.iter().map(|ls| steps_for(*ls)).collect(),
    })
}

fn wrap(iteration: usize, learner: Option<usize>, e: Error) -> Error {
    Error::Sampler {
        iteration,
        learner,
        source: Box::new(e),
    }
}
