//! Simulation from known VAST-form processes, with the true conditional mean
//! kept as an oracle.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::TransitionSpec;
use crate::data::{transform_and_standardize, validate_ordering, Block, Country, Month, PanelDataset, RawTable, Transform, VariableMeta};
use crate::error::{Error, Result};
use crate::girf::ModelDraw;
use crate::linalg::strict_cholesky;
use crate::model::ConditionalMean;
use crate::rng::stream;

const EXPLOSION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthVariable {
    pub name: String,
    pub block: Block,
    #[serde(default = "default_country")]
    pub country: Country,
}

fn default_country() -> Country {
    Country::US
}

/// Logistic switch on state element `sel`: adds `S·high + (1-S)·low`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthLearner {
    pub sel: usize,
    pub mu: f64,
    pub phi: f64,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Variables in structural order.
    pub variables: Vec<SynthVariable>,
    #[serde(rename = "P")]
    pub lags: usize,
    #[serde(rename = "T")]
    pub n_obs: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub intercept: Vec<f64>,
    /// Optional linear lag coefficients, one row of length `M·P` per variable.
    #[serde(default)]
    pub lag_coefs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub learners: Vec<SynthLearner>,
    /// Innovation covariance, row by row.
    pub sigma: Vec<Vec<f64>>,
    #[serde(default = "default_start")]
    pub start: Month,
}

fn default_burn_in() -> usize {
    200
}

fn default_start() -> Month {
    Month::new(1990, 1)
}

fn var(name: &str, block: Block) -> SynthVariable {
    SynthVariable {
        name: name.into(),
        block,
        country: Country::US,
    }
}

impl SyntheticSpec {
    /// Three variables (activity, ebp, equity), two lags. A high-ebp regime
    /// sustains itself and depresses activity; the low regime is inert, so
    /// adverse shocks move activity far more than benign ones.
    pub fn asymmetric_demo(n_obs: usize) -> Self {
        SyntheticSpec {
            variables: vec![
                var("activity", Block::Macro),
                var("ebp", Block::Ebp),
                var("equity", Block::Equity),
            ],
            lags: 2,
            n_obs,
            burn_in: default_burn_in(),
            intercept: vec![0.0; 3],
            lag_coefs: None,
            learners: vec![
                SynthLearner {
                    sel: 1,
                    mu: 1.0,
                    phi: 6.0,
                    high: vec![-1.5, 1.6, -1.0],
                    low: vec![0.0, 0.0, 0.0],
                },
                SynthLearner {
                    sel: 0,
                    mu: 0.0,
                    phi: 4.0,
                    high: vec![0.6, 0.0, 0.3],
                    low: vec![-0.6, 0.0, -0.3],
                },
            ],
            sigma: vec![
                vec![0.5, 0.05, 0.0],
                vec![0.05, 0.5, 0.1],
                vec![0.0, 0.1, 0.5],
            ],
            start: default_start(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    fn sigma_matrix(&self) -> DMatrix<f64> {
        let m = self.n_vars();
        DMatrix::from_fn(m, m, |i, j| self.sigma[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_vars();
        let k = m * self.lags;
        let bad = |f: String, msg: &str| Err(Error::config(format!("synth.{f}"), msg));
        if m == 0 {
            return bad("variables".into(), "needs at least one variable");
        }
        if self.lags == 0 {
            return bad("P".into(), "must be at least 1");
        }
        if self.n_obs < self.lags + 2 {
            return bad("T".into(), "too short for the lag order");
        }
        if self.intercept.len() != m {
            return bad("intercept".into(), "needs one entry per variable");
        }
        if let Some(c) = &self.lag_coefs {
            if c.len() != m {
                return bad("lag_coefs".into(), "needs one row per variable");
            }
            if let Some(i) = c.iter().position(|r| r.len() != k) {
                return bad(format!("lag_coefs[{i}]"), "row length must be M*P");
            }
        }
        for (i, l) in self.learners.iter().enumerate() {
            if l.sel >= k {
                return bad(format!("learners[{i}].sel"), "exceeds the lag-state length");
            }
            if !(l.phi > 0.0) {
                return bad(format!("learners[{i}].phi"), "must be positive");
            }
            if l.high.len() != m || l.low.len() != m {
                return bad(format!("learners[{i}]"), "high/low need one entry per variable");
            }
        }
        if self.sigma.len() != m || self.sigma.iter().any(|r| r.len() != m) {
            return bad("sigma".into(), "must be M x M");
        }
        let s = self.sigma_matrix();
        if (&s - s.transpose()).abs().max() > 0.0 || strict_cholesky(&s, "Sigma").is_err() {
            return bad("sigma".into(), "must be symmetric positive definite");
        }
        validate_ordering(&self.meta())
    }

    fn meta(&self) -> Vec<VariableMeta> {
        self.variables
            .iter()
            .enumerate()
            .map(|(i, v)| VariableMeta {
                name: v.name.clone(),
                country: v.country,
                transform: Transform::Level,
                block: v.block,
                order_index: i,
                scale_sd: 1.0,
                scale_mean: 0.0,
            })
            .collect()
    }

    /// Conditional mean in the simulation's own units.
    pub fn eval_raw(&self, state: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.intercept);
        if let Some(c) = &self.lag_coefs {
            for (o, row) in out.iter_mut().zip(c) {
                *o += row.iter().zip(state).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for l in &self.learners {
            let s = TransitionSpec::new(l.sel, l.mu, l.phi).eval(state[l.sel]);
            for (i, o) in out.iter_mut().enumerate() {
                *o += s * l.high[i] + (1.0 - s) * l.low[i];
            }
        }
    }
}

/// The data-generating mean expressed in standardized coordinates.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub spec: SyntheticSpec,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl TrueModel {
    /// Innovation covariance in standardized units.
    pub fn sigma_std(&self) -> DMatrix<f64> {
        let s = self.spec.sigma_matrix();
        DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] / (self.sd[i] * self.sd[j]))
    }

    pub fn model_draw(&self) -> ModelDraw<TrueModel> {
        ModelDraw {
            mean: self.clone(),
            sigma: self.sigma_std(),
        }
    }

    /// True conditional mean at every row of a standardized lag matrix.
    pub fn fitted(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.n_vars();
        let mut out = DMatrix::zeros(x.nrows(), m);
        let mut row = vec![0.0; m];
        for t in 0..x.nrows() {
            let state: Vec<f64> = x.row(t).iter().copied().collect();
            self.eval(&state, &mut row);
            for v in 0..m {
                out[(t, v)] = row[v];
            }
        }
        out
    }
}

impl ConditionalMean for TrueModel {
    fn n_vars(&self) -> usize {
        self.spec.n_vars()
    }

    fn n_lags(&self) -> usize {
        self.spec.lags
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        let m = self.n_vars();
        let raw: Vec<f64> = state
            .iter()
            .enumerate()
            .map(|(i, x)| x * self.sd[i % m] + self.mean[i % m])
            .collect();
        self.spec.eval_raw(&raw, out);
        for (v, o) in out.iter_mut().enumerate() {
            *o = (*o - self.mean[v]) / self.sd[v];
        }
    }
}

/// Simulates `T` observations after a burn-in started from zeros.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(PanelDataset, TrueModel)> {
    spec.validate()?;
    let m = spec.n_vars();
    let k = m * spec.lags;
    let chol = strict_cholesky(&spec.sigma_matrix(), "Sigma")?.l();
    let mut rng = stream(seed, &[]);
    let total = spec.burn_in + spec.n_obs;
    let mut state = vec![0.0; k];
    let mut columns = vec![Vec::with_capacity(spec.n_obs); m];
    let (mut mu, mut z) = (vec![0.0; m], vec![0.0; m]);
    for t in 0..total {
        spec.eval_raw(&state, &mut mu);
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..m {
            mu[i] += (0..=i).map(|j| chol[(i, j)] * z[j]).sum::<f64>();
        }
        if mu.iter().any(|y| !(y.abs() <= EXPLOSION)) {
            return Err(Error::Explosive { t });
        }
        state.copy_within(0..k - m, m);
        state[..m].copy_from_slice(&mu);
        if t >= spec.burn_in {
            for (c, y) in columns.iter_mut().zip(&mu) {
                c.push(*y);
            }
        }
    }
    let mut dates = Vec::with_capacity(spec.n_obs);
    let mut d = spec.start;
    for _ in 0..spec.n_obs {
        dates.push(d);
        d = d.succ();
    }
    let raw = RawTable {
        dates,
        columns,
        meta: spec.meta(),
    };
    let data = transform_and_standardize(&raw)?;
    let truth = TrueModel {
        spec: spec.clone(),
        mean: data.meta.iter().map(|v| v.scale_mean).collect(),
        sd: data.meta.iter().map(|v| v.scale_sd).collect(),
    };
    Ok((data, truth))
}
