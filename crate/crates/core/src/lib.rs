//! Estimation of vector additive smooth transition (VAST) models by MCMC,
//! recursive identification of a financial shock, and sign/size-asymmetric
//! generalized impulse responses, next to a Minnesota-prior linear BVAR.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod basis;
pub mod config;
pub mod data;
pub mod error;
pub mod girf;
pub mod identify;
pub mod io;
pub mod linalg;
pub mod minnesota;
pub mod model;
pub mod niw;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use analytics::{activeness, peak_response, peak_table, size_bands, BandConfig, BandSummary, PeakSummary, Regime, ShockSign};
pub use config::{DataSource, LoadedConfig, ModelKind, RunConfig, Stage};
pub use data::{build_design, DesignMatrix, PanelDataset, Schema, VariableMeta};
pub use girf::{girf_batch, girf_one, GirfRequest, GirfResult, ModelDraw, NoiseMode};
pub use identify::{cholesky_identify, StructuralFactor};
pub use io::{Checkpoint, Estimate, SummaryConfig};
pub use minnesota::{estimate_bvar, linear_irf, LinearBvar, LinearVarDraw, MinnesotaConfig};
pub use model::{ConditionalMean, LinearMean, VastMean};
pub use niw::{NiwPosterior, NiwPrior};
pub use sampler::{run_chain, McmcChain, SamplerConfig};
pub use synth::{generate_synthetic, SyntheticSpec, TrueModel};
