//! Stage orchestration: ingest, estimate, girf and summarize, with staged
//! writes, quarantine of failed runs and a metadata record.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::config::{assumed_fields, DataSource, LoadedConfig, ModelKind, RunConfig, Stage};
use crate::data::{build_design, load_csv, transform_and_standardize, default_schema, PanelDataset, Schema};
use crate::error::{Error, Result};
use crate::girf::{girf_batch, linear_draws, vast_draws, GirfRequest, GirfResult};
use crate::io::{read_checkpoint, read_girf, write_checkpoint, write_girf, write_tables, Checkpoint, Estimate, SummaryConfig};
use crate::minnesota::{estimate_bvar, own_lag_means, MinnesotaConfig};
use crate::sampler::{run_chain, SamplerConfig};
use crate::synth::generate_synthetic;

pub const CHAIN_FILE: &str = "chain.bin";
pub const GIRF_FILE: &str = "girf.bin";
pub const TABLES_DIR: &str = "tables";
pub const METADATA_FILE: &str = "metadata.json";
const PARTIAL_DIR: &str = ".partial";
const FAILED_DIR: &str = "failed";

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    Ok(pool.install(f))
}

pub fn load_dataset(source: &DataSource) -> Result<PanelDataset> {
    match source {
        DataSource::Csv { path, schema } => {
            let schema = match schema {
                Some(p) => Schema::load(p)?,
                None => default_schema(),
            };
            let meta = schema.resolve()?;
            transform_and_standardize(&load_csv(path, &meta)?)
        }
        DataSource::Synthetic { spec, seed } => Ok(generate_synthetic(spec, *seed)?.0),
    }
}

pub fn estimate_vast(data: &PanelDataset, cfg: &SamplerConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let design = build_design(data, cfg.lags)?;
    let chain = run_chain(&design, &cfg.niw_prior(data.n_vars())?, cfg)?;
    Ok(Checkpoint {
        dataset: data.clone(),
        estimate: Estimate::Vast(chain),
    })
}

pub fn estimate_linear(data: &PanelDataset, cfg: &MinnesotaConfig, seed: u64) -> Result<Checkpoint> {
    let design = build_design(data, cfg.lags)?;
    let bvar = estimate_bvar(&design, &own_lag_means(&data.meta), cfg, cfg.n_draws, seed)?;
    Ok(Checkpoint {
        dataset: data.clone(),
        estimate: Estimate::Linear(bvar),
    })
}

pub fn compute_girf(ck: &Checkpoint, req: &GirfRequest) -> Result<GirfResult> {
    match &ck.estimate {
        Estimate::Vast(c) => girf_batch(&vast_draws(c), &ck.dataset, req),
        Estimate::Linear(b) => girf_batch(&linear_draws(b), &ck.dataset, req),
    }
}

/// Human-readable list of what `run` would do.
pub fn plan(cfg: &RunConfig) -> Vec<String> {
    let mut out = vec![format!("output directory: {}", cfg.output_dir.display())];
    for stage in &cfg.stages {
        out.push(match stage {
            Stage::Ingest => match &cfg.data {
                DataSource::Csv { path, schema } => format!(
                    "ingest: {} with schema {}",
                    path.display(),
                    schema.as_ref().map_or("<built-in>".into(), |s| s.display().to_string())
                ),
                DataSource::Synthetic { spec, seed } => format!(
                    "ingest: synthetic M={} T={} P={} seed={seed}",
                    spec.n_vars(),
                    spec.n_obs,
                    spec.lags
                ),
            },
            Stage::Estimate => match cfg.model {
                ModelKind::Vast => format!(
                    "estimate: VAST R={} P={} n_draws={} n_burn={} thin={} seed={} -> {CHAIN_FILE}",
                    cfg.sampler.n_learners,
                    cfg.sampler.lags,
                    cfg.sampler.n_draws,
                    cfg.sampler.n_burn,
                    cfg.sampler.thin,
                    cfg.sampler.seed
                ),
                ModelKind::Linear => format!(
                    "estimate: Minnesota BVAR P={} lambda=({}, {}, {}, {}) n_draws={} seed={} -> {CHAIN_FILE}",
                    cfg.minnesota.lags,
                    cfg.minnesota.lambda1,
                    cfg.minnesota.lambda2,
                    cfg.minnesota.lambda3,
                    cfg.minnesota.lambda4,
                    cfg.minnesota.n_draws,
                    cfg.sampler.seed
                ),
            },
            Stage::Girf => format!(
                "girf: {} shock sizes, H={}, n_sim={}, origin_stride={}, draw_thin={}, noise={:?} -> {GIRF_FILE}",
                cfg.girf.sigmas.len(),
                cfg.girf.horizon,
                cfg.girf.n_sim,
                cfg.girf.origin_stride,
                cfg.girf.draw_thin,
                cfg.girf.noise
            ),
            Stage::Summarize => format!("summarize: peaks, quantile paths, bands, activeness -> {TABLES_DIR}/"),
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

struct Staged<'a> {
    cfg: &'a RunConfig,
    partial: PathBuf,
    files: Vec<PathBuf>,
}

impl Staged<'_> {
    fn existing(&self, name: &str) -> PathBuf {
        let p = self.partial.join(name);
        if p.exists() {
            p
        } else {
            self.cfg.output_dir.join(name)
        }
    }

    fn execute(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut data = None;
        if cfg.runs(Stage::Ingest) || cfg.runs(Stage::Estimate) {
            let d = load_dataset(&cfg.data)?;
            let design = build_design(&d, cfg.lags())?;
            let summary = json!({
                "T": design.n_rows(),
                "M": design.n_vars(),
                "K": design.n_regressors(),
                "first_date": d.dates.first(),
                "last_date": d.dates.last(),
                "variables": d.meta,
            });
            let path = self.partial.join("ingest.json");
            write_json(&path, &summary)?;
            self.files.push(path);
            data = Some(d);
        }
        let mut checkpoint = None;
        if cfg.runs(Stage::Estimate) {
            let d = data.as_ref().expect("dataset loaded for estimation");
            let ck = match cfg.model {
                ModelKind::Vast => estimate_vast(d, &cfg.sampler)?,
                ModelKind::Linear => estimate_linear(d, &cfg.minnesota, cfg.sampler.seed)?,
            };
            let path = self.partial.join(CHAIN_FILE);
            write_checkpoint(&path, &ck)?;
            self.files.push(path);
            checkpoint = Some(ck);
        }
        let mut girf = None;
        if cfg.runs(Stage::Girf) {
            let ck = match checkpoint {
                Some(ck) => ck,
                None => read_checkpoint(&self.existing(CHAIN_FILE))?,
            };
            let g = compute_girf(&ck, &cfg.girf)?;
            let path = self.partial.join(GIRF_FILE);
            let manifest = write_girf(&path, &g)?;
            self.files.push(path);
            self.files.push(manifest);
            girf = Some(g);
        }
        if cfg.runs(Stage::Summarize) {
            let g = match girf {
                Some(g) => g,
                None => read_girf(&self.existing(GIRF_FILE))?,
            };
            let written = write_tables(&self.partial.join(TABLES_DIR), &g, &cfg.summary)?;
            self.files.extend(written);
        }
        Ok(())
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::file(path))
}

fn remove_any(path: &Path) -> Result<()> {
    if path.is_dir() {
        std::fs::remove_dir_all(path).map_err(Error::file(path))
    } else if path.exists() {
        std::fs::remove_file(path).map_err(Error::file(path))
    } else {
        Ok(())
    }
}

/// Moves every entry of `from` into `to`, replacing existing entries.
fn promote(from: &Path, to: &Path) -> Result<()> {
    let entries = std::fs::read_dir(from).map_err(Error::file(from))?;
    let mut names: Vec<_> = entries
        .map(|e| e.map(|e| e.file_name()).map_err(Error::file(from)))
        .collect::<Result<_>>()?;
    names.sort();
    for name in names {
        let target = to.join(&name);
        remove_any(&target)?;
        std::fs::rename(from.join(&name), &target).map_err(Error::file(&target))?;
    }
    std::fs::remove_dir(from).map_err(Error::file(from))
}

/// Executes the configured stages. Outputs are staged and only moved into
/// `output_dir` once every stage has succeeded; on failure they land in
/// `output_dir/failed/` next to an `error.txt`.
pub fn run(loaded: &LoadedConfig, threads: usize) -> Result<RunOutcome> {
    let cfg = &loaded.config;
    let start = Instant::now();
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(Error::file(out))?;
    let partial = out.join(PARTIAL_DIR);
    remove_any(&partial)?;
    std::fs::create_dir_all(&partial).map_err(Error::file(&partial))?;

    let mut staged = Staged {
        cfg,
        partial: partial.clone(),
        files: Vec::new(),
    };
    if let Err(e) = with_threads(threads, || staged.execute()).and_then(|r| r) {
        let failed = out.join(FAILED_DIR);
        remove_any(&failed)?;
        std::fs::rename(&partial, &failed).map_err(Error::file(&failed))?;
        let _ = std::fs::write(failed.join("error.txt"), format!("{e}\n"));
        return Err(e);
    }
    promote(&partial, out)?;
    remove_any(&out.join(FAILED_DIR))?;
    let mut files: Vec<PathBuf> = staged
        .files
        .iter()
        .map(|p| out.join(p.strip_prefix(&partial).unwrap_or(p)))
        .collect();
    let wall = start.elapsed().as_secs_f64();
    if cfg.emit_metadata {
        let resolved = serde_json::to_value(cfg)?;
        let meta = json!({
            "tool": "vastvar",
            "version": version(),
            "config": resolved,
            "seeds": cfg.seeds(),
            "threads": threads,
            "wall_time_secs": wall,
            "assumed": assumed_fields(&loaded.raw, &resolved),
            "outputs": files
                .iter()
                .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
                .collect::<Vec<_>>(),
            "notes": [
                format!("GIRF origins every {} design rows, every {} retained draw(s)", cfg.girf.origin_stride, cfg.girf.draw_thin),
                "size bands and activeness use the peak of the posterior-median path per origin",
                "Minnesota lambda2 is recorded but not applied: the conjugate prior gives own and cross lags the same relative variance",
            ],
        });
        let path = out.join(METADATA_FILE);
        write_json(&path, &meta)?;
        files.push(path);
    }
    Ok(RunOutcome {
        output_dir: out.clone(),
        files,
        wall_time_secs: wall,
    })
}

/// Summary tables straight from a GIRF file.
pub fn summarize(girf_path: &Path, out_dir: &Path, cfg: &SummaryConfig) -> Result<Vec<PathBuf>> {
    let g = read_girf(girf_path)?;
    write_tables(out_dir, &g, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::synth::SyntheticSpec;

    fn config_text(out: &Path, extra: &str) -> String {
        let spec = serde_json::to_string(&SyntheticSpec::asymmetric_demo(90)).unwrap();
        format!(
            r#"{{"data": {{"source": "synthetic", "spec": {spec}, "seed": 3}},
                "sampler": {{"R": 3, "P": 2, "n_draws": 60, "n_burn": 30}},
                "girf": {{"H": 6, "n_sim": 4, "origin_stride": 15, "draw_thin": 6}},
                {extra}
                "output_dir": "{}"}}"#,
            out.display()
        )
    }

    #[test]
    fn full_run_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let loaded = parse_config(&config_text(dir.path(), ""), dir.path()).unwrap();
        let outcome = run(&loaded, 2).unwrap();
        for f in ["ingest.json", CHAIN_FILE, GIRF_FILE, "girf.json", "tables/peaks.csv", METADATA_FILE] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        assert!(!dir.path().join(PARTIAL_DIR).exists());
        assert_eq!(outcome.files.len(), 10);
        let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(METADATA_FILE)).unwrap()).unwrap();
        let assumed: Vec<&str> = meta["assumed"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert!(assumed.contains(&"minnesota.lambda1"));
        assert!(!assumed.contains(&"sampler.R"));
    }

    #[test]
    fn failures_are_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        // an origin beyond the sample fails in the girf stage
        let text = config_text(dir.path(), "").replace(r#""origin_stride": 15"#, r#""origins": [5000]"#);
        let loaded = parse_config(&text, dir.path()).unwrap();
        assert!(run(&loaded, 1).is_err());
        assert!(dir.path().join("failed/chain.bin").exists());
        assert!(dir.path().join("failed/error.txt").exists());
        assert!(!dir.path().join(CHAIN_FILE).exists());
    }

    #[test]
    fn later_stages_reuse_earlier_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let first = parse_config(&config_text(dir.path(), r#""stages": ["ingest", "estimate"],"#), dir.path()).unwrap();
        run(&first, 1).unwrap();
        let second = parse_config(&config_text(dir.path(), r#""stages": ["girf", "summarize"],"#), dir.path()).unwrap();
        run(&second, 1).unwrap();
        assert!(dir.path().join("tables/bands.csv").exists());
    }

    #[test]
    fn linear_model_runs() {
        let dir = tempfile::tempdir().unwrap();
        let text = config_text(dir.path(), r#""model": "linear", "minnesota": {"P": 2, "n_draws": 20},"#);
        run(&parse_config(&text, dir.path()).unwrap(), 1).unwrap();
        assert!(dir.path().join("tables/activeness.csv").exists());
    }

    #[test]
    fn plan_lists_every_stage() {
        let dir = tempfile::tempdir().unwrap();
        let loaded = parse_config(&config_text(dir.path(), ""), dir.path()).unwrap();
        assert_eq!(plan(&loaded.config).len(), 5);
    }
}
