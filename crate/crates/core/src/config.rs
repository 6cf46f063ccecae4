//! Run configuration: parsing with field-path errors, path resolution and
//! detection of defaulted ("assumed") settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::girf::GirfRequest;
use crate::io::SummaryConfig;
use crate::minnesota::MinnesotaConfig;
use crate::sampler::SamplerConfig;
use crate::synth::SyntheticSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A CSV file with a `date` column; `schema` defaults to the built-in
    /// 18-variable schema.
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: Option<PathBuf>,
    },
    Synthetic {
        spec: SyntheticSpec,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Vast,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Estimate,
    Girf,
    Summarize,
}

pub const ALL_STAGES: [Stage; 4] = [Stage::Ingest, Stage::Estimate, Stage::Girf, Stage::Summarize];

fn all_stages() -> Vec<Stage> {
    ALL_STAGES.to_vec()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub minnesota: MinnesotaConfig,
    #[serde(default)]
    pub girf: GirfRequest,
    #[serde(default)]
    pub summary: SummaryConfig,
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub emit_metadata: bool,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
}

/// A parsed configuration plus the JSON it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: Value,
}

impl RunConfig {
    pub fn lags(&self) -> usize {
        match self.model {
            ModelKind::Vast => self.sampler.lags,
            ModelKind::Linear => self.minnesota.lags,
        }
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Replaces every seed by `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.sampler.seed = seed;
        self.girf.seed = seed;
        if let DataSource::Synthetic { seed: s, .. } = &mut self.data {
            *s = seed;
        }
    }

    pub fn seeds(&self) -> Value {
        let data = match &self.data {
            DataSource::Synthetic { seed, .. } => Some(*seed),
            DataSource::Csv { .. } => None,
        };
        serde_json::json!({
            "sampler": self.sampler.seed,
            "girf": self.girf.seed,
            "data": data,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Csv { path, schema } = &mut self.data {
            fix(path);
            if let Some(s) = schema {
                fix(s);
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Csv { path, schema } => {
                if !path.is_file() {
                    return Err(Error::config("data.path", format!("{} does not exist", path.display())));
                }
                if let Some(s) = schema.as_ref().filter(|s| !s.is_file()) {
                    return Err(Error::config("data.schema", format!("{} does not exist", s.display())));
                }
            }
            DataSource::Synthetic { spec, .. } => spec
                .validate()
                .map_err(|e| prefix(e, "data.spec.", "synth."))?,
        }
        self.sampler.validate()?;
        self.minnesota.validate()?;
        self.girf.validate()?;
        if self.stages.is_empty() {
            return Err(Error::config("stages", "at least one stage is required"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        Ok(())
    }
}

fn prefix(e: Error, with: &str, strip: &str) -> Error {
    match e {
        Error::Config { path, message } => Error::Config {
            path: format!("{with}{}", path.strip_prefix(strip).unwrap_or(&path)),
            message,
        },
        other => other,
    }
}

/// Parses a run configuration. A `metadata.json` written by a previous run
/// is accepted too, in which case its `config` echo is used.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig> {
    let mut raw: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<root>", format!("invalid JSON: {e}")))?;
    if raw.get("tool").and_then(Value::as_str) == Some("vastvar") {
        raw = raw
            .get("config")
            .cloned()
            .ok_or_else(|| Error::config("config", "metadata file has no config echo"))?;
    }
    let mut config: RunConfig = serde_path_to_error::deserialize(&raw).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })?;
    config.resolve_paths(base_dir);
    config.validate()?;
    Ok(LoadedConfig { config, raw })
}

/// Parses a standalone JSON section (a GIRF request, a synthetic spec, ...)
/// reporting errors under `section`.
pub fn parse_section<T: serde::de::DeserializeOwned>(text: &str, section: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { section.to_string() } else { format!("{section}.{inner}") };
        Error::config(path, e.into_inner().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

/// Dotted paths of every setting present in `resolved` but absent from `raw`.
pub fn assumed_fields(raw: &Value, resolved: &Value) -> Vec<String> {
    fn walk(raw: Option<&Value>, res: &Value, path: &str, out: &mut Vec<String>) {
        match res {
            Value::Object(map) => {
                for (k, v) in map {
                    let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    walk(raw.and_then(|r| r.get(k)), v, &p, out);
                }
            }
            _ if raw.is_none() => out.push(path.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(Some(raw), resolved, "", &mut out);
    out
}
