//! On-disk formats: gzip JSON-lines chain checkpoints, gzip binary GIRF
//! arrays with a JSON manifest, and tidy CSV tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytics::{activeness, peak_table, size_bands, BandConfig, ShockSign};
use crate::data::{Block, PanelDataset};
use crate::error::{Error, Result};
use crate::girf::GirfResult;
use crate::minnesota::{LinearBvar, LinearVarDraw};
use crate::sampler::{ChainDraw, McmcChain};

pub const CHAIN_FORMAT: &str = "vastvar-chain";
pub const CHAIN_VERSION: u32 = 1;
const GIRF_MAGIC: &[u8; 8] = b"VASTGIRF";
pub const GIRF_VERSION: u32 = 1;

/// A fitted model together with the dataset it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dataset: PanelDataset,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Vast(McmcChain),
    Linear(LinearBvar),
}

impl Estimate {
    pub fn n_draws(&self) -> usize {
        match self {
            Estimate::Vast(c) => c.draws.len(),
            Estimate::Linear(b) => b.draws.len(),
        }
    }

    pub fn lags(&self) -> usize {
        match self {
            Estimate::Vast(c) => c.config.lags,
            Estimate::Linear(b) => b.lags,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum Fit {
    Vast(McmcChain),
    Linear(LinearBvar),
}

#[derive(Serialize, Deserialize)]
struct ChainHeader {
    format: String,
    version: u32,
    n_draws: usize,
    dataset: PanelDataset,
    /// The fit with its draws stripped; draws follow one per line.
    fit: Fit,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::file(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(Error::file(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(Error::file(path))?))
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut gz = GzEncoder::new(create(path)?, Compression::default());
    let (fit, lines): (Fit, Vec<String>) = match &ck.estimate {
        Estimate::Vast(c) => (
            Fit::Vast(McmcChain {
                draws: vec![],
                ..c.clone()
            }),
            c.draws.iter().map(serde_json::to_string).collect::<Result<_, _>>()?,
        ),
        Estimate::Linear(b) => (
            Fit::Linear(LinearBvar {
                draws: vec![],
                ..b.clone()
            }),
            b.draws.iter().map(serde_json::to_string).collect::<Result<_, _>>()?,
        ),
    };
    let header = ChainHeader {
        format: CHAIN_FORMAT.into(),
        version: CHAIN_VERSION,
        n_draws: lines.len(),
        dataset: ck.dataset.clone(),
        fit,
    };
    let mut body = serde_json::to_string(&header)?;
    body.push('\n');
    for l in lines {
        body.push_str(&l);
        body.push('\n');
    }
    gz.write_all(body.as_bytes()).map_err(Error::file(path))?;
    gz.finish().and_then(|mut w| w.flush()).map_err(Error::file(path))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut lines = BufReader::new(GzDecoder::new(open(path)?)).lines();
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let first = lines
        .next()
        .ok_or_else(|| bad("empty chain file".into()))?
        .map_err(Error::file(path))?;
    let value: serde_json::Value = serde_json::from_str(&first).map_err(|e| bad(format!("bad header: {e}")))?;
    if value["format"] != CHAIN_FORMAT {
        return Err(bad(format!("not a chain file (format {})", value["format"])));
    }
    if value["version"] != CHAIN_VERSION {
        return Err(bad(format!(
            "chain format version {} is not supported (expected {CHAIN_VERSION})",
            value["version"]
        )));
    }
    let header: ChainHeader = serde_json::from_str(&first).map_err(|e| bad(format!("bad header: {e}")))?;
    let mut raw = Vec::with_capacity(header.n_draws);
    for line in lines {
        raw.push(line.map_err(Error::file(path))?);
    }
    if raw.len() != header.n_draws {
        return Err(bad(format!("expected {} draws, found {}", header.n_draws, raw.len())));
    }
    let estimate = match header.fit {
        Fit::Vast(mut c) => {
            c.draws = raw
                .iter()
                .map(|l| serde_json::from_str::<ChainDraw>(l))
                .collect::<Result<_, _>>()?;
            Estimate::Vast(c)
        }
        Fit::Linear(mut b) => {
            b.draws = raw
                .iter()
                .map(|l| serde_json::from_str::<LinearVarDraw>(l))
                .collect::<Result<_, _>>()?;
            Estimate::Linear(b)
        }
    };
    Ok(Checkpoint {
        dataset: header.dataset,
        estimate,
    })
}

fn girf_header(g: &GirfResult) -> GirfResult {
    GirfResult {
        responses: vec![],
        time_avg: vec![],
        quantiles: vec![],
        ..g.clone()
    }
}

fn push_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    buf.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Writes `girf.bin` and the manifest next to it (`girf.json`).
pub fn write_girf(path: &Path, g: &GirfResult) -> Result<PathBuf> {
    let header = serde_json::to_vec(&girf_header(g))?;
    let mut buf = Vec::with_capacity(32 + header.len() + 8 * (g.responses.len() + g.time_avg.len() + g.quantiles.len()));
    buf.extend_from_slice(GIRF_MAGIC);
    buf.extend_from_slice(&GIRF_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    push_f64s(&mut buf, &g.responses);
    push_f64s(&mut buf, &g.time_avg);
    push_f64s(&mut buf, &g.quantiles);
    let mut gz = GzEncoder::new(create(path)?, Compression::default());
    gz.write_all(&buf).map_err(Error::file(path))?;
    gz.finish().and_then(|mut w| w.flush()).map_err(Error::file(path))?;

    let manifest_path = path.with_extension("json");
    let manifest = json!({
        "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "format": "gzip; magic VASTGIRF, u32 version, u64 header length, JSON header, then three (u64 length, f64 little-endian) arrays",
        "version": GIRF_VERSION,
        "units": "transformed units of each variable (percent for 100*dlog series)",
        "arrays": {
            "responses": {"layout": ["draw", "origin", "sigma", "h", "variable"],
                "shape": [g.n_draws(), g.n_origins(), g.n_sigmas(), g.horizon + 1, g.n_vars]},
            "time_avg": {"layout": ["draw", "sigma", "h", "variable"],
                "shape": [g.n_draws(), g.n_sigmas(), g.horizon + 1, g.n_vars]},
            "quantiles": {"layout": ["quantile", "sigma", "h", "variable"],
                "shape": [g.quantile_levels.len(), g.n_sigmas(), g.horizon + 1, g.n_vars]},
        },
        "sigmas": g.sigmas,
        "variables": g.names,
        "shock_index": g.shock_index,
        "shock_variable": g.names[g.shock_index],
        "quantile_levels": g.quantile_levels,
        "horizon": g.horizon,
        "n_sim": g.n_sim,
        "noise": g.noise,
        "seed": g.seed,
        "origin_dates": g.origin_dates,
    });
    let mut w = create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(Error::file(&manifest_path))?;
    Ok(manifest_path)
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
    if buf.len() < n {
        return None;
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Some(head)
}

fn take_u64(buf: &mut &[u8]) -> Option<u64> {
    take(buf, 8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
}

fn take_f64s(buf: &mut &[u8]) -> Option<Vec<f64>> {
    let n = take_u64(buf)? as usize;
    let bytes = take(buf, n.checked_mul(8)?)?;
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

pub fn read_girf(path: &Path) -> Result<GirfResult> {
    let mut raw = Vec::new();
    GzDecoder::new(open(path)?)
        .read_to_end(&mut raw)
        .map_err(Error::file(path))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let mut buf = raw.as_slice();
    if take(&mut buf, 8) != Some(GIRF_MAGIC.as_slice()) {
        return Err(bad("not a GIRF file"));
    }
    let version = take(&mut buf, 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| bad("truncated"))?;
    if version != GIRF_VERSION {
        return Err(bad(&format!("GIRF format version {version} is not supported")));
    }
    let hlen = take_u64(&mut buf).ok_or_else(|| bad("truncated"))? as usize;
    let header = take(&mut buf, hlen).ok_or_else(|| bad("truncated header"))?;
    let mut g: GirfResult = serde_json::from_slice(header)?;
    g.responses = take_f64s(&mut buf).ok_or_else(|| bad("truncated responses"))?;
    g.time_avg = take_f64s(&mut buf).ok_or_else(|| bad("truncated time averages"))?;
    g.quantiles = take_f64s(&mut buf).ok_or_else(|| bad("truncated quantiles"))?;
    let block = g.n_sigmas() * (g.horizon + 1) * g.n_vars;
    if g.responses.len() != g.n_draws() * g.n_origins() * block
        || g.time_avg.len() != g.n_draws() * block
        || g.quantiles.len() != g.quantile_levels.len() * block
    {
        return Err(bad("array sizes disagree with the header"));
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummaryConfig {
    pub flip_benign: bool,
    pub bands: BandConfig,
    /// Variables that get size bands and activeness; by default every
    /// macro and policy-rate variable.
    pub band_variables: Option<Vec<String>>,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            flip_benign: true,
            bands: BandConfig::default(),
            band_variables: None,
        }
    }
}

#[derive(Serialize)]
struct PeakRow<'a> {
    variable: &'a str,
    sigma: f64,
    flipped: bool,
    statistic: &'static str,
    value: f64,
}

#[derive(Serialize)]
struct PathRow<'a> {
    variable: &'a str,
    sigma: f64,
    h: usize,
    quantile: f64,
    value: f64,
}

#[derive(Serialize)]
struct BandRow<'a> {
    variable: &'a str,
    origin: usize,
    date: String,
    sign: ShockSign,
    regime: crate::analytics::Regime,
    statistic: &'static str,
    value: f64,
}

#[derive(Serialize)]
struct ActiveRow<'a> {
    variable: &'a str,
    origin: usize,
    date: String,
    sign: ShockSign,
    activeness: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

/// Writes the summary tables into `dir` and returns the files written.
pub fn write_tables(dir: &Path, g: &GirfResult, cfg: &SummaryConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(Error::file(dir))?;
    let mut files = Vec::new();

    let path = dir.join("peaks.csv");
    let mut w = csv_writer(&path)?;
    for r in peak_table(g, cfg.flip_benign) {
        for (statistic, value) in [
            ("peak_value", r.peak_value),
            ("peak_h", r.peak_h as f64),
            ("p16", r.p16),
            ("p50", r.p50),
            ("p84", r.p84),
        ] {
            w.serialize(PeakRow {
                variable: &r.name,
                sigma: r.sigma,
                flipped: r.flipped,
                statistic,
                value,
            })?;
        }
    }
    w.flush().map_err(Error::file(&path))?;
    files.push(path);

    let path = dir.join("irf_quantiles.csv");
    let mut w = csv_writer(&path)?;
    for (m, name) in g.names.iter().enumerate() {
        for (s, &sigma) in g.sigmas.iter().enumerate() {
            for (q, &level) in g.quantile_levels.iter().enumerate() {
                for (h, value) in g.quantile_path(q, s, m).into_iter().enumerate() {
                    w.serialize(PathRow {
                        variable: name,
                        sigma,
                        h,
                        quantile: level,
                        value,
                    })?;
                }
            }
        }
    }
    w.flush().map_err(Error::file(&path))?;
    files.push(path);

    let band_vars: Vec<usize> = match &cfg.band_variables {
        Some(names) => names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                g.names
                    .iter()
                    .position(|x| x == n)
                    .ok_or_else(|| Error::config(format!("summary.band_variables[{i}]"), format!("unknown variable '{n}'")))
            })
            .collect::<Result<_>>()?,
        None => (0..g.n_vars)
            .filter(|&m| matches!(g.blocks[m], Block::Macro | Block::PolicyRate))
            .collect(),
    };
    let bands_path = dir.join("bands.csv");
    let active_path = dir.join("activeness.csv");
    let mut wb = csv_writer(&bands_path)?;
    let mut wa = csv_writer(&active_path)?;
    for &m in &band_vars {
        for sign in [ShockSign::Adverse, ShockSign::Benign] {
            let bands = size_bands(g, m, sign, &cfg.bands, cfg.flip_benign)?;
            for b in &bands {
                for (statistic, value) in [("mean_peak", b.mean_peak), ("min_peak", b.min_peak), ("max_peak", b.max_peak)] {
                    wb.serialize(BandRow {
                        variable: &g.names[m],
                        origin: b.origin,
                        date: b.date.to_string(),
                        sign,
                        regime: b.regime,
                        statistic,
                        value,
                    })?;
                }
            }
            for (origin, date, a) in activeness(&bands) {
                wa.serialize(ActiveRow {
                    variable: &g.names[m],
                    origin,
                    date: date.to_string(),
                    sign,
                    activeness: a,
                })?;
            }
        }
    }
    wb.flush().map_err(Error::file(&bands_path))?;
    wa.flush().map_err(Error::file(&active_path))?;
    files.push(bands_path);
    files.push(active_path);

    let manifest_path = dir.join("manifest.json");
    let manifest = json!({
        "tables": {
            "peaks.csv": "peak of time-averaged responses per variable and shock size; peak_value/peak_h from the pointwise posterior-median path, p16/p50/p84 over draws of per-draw peaks",
            "irf_quantiles.csv": "posterior quantiles of time-averaged responses by horizon",
            "bands.csv": "per-origin mean/min/max over shock sizes of each regime of the peak of the posterior-median response",
            "activeness.csv": "per-origin max minus min peak over all shock sizes of one sign",
        },
        "flip_benign": cfg.flip_benign,
        "bands": cfg.bands,
        "band_variables": band_vars.iter().map(|&m| g.names[m].clone()).collect::<Vec<_>>(),
        "quantile_definition": "linear interpolation between order statistics (type 7)",
        "units": "transformed units",
    });
    let mut w = create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(Error::file(&manifest_path))?;
    files.push(manifest_path);
    Ok(files)
}
