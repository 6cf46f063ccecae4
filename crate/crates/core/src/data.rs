//! CSV ingestion, transforms, standardization and lag-design construction.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Country {
    US,
    EA,
    UK,
    GLOBAL,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Level,
    Log,
    LogDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Macro,
    PolicyRate,
    Ebp,
    LongYield,
    Equity,
    Fx,
}

impl Block {
    pub fn is_slow(self) -> bool {
        matches!(self, Block::Macro | Block::PolicyRate)
    }

    pub fn is_fast(self) -> bool {
        matches!(self, Block::LongYield | Block::Equity | Block::Fx)
    }
}

/// Contemporaneous order of the fast-moving financial blocks after the EBP.
pub const DEFAULT_FINANCIAL_ORDER: [Block; 3] = [Block::LongYield, Block::Fx, Block::Equity];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    pub country: Country,
    pub transform: Transform,
    pub block: Block,
    pub order_index: usize,
    /// Standard deviation of the transformed series before standardization.
    pub scale_sd: f64,
    pub scale_mean: f64,
}

/// One entry of a schema file. `order_index` may be omitted, in which case
/// the recursive ordering is derived from the blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaEntry {
    pub name: String,
    pub country: Country,
    pub transform: Transform,
    pub block: Block,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub variables: Vec<SchemaEntry>,
    #[serde(default = "default_financial_order")]
    pub financial_order: Vec<Block>,
}

fn default_financial_order() -> Vec<Block> {
    DEFAULT_FINANCIAL_ORDER.to_vec()
}

impl Schema {
    pub fn new(variables: Vec<SchemaEntry>) -> Self {
        Schema {
            variables,
            financial_order: default_financial_order(),
        }
    }

    /// Reads a schema from JSON: either `{"variables": [...]}` or a bare array.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let value = if value.is_array() {
            serde_json::json!({ "variables": value })
        } else {
            value
        };
        serde_path_to_error::deserialize(value).map_err(|e| {
            Error::Schema(format!("{}: {}", e.path(), e.inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(Error::file(path))?)
    }

    /// Resolves the structural order and returns metadata sorted by it.
    pub fn resolve(&self) -> Result<Vec<VariableMeta>> {
        let m = self.variables.len();
        if m == 0 {
            return Err(Error::Schema("schema has no variables".into()));
        }
        let mut names = HashSet::new();
        for v in &self.variables {
            if !names.insert(v.name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable '{}'", v.name)));
            }
            if v.name == "date" {
                return Err(Error::Schema("'date' is reserved for the date column".into()));
            }
        }
        let explicit = self.variables.iter().filter(|v| v.order_index.is_some()).count();
        let order: Vec<usize> = if explicit == m {
            self.variables.iter().map(|v| v.order_index.unwrap()).collect()
        } else if explicit == 0 {
            self.derived_order()?
        } else {
            return Err(Error::Schema(
                "order_index must be given for all variables or for none".into(),
            ));
        };
        let mut meta: Vec<VariableMeta> = self
            .variables
            .iter()
            .zip(&order)
            .map(|(v, &o)| VariableMeta {
                name: v.name.clone(),
                country: v.country,
                transform: v.transform,
                block: v.block,
                order_index: o,
                scale_sd: 1.0,
                scale_mean: 0.0,
            })
            .collect();
        meta.sort_by_key(|v| v.order_index);
        validate_ordering(&meta)?;
        Ok(meta)
    }

    fn derived_order(&self) -> Result<Vec<usize>> {
        let fin = &self.financial_order;
        let fast: HashSet<Block> = fin.iter().copied().collect();
        if fin.len() != 3 || fast.len() != 3 || !fin.iter().all(|b| b.is_fast()) {
            return Err(Error::Schema(
                "financial_order must list long_yield, equity and fx exactly once".into(),
            ));
        }
        let rank = |b: Block| -> usize {
            match b {
                Block::Macro => 0,
                Block::PolicyRate => 1,
                Block::Ebp => 2,
                other => 3 + fin.iter().position(|x| *x == other).unwrap(),
            }
        };
        let mut idx: Vec<usize> = (0..self.variables.len()).collect();
        // stable: schema order within a block
        idx.sort_by_key(|&i| rank(self.variables[i].block));
        let mut order = vec![0; idx.len()];
        for (pos, &i) in idx.iter().enumerate() {
            order[i] = pos;
        }
        Ok(order)
    }
}

/// Checks the recursive-ordering contract on metadata sorted by order index.
pub fn validate_ordering(meta: &[VariableMeta]) -> Result<()> {
    let m = meta.len();
    let mut seen = vec![false; m];
    for v in meta {
        if v.order_index >= m || seen[v.order_index] {
            return Err(Error::Schema(format!(
                "order_index values must be a permutation of 0..{m}"
            )));
        }
        seen[v.order_index] = true;
    }
    let ebp: Vec<&VariableMeta> = meta.iter().filter(|v| v.block == Block::Ebp).collect();
    if ebp.len() != 1 {
        return Err(Error::Schema(format!(
            "exactly one variable must have block 'ebp' (found {})",
            ebp.len()
        )));
    }
    let j = ebp[0].order_index;
    for v in meta {
        if v.block.is_slow() && v.order_index >= j {
            return Err(Error::Schema(format!(
                "'{}' ({:?}) must be ordered before the EBP variable",
                v.name, v.block
            )));
        }
        if v.block.is_fast() && v.order_index <= j {
            return Err(Error::Schema(format!(
                "'{}' ({:?}) must be ordered after the EBP variable",
                v.name, v.block
            )));
        }
    }
    Ok(())
}

/// The 18-series US/EA/UK variable set with the EBP counted in the US block.
pub fn default_schema() -> Schema {
    use Block::*;
    use Country::*;
    use Transform::*;
    let e = |name: &str, country, transform, block| SchemaEntry {
        name: name.to_string(),
        country,
        transform,
        block,
        order_index: None,
    };
    Schema::new(vec![
        e("ip_us", US, Log, Macro),
        e("cpi_us", US, LogDiff, Macro),
        e("shadow_us", US, Level, PolicyRate),
        e("ltr_us", US, Level, LongYield),
        e("sp500", US, Log, Equity),
        e("ebp", US, Level, Ebp),
        e("ip_ea", EA, Log, Macro),
        e("cpi_ea", EA, LogDiff, Macro),
        e("shadow_ea", EA, Level, PolicyRate),
        e("ltr_ea", EA, Level, LongYield),
        e("stoxx50", EA, Log, Equity),
        e("eurusd", EA, Log, Fx),
        e("ip_uk", UK, Log, Macro),
        e("cpi_uk", UK, LogDiff, Macro),
        e("shadow_uk", UK, Level, PolicyRate),
        e("ltr_uk", UK, Level, LongYield),
        e("ftse100", UK, Log, Equity),
        e("gbpusd", UK, Log, Fx),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month));
        Month { year, month }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Month::new(self.year + 1, 1)
        } else {
            Month::new(self.year, self.month + 1)
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("unparseable date '{s}' (expected YYYY-MM)"))?;
        let year: i32 = y
            .parse()
            .map_err(|_| format!("unparseable date '{s}' (expected YYYY-MM)"))?;
        let month: u32 = m
            .parse()
            .map_err(|_| format!("unparseable date '{s}' (expected YYYY-MM)"))?;
        if y.len() != 4 || m.len() != 2 || !(1..=12).contains(&month) {
            return Err(format!("unparseable date '{s}' (expected YYYY-MM)"));
        }
        Ok(Month { year, month })
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Untransformed series aligned on consecutive months.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub dates: Vec<Month>,
    /// One column per variable, in `meta` order.
    pub columns: Vec<Vec<f64>>,
    pub meta: Vec<VariableMeta>,
}

impl RawTable {
    pub fn rows(&self) -> usize {
        self.dates.len()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "." | "null"
    )
}

pub fn load_csv(path: &Path, schema: &[VariableMeta]) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Load { message, .. } => Error::Load {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses CSV text. Leading and trailing months with any missing value are
/// trimmed; a missing value inside the remaining span is an error.
pub fn read_csv<R: Read>(reader: R, schema: &[VariableMeta]) -> Result<RawTable> {
    let load = |message: String| Error::Load {
        path: "<reader>".into(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let date_col = *position
        .get("date")
        .ok_or_else(|| Error::ColumnNotFound("date".into()))?;
    let cols: Vec<usize> = schema
        .iter()
        .map(|v| {
            position
                .get(v.name.as_str())
                .copied()
                .ok_or_else(|| Error::ColumnNotFound(v.name.clone()))
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<(Month, Vec<Option<f64>>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let date: Month = rec
            .get(date_col)
            .unwrap_or("")
            .parse()
            .map_err(|e: String| load(format!("row {}: {e}", line + 2)))?;
        let mut vals = Vec::with_capacity(cols.len());
        for (k, &c) in cols.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            if is_missing(cell) {
                vals.push(None);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    load(format!(
                        "row {}: non-numeric value '{cell}' for '{}'",
                        line + 2,
                        schema[k].name
                    ))
                })?;
                vals.push(if v.is_finite() { Some(v) } else { None });
            }
        }
        rows.push((date, vals));
    }
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(load(format!("duplicate date {}", w[0].0)));
        }
    }
    let complete = |r: &(Month, Vec<Option<f64>>)| r.1.iter().all(Option::is_some);
    let first = rows.iter().position(complete);
    let last = rows.iter().rposition(complete);
    let (first, last) = match (first, last) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(load("no complete rows".into())),
    };
    let rows = &rows[first..=last];
    for w in rows.windows(2) {
        if w[0].0.succ() != w[1].0 {
            return Err(load(format!(
                "non-consecutive months {} -> {}",
                w[0].0, w[1].0
            )));
        }
    }
    let mut columns = vec![Vec::with_capacity(rows.len()); schema.len()];
    for (date, vals) in rows {
        for (k, v) in vals.iter().enumerate() {
            match v {
                Some(x) => columns[k].push(*x),
                None => {
                    return Err(load(format!(
                        "interior missing value for '{}' at {date}",
                        schema[k].name
                    )))
                }
            }
        }
    }
    Ok(RawTable {
        dates: rows.iter().map(|r| r.0).collect(),
        columns,
        meta: schema.to_vec(),
    })
}

/// Standardized monthly panel; columns follow the structural order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub dates: Vec<Month>,
    /// Row-major T×M standardized values.
    values: Vec<f64>,
    pub meta: Vec<VariableMeta>,
}

impl PanelDataset {
    /// Builds a dataset from already-standardized values (row-major T×M).
    pub fn from_parts(dates: Vec<Month>, values: Vec<f64>, meta: Vec<VariableMeta>) -> Result<Self> {
        let m = meta.len();
        if values.len() != dates.len() * m {
            return Err(Error::Dimension(format!(
                "values has {} entries, expected {}x{}",
                values.len(),
                dates.len(),
                m
            )));
        }
        validate_ordering(&meta)?;
        if meta.iter().enumerate().any(|(i, v)| v.order_index != i) {
            return Err(Error::Schema("columns must be sorted by order_index".into()));
        }
        Ok(PanelDataset { dates, values, meta })
    }

    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }

    pub fn n_vars(&self) -> usize {
        self.meta.len()
    }

    #[inline]
    pub fn value(&self, t: usize, m: usize) -> f64 {
        self.values[t * self.meta.len() + m]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let m = self.meta.len();
        &self.values[t * m..(t + 1) * m]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.n_obs()).map(|t| self.value(t, m)).collect()
    }

    pub fn values_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_obs(), self.n_vars(), &self.values)
    }

    /// Transformed (pre-standardization) series of variable `m`.
    pub fn destandardized(&self, m: usize) -> Vec<f64> {
        let v = &self.meta[m];
        self.column(m)
            .into_iter()
            .map(|x| x * v.scale_sd + v.scale_mean)
            .collect()
    }

    pub fn scale_sds(&self) -> Vec<f64> {
        self.meta.iter().map(|v| v.scale_sd).collect()
    }

    pub fn ebp_index(&self) -> usize {
        self.meta
            .iter()
            .position(|v| v.block == Block::Ebp)
            .expect("validated dataset has an ebp variable")
    }

    pub fn names(&self) -> Vec<String> {
        self.meta.iter().map(|v| v.name.clone()).collect()
    }

    /// Schema with explicit order indices that reproduces this dataset's layout.
    pub fn schema(&self) -> Schema {
        Schema::new(
            self.meta
                .iter()
                .map(|v| SchemaEntry {
                    name: v.name.clone(),
                    country: v.country,
                    transform: v.transform,
                    block: v.block,
                    order_index: Some(v.order_index),
                })
                .collect(),
        )
    }

    /// Writes the transformed (pre-standardization) values with a `date`
    /// column. For level-only datasets this is the raw input again.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut header = vec!["date".to_string()];
        header.extend(self.names());
        w.write_record(&header)?;
        let cols: Vec<Vec<f64>> = (0..self.n_vars()).map(|m| self.destandardized(m)).collect();
        for (t, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(cols.iter().map(|c| c[t].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::file(path))
    }

    /// Lag state `(Y'_{t-1}, ..., Y'_{t-P})` for data row `t` (requires `t >= P`).
    pub fn lag_state(&self, t: usize, lags: usize) -> Vec<f64> {
        assert!(t >= lags, "row {t} lacks {lags} lags of history");
        let mut x = Vec::with_capacity(lags * self.n_vars());
        for p in 1..=lags {
            x.extend_from_slice(self.row(t - p));
        }
        x
    }
}

/// Applies level/log/100·Δlog and standardizes every column.
pub fn transform_and_standardize(raw: &RawTable) -> Result<PanelDataset> {
    let n = raw.rows();
    let any_diff = raw.meta.iter().any(|v| v.transform == Transform::LogDiff);
    let start = usize::from(any_diff);
    if n <= start + 1 {
        return Err(Error::Design(format!(
            "need at least {} raw rows, got {n}",
            start + 2
        )));
    }
    let t_out = n - start;
    let m = raw.meta.len();
    let mut meta = raw.meta.clone();
    let mut values = vec![0.0; t_out * m];
    for (k, v) in raw.meta.iter().enumerate() {
        let col = &raw.columns[k];
        if v.transform != Transform::Level {
            if let Some(i) = col.iter().position(|x| *x <= 0.0) {
                return Err(Error::Transform {
                    variable: v.name.clone(),
                    date: raw.dates[i].to_string(),
                    message: format!("nonpositive value {} under log transform", col[i]),
                });
            }
        }
        let series: Vec<f64> = (start..n)
            .map(|t| match v.transform {
                Transform::Level => col[t],
                Transform::Log => col[t].ln(),
                Transform::LogDiff => 100.0 * (col[t].ln() - col[t - 1].ln()),
            })
            .collect();
        let mu = mean(&series);
        let sd = sample_sd(&series);
        if !(sd > 0.0) || !sd.is_finite() || series.iter().all(|x| *x == series[0]) {
            return Err(Error::ZeroVariance(v.name.clone()));
        }
        for (t, x) in series.iter().enumerate() {
            values[t * m + k] = (x - mu) / sd;
        }
        meta[k].scale_mean = mu;
        meta[k].scale_sd = sd;
    }
    PanelDataset::from_parts(raw.dates[start..].to_vec(), values, meta)
}

/// Stacked lag design: row `t` of `x` holds `(Y'_{t+P-1}, ..., Y'_{t})` of
/// the data, and row `t` of `y` is data row `t+P`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub lags: usize,
    /// `(variable index, lag)` for every column of `x`, lags starting at 1.
    pub lag_labels: Vec<(usize, usize)>,
}

impl DesignMatrix {
    /// Assembles a design from explicit matrices (e.g. exogenous regressors
    /// in tests). Constant columns are rejected.
    pub fn from_matrices(x: DMatrix<f64>, y: DMatrix<f64>, lags: usize) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Dimension(format!(
                "x has {} rows, y has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        let m = y.ncols();
        let lag_labels = (0..x.ncols())
            .map(|n| (n % m.max(1), n / m.max(1) + 1))
            .collect::<Vec<_>>();
        for (n, &(var, lag)) in lag_labels.iter().enumerate() {
            let c = x.column(n);
            if c.iter().all(|v| *v == c[0]) {
                return Err(Error::ConstantColumn {
                    variable: format!("x{var}"),
                    lag,
                });
            }
        }
        Ok(DesignMatrix { x, y, lags, lag_labels })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_vars(&self) -> usize {
        self.y.ncols()
    }
}

pub fn build_design(data: &PanelDataset, lags: usize) -> Result<DesignMatrix> {
    let t = data.n_obs();
    let m = data.n_vars();
    if lags == 0 {
        return Err(Error::Design("lag order must be at least 1".into()));
    }
    if t <= lags {
        return Err(Error::Design(format!(
            "T = {t} observations cannot support P = {lags} lags"
        )));
    }
    let rows = t - lags;
    let k = m * lags;
    let mut x = DMatrix::zeros(rows, k);
    let mut y = DMatrix::zeros(rows, m);
    for r in 0..rows {
        for p in 1..=lags {
            for v in 0..m {
                x[(r, (p - 1) * m + v)] = data.value(r + lags - p, v);
            }
        }
        for v in 0..m {
            y[(r, v)] = data.value(r + lags, v);
        }
    }
    let mut lag_labels = Vec::with_capacity(k);
    for p in 1..=lags {
        for v in 0..m {
            lag_labels.push((v, p));
        }
    }
    for (n, &(v, p)) in lag_labels.iter().enumerate() {
        let c = x.column(n);
        if c.iter().all(|z| *z == c[0]) {
            return Err(Error::ConstantColumn {
                variable: data.meta[v].name.clone(),
                lag: p,
            });
        }
    }
    Ok(DesignMatrix { x, y, lags, lag_labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta_level(names: &[&str]) -> Vec<VariableMeta> {
        // first variable is the EBP so that any number of extra fast variables validates
        names
            .iter()
            .enumerate()
            .map(|(i, n)| VariableMeta {
                name: n.to_string(),
                country: Country::US,
                transform: Transform::Level,
                block: if i == 0 { Block::Ebp } else { Block::Equity },
                order_index: i,
                scale_sd: 1.0,
                scale_mean: 0.0,
            })
            .collect()
    }

    #[test]
    fn three_row_csv_identity() {
        let csv = "date,ip_us\n2000-01,1.0\n2000-02,2.0\n2000-03,4.0\n";
        let meta = meta_level(&["ip_us"]);
        let t = read_csv(csv.as_bytes(), &meta).unwrap();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.columns.len(), 1);
        assert_eq!(t.columns[0], vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "date,a\n2000-01,1.0\n";
        let err = read_csv(csv.as_bytes(), &meta_level(&["a", "b"])).unwrap_err();
        assert!(err.to_string().contains("column not found"), "{err}");
    }

    #[test]
    fn paper_sample_span_has_297_rows() {
        let mut csv = String::from("date,x\n");
        let mut d = Month::new(1999, 1);
        let mut n = 0;
        loop {
            csv.push_str(&format!("{d},{}\n", 1.0 + n as f64));
            n += 1;
            if d == Month::new(2023, 9) {
                break;
            }
            d = d.succ();
        }
        let t = read_csv(csv.as_bytes(), &meta_level(&["x"])).unwrap();
        assert_eq!(t.rows(), 297);
    }

    #[test]
    fn rows_sorted_and_load_errors() {
        let meta = meta_level(&["x"]);
        let t = read_csv("date,x\n2000-02,2\n2000-01,1\n".as_bytes(), &meta).unwrap();
        assert_eq!(t.dates[0], Month::new(2000, 1));
        assert_eq!(t.columns[0], vec![1.0, 2.0]);

        let dup = read_csv("date,x\n2000-01,1\n2000-01,2\n".as_bytes(), &meta);
        assert!(dup.unwrap_err().to_string().contains("duplicate date"));

        let bad = read_csv("date,x\n2000/01,1\n".as_bytes(), &meta);
        assert!(bad.unwrap_err().to_string().contains("unparseable date"));

        let hole = read_csv("date,x\n2000-01,1\n2000-02,NA\n2000-03,3\n".as_bytes(), &meta);
        assert!(hole.unwrap_err().to_string().contains("interior missing"));

        // ragged edges are trimmed
        let edge = read_csv("date,x\n2000-01,\n2000-02,2\n2000-03,3\n2000-04,NA\n".as_bytes(), &meta).unwrap();
        assert_eq!(edge.columns[0], vec![2.0, 3.0]);
    }

    #[test]
    fn log_diff_of_e_is_one_hundred() {
        let mut meta = meta_level(&["ebp", "p"]);
        meta[1].transform = Transform::LogDiff;
        let e = std::f64::consts::E;
        let raw = RawTable {
            dates: vec![Month::new(2000, 1), Month::new(2000, 2), Month::new(2000, 3)],
            columns: vec![vec![0.0, 1.0, 3.0], vec![100.0, 100.0 * e, 100.0 * e * e * e]],
            meta,
        };
        let d = transform_and_standardize(&raw).unwrap();
        // first row dropped jointly; transformed values are 100 and 200
        assert_eq!(d.n_obs(), 2);
        assert!((d.meta[1].scale_mean - 150.0).abs() < 1e-9);
        let back = d.destandardized(1);
        assert!((back[0] - 100.0).abs() < 1e-9);
        assert!((back[1] - 200.0).abs() < 1e-9);
    }

    #[test]
    fn constant_series_cannot_be_standardized() {
        let raw = RawTable {
            dates: vec![Month::new(2000, 1), Month::new(2000, 2), Month::new(2000, 3)],
            columns: vec![vec![5.0; 3]],
            meta: meta_level(&["x"]),
        };
        assert!(matches!(transform_and_standardize(&raw), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn nonpositive_log_names_variable_and_date() {
        let mut meta = meta_level(&["x"]);
        meta[0].transform = Transform::Log;
        let raw = RawTable {
            dates: vec![Month::new(2000, 1), Month::new(2000, 2)],
            columns: vec![vec![1.0, -2.0]],
            meta,
        };
        let err = transform_and_standardize(&raw).unwrap_err().to_string();
        assert!(err.contains("'x'") && err.contains("2000-02"), "{err}");
    }

    #[test]
    fn design_stacking_small_example() {
        // M=2, T=5, P=2
        let meta = meta_level(&["a", "b"]);
        let vals: Vec<f64> = (0..10).map(|i| i as f64 * 1.5 + (i % 3) as f64).collect();
        let dates = (0..5).map(|i| Month::new(2000, i + 1)).collect();
        let d = PanelDataset::from_parts(dates, vals, meta).unwrap();
        let dm = build_design(&d, 2).unwrap();
        assert_eq!(dm.x.shape(), (3, 4));
        // first row: (Y_2', Y_1') in one-based time
        assert_eq!(dm.x[(0, 0)], d.value(1, 0));
        assert_eq!(dm.x[(0, 1)], d.value(1, 1));
        assert_eq!(dm.x[(0, 2)], d.value(0, 0));
        assert_eq!(dm.x[(0, 3)], d.value(0, 1));
        assert_eq!(dm.y[(0, 1)], d.value(2, 1));
        assert_eq!(dm.lag_labels, vec![(0, 1), (1, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn design_rejects_short_samples() {
        let meta = meta_level(&["a"]);
        let d = PanelDataset::from_parts(
            (0..3).map(|i| Month::new(2000, i + 1)).collect(),
            vec![1.0, 2.0, 3.0],
            meta,
        )
        .unwrap();
        assert!(build_design(&d, 3).is_err());
        assert!(build_design(&d, 4).is_err());
    }

    #[test]
    fn paper_dimensions() {
        let meta = default_schema().resolve().unwrap();
        assert_eq!(meta.len(), 18);
        assert_eq!(19 * 12, 228);
        assert_eq!(meta.len() * 12, 216);
    }

    #[test]
    fn derived_order_respects_recursive_contract() {
        let meta = default_schema().resolve().unwrap();
        let j = meta.iter().position(|v| v.block == Block::Ebp).unwrap();
        assert_eq!(j, 9);
        assert!(meta[..j].iter().all(|v| v.block.is_slow()));
        assert!(meta[j + 1..].iter().all(|v| v.block.is_fast()));
        // yields, then fx, then equities
        let blocks: Vec<Block> = meta[j + 1..].iter().map(|v| v.block).collect();
        assert_eq!(&blocks[..3], &[Block::LongYield; 3]);
        assert_eq!(&blocks[3..5], &[Block::Fx; 2]);
        assert_eq!(&blocks[5..], &[Block::Equity; 3]);
    }

    #[test]
    fn explicit_order_violating_contract_is_rejected() {
        let mut s = default_schema();
        for (i, v) in s.variables.iter_mut().enumerate() {
            v.order_index = Some(i);
        }
        // schema order puts ltr_us before the EBP
        assert!(s.resolve().is_err());
    }

    #[test]
    fn schema_accepts_bare_array_and_reports_paths() {
        let s = Schema::from_json(
            r#"[{"name":"e","country":"US","transform":"level","block":"ebp"}]"#,
        )
        .unwrap();
        assert_eq!(s.variables.len(), 1);
        let err = Schema::from_json(
            r#"{"variables":[{"name":"e","country":"XX","transform":"level","block":"ebp"}]}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("variables[0].country"), "{err}");
    }
}
