//! Peak responses, size-band envelopes and the activeness indicator.

use serde::{Deserialize, Serialize};

use crate::data::Month;
use crate::error::{Error, Result};
use crate::girf::GirfResult;
use crate::stats::quantile_sorted;

/// Signed entry of largest magnitude and its horizon; ties go to the
/// earliest horizon.
pub fn peak_response(path: &[f64]) -> (f64, usize) {
    let mut best = (0.0, 0);
    let mut mag = f64::NEG_INFINITY;
    for (h, v) in path.iter().enumerate() {
        if v.abs() > mag {
            mag = v.abs();
            best = (*v, h);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub variable: usize,
    pub name: String,
    pub sigma: f64,
    /// Peak of the pointwise posterior-median path.
    pub peak_value: f64,
    pub peak_h: usize,
    /// Percentiles over draws of the per-draw peak.
    pub p16: f64,
    pub p50: f64,
    pub p84: f64,
    pub flipped: bool,
}

fn pointwise_median(girf: &GirfResult, s: usize, m: usize) -> Vec<f64> {
    let paths: Vec<Vec<f64>> = (0..girf.n_draws()).map(|d| girf.time_avg_path(d, s, m)).collect();
    (0..=girf.horizon)
        .map(|h| {
            let mut v: Vec<f64> = paths.iter().map(|p| p[h]).collect();
            v.sort_by(f64::total_cmp);
            quantile_sorted(&v, 0.5)
        })
        .collect()
}

/// Peak statistics of the time-averaged responses for every variable and
/// shock size. With `flip_benign`, rows with `ς < 0` are negated.
pub fn peak_table(girf: &GirfResult, flip_benign: bool) -> Vec<PeakSummary> {
    let mut out = Vec::with_capacity(girf.n_vars * girf.n_sigmas());
    for m in 0..girf.n_vars {
        for (s, &sigma) in girf.sigmas.iter().enumerate() {
            let mut peaks: Vec<f64> = (0..girf.n_draws())
                .map(|d| peak_response(&girf.time_avg_path(d, s, m)).0)
                .collect();
            peaks.sort_by(f64::total_cmp);
            let (peak_value, peak_h) = peak_response(&pointwise_median(girf, s, m));
            let q = |p: f64| quantile_sorted(&peaks, p);
            let mut row = PeakSummary {
                variable: m,
                name: girf.names[m].clone(),
                sigma,
                peak_value,
                peak_h,
                p16: q(0.16),
                p50: q(0.5),
                p84: q(0.84),
                flipped: false,
            };
            if flip_benign && sigma < 0.0 {
                row = PeakSummary {
                    peak_value: -row.peak_value,
                    p16: -row.p84,
                    p50: -row.p50,
                    p84: -row.p16,
                    flipped: true,
                    ..row
                };
            }
            out.push(row);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockSign {
    Adverse,
    Benign,
}

impl ShockSign {
    pub fn matches(self, sigma: f64) -> bool {
        match self {
            ShockSign::Adverse => sigma > 0.0,
            ShockSign::Benign => sigma < 0.0,
        }
    }
}

/// Shock-size regimes in absolute standard deviations: small is the closed
/// interval, large the half-open `(small[1], large_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandConfig {
    pub small: [f64; 2],
    pub large_max: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            small: [0.1, 1.5],
            large_max: 6.0,
        }
    }
}

impl BandConfig {
    pub fn regime(&self, sigma: f64) -> Option<Regime> {
        let a = sigma.abs();
        if a >= self.small[0] && a <= self.small[1] {
            Some(Regime::Small)
        } else if a > self.small[1] && a <= self.large_max {
            Some(Regime::Large)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub origin: usize,
    pub date: Month,
    pub regime: Regime,
    pub sign: ShockSign,
    pub mean_peak: f64,
    pub min_peak: f64,
    pub max_peak: f64,
}

/// Per-origin envelopes over the shock sizes of each regime, using the peak
/// of the posterior-median path. Benign peaks are negated when `flip_benign`.
pub fn size_bands(
    girf: &GirfResult,
    m: usize,
    sign: ShockSign,
    bands: &BandConfig,
    flip_benign: bool,
) -> Result<Vec<BandSummary>> {
    if m >= girf.n_vars {
        return Err(Error::Index {
            what: "variable",
            index: m,
            limit: girf.n_vars,
        });
    }
    let members = |regime: Regime| -> Vec<usize> {
        (0..girf.n_sigmas())
            .filter(|&s| sign.matches(girf.sigmas[s]) && bands.regime(girf.sigmas[s]) == Some(regime))
            .collect()
    };
    let regimes = [(Regime::Small, members(Regime::Small)), (Regime::Large, members(Regime::Large))];
    if let Some((r, _)) = regimes.iter().find(|(_, s)| s.is_empty()) {
        return Err(Error::config(
            "girf.sigmas",
            format!("no {sign:?} shock sizes fall in the {r:?} regime"),
        ));
    }
    let flip = if flip_benign && sign == ShockSign::Benign { -1.0 } else { 1.0 };
    let mut out = Vec::with_capacity(girf.n_origins() * 2);
    for o in 0..girf.n_origins() {
        for (regime, set) in &regimes {
            let peaks: Vec<f64> = set
                .iter()
                .map(|&s| flip * peak_response(&girf.median_path(o, s, m)).0)
                .collect();
            let min_peak = peaks.iter().copied().fold(f64::INFINITY, f64::min);
            let max_peak = peaks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean_peak = crate::stats::mean(&peaks).clamp(min_peak, max_peak);
            out.push(BandSummary {
                origin: girf.origins[o],
                date: girf.origin_dates[o],
                regime: *regime,
                sign,
                mean_peak,
                min_peak,
                max_peak,
            });
        }
    }
    Ok(out)
}

/// Spread between the largest and smallest peak over both regimes, per
/// origin, in origin order of first appearance.
pub fn activeness(bands: &[BandSummary]) -> Vec<(usize, Month, f64)> {
    let mut out: Vec<(usize, Month, f64, f64)> = Vec::new();
    for b in bands {
        match out.iter_mut().find(|e| e.0 == b.origin) {
            Some(e) => {
                e.2 = e.2.min(b.min_peak);
                e.3 = e.3.max(b.max_peak);
            }
            None => out.push((b.origin, b.date, b.min_peak, b.max_peak)),
        }
    }
    out.into_iter().map(|(o, d, lo, hi)| (o, d, hi - lo)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::girf::NoiseMode;

    /// Result with `responses[d][o][s][h][m] = f(d, o, s, h, m)`.
    fn synthetic_result(
        n_draws: usize,
        n_origins: usize,
        sigmas: &[f64],
        horizon: usize,
        n_vars: usize,
        f: impl Fn(usize, usize, usize, usize, usize) -> f64,
    ) -> GirfResult {
        let mut responses = Vec::new();
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
        let block = sigmas.len() * (horizon + 1) * n_vars;
        let mut time_avg = vec![0.0; n_draws * block];
        for d in 0..n_draws {
            for i in 0..block {
                let xs: Vec<f64> = (0..n_origins).map(|o| responses[(d * n_origins + o) * block + i]).collect();
                time_avg[d * block + i] = crate::stats::mean(&xs);
            }
        }
        GirfResult {
            shock_index: 0,
            sigmas: sigmas.to_vec(),
            horizon,
            n_vars,
            names: (0..n_vars).map(|m| format!("v{m}")).collect(),
            blocks: vec![crate::data::Block::Macro; n_vars],
            scale: vec![1.0; n_vars],
            origins: (0..n_origins).collect(),
            origin_dates: (0..n_origins).map(|o| Month::new(2000 + o as i32, 1)).collect(),
            draw_ids: (0..n_draws).collect(),
            quantile_levels: vec![],
            n_sim: 2,
            noise: NoiseMode::Common,
            seed: 0,
            responses,
            time_avg,
            quantiles: vec![],
        }
    }

    #[test]
    fn peak_examples() {
        assert_eq!(peak_response(&[0.0, -1.0, -3.0, -2.0]), (-3.0, 2));
        assert_eq!(peak_response(&[0.0, 0.0, 0.0]), (0.0, 0));
        assert_eq!(peak_response(&[2.0, -2.0]), (2.0, 0));
    }

    #[test]
    fn single_draw_collapses_percentiles() {
        let g = synthetic_result(1, 3, &[-1.0, 2.0], 5, 2, |_, o, s, h, m| (o + s + m) as f64 * (h as f64 - 2.5));
        for row in peak_table(&g, false) {
            assert_eq!(row.p16, row.p50);
            assert_eq!(row.p84, row.p50);
            assert_eq!(row.p50, row.peak_value);
        }
    }

    fn linear_result() -> GirfResult {
        let sig = [-6.0, -3.0, -1.5, -0.5, 0.5, 1.5, 3.0, 6.0];
        let unit = |h: usize| -(h as f64) * (6.0 - h as f64) * 0.1;
        synthetic_result(5, 4, &sig, 6, 1, move |d, o, s, h, _| {
            sig[s] * unit(h) * (1.0 + 0.1 * d as f64) * (1.0 + 0.05 * o as f64)
        })
    }

    #[test]
    fn linear_peaks_are_proportional_and_mirrored() {
        let g = linear_result();
        let rows = peak_table(&g, false);
        let unit = rows.iter().find(|r| r.sigma == 0.5).unwrap().peak_value / 0.5;
        for r in &rows {
            assert!((r.peak_value - r.sigma * unit).abs() < 1e-12);
        }
        let flipped = peak_table(&g, true);
        for (a, b) in rows.iter().zip(&flipped) {
            assert_eq!(a.peak_h, b.peak_h);
            assert_eq!(a.peak_value.abs(), b.peak_value.abs());
            if a.sigma < 0.0 {
                let mirror = flipped.iter().find(|r| r.sigma == -a.sigma).unwrap();
                assert!((b.peak_value - mirror.peak_value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_band_width_tracks_sigma_range() {
        let g = linear_result();
        let bands = size_bands(&g, 0, ShockSign::Adverse, &BandConfig::default(), false).unwrap();
        let unit = {
            let s = g.sigmas.iter().position(|x| *x == 0.5).unwrap();
            peak_response(&g.median_path(0, s, 0)).0 / 0.5
        };
        let small = &bands[0];
        let large = &bands[1];
        assert!(((small.max_peak - small.min_peak).abs() - 1.0 * unit.abs()).abs() < 1e-12);
        assert!(((large.max_peak - large.min_peak).abs() - 3.0 * unit.abs()).abs() < 1e-12);
        let act = activeness(&bands[..2]);
        assert!((act[0].2 - 5.5 * unit.abs()).abs() < 1e-12);
    }

    #[test]
    fn singleton_regime_collapses() {
        let g = synthetic_result(2, 2, &[1.0, 4.0], 3, 1, |d, _, s, h, _| (d + s + h) as f64);
        for b in size_bands(&g, 0, ShockSign::Adverse, &BandConfig::default(), false).unwrap() {
            assert_eq!(b.min_peak, b.max_peak);
            assert_eq!(b.mean_peak, b.max_peak);
        }
    }

    #[test]
    fn empty_regime_is_an_error() {
        let g = synthetic_result(1, 1, &[1.0], 3, 1, |_, _, _, h, _| h as f64);
        assert!(size_bands(&g, 0, ShockSign::Adverse, &BandConfig::default(), false).is_err());
    }

    #[test]
    fn constant_over_sigma_has_zero_activeness() {
        let g = synthetic_result(2, 3, &[0.5, 1.0, 3.0, 6.0], 4, 1, |_, o, _, h, _| (o * h) as f64);
        let bands = size_bands(&g, 0, ShockSign::Adverse, &BandConfig::default(), false).unwrap();
        assert!(activeness(&bands).iter().all(|a| a.2 == 0.0));
    }
}
