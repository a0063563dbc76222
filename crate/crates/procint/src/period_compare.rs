//! Between-period comparison: boxplot-fence checks for yearly dummy
//! fractions, and pointwise confidence bands around the first period's yearly
//! CDF curves with a 25% coverage rule for the second period's curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::classify::PeriodConfig;
use crate::derive::AnnotatedContract;
use crate::error::Error;
use crate::stats::EmpiricalCdf;
use crate::vars::{DummyVar, NumericVar};

#[derive(Debug, Error, PartialEq)]
pub enum PeriodCompareError {
    #[error("need at least 2 values for a boxplot, got {0}")]
    TooFewValues(usize),
    #[error("need at least 2 first-period curves for a confidence band, got {0}")]
    TooFewCurves(usize),
    #[error("empty sample for {0}")]
    EmptySample(String),
}

impl From<PeriodCompareError> for Error {
    fn from(e: PeriodCompareError) -> Self {
        Error::Data(e.to_string())
    }
}

/// Linear-interpolation quantile (the common statistical-package default,
/// "type 7"): `h = (n - 1) p`, interpolate between floor and ceil.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Boxplot five-number summary; whiskers are the most extreme data points
/// within `q1 - c*IQR` and `q3 + c*IQR`, never interpolated values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub range_coefficient: f64,
}

pub fn boxplot_summary(values: &[f64], range_coefficient: f64) -> Result<BoxplotSummary, PeriodCompareError> {
    if values.len() < 2 {
        return Err(PeriodCompareError::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let q1 = quantile_type7(&sorted, 0.25);
    let median = quantile_type7(&sorted, 0.5);
    let q3 = quantile_type7(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - range_coefficient * iqr;
    let hi_fence = q3 + range_coefficient * iqr;
    let lower_whisker = sorted.iter().copied().find(|v| *v >= lo_fence).unwrap_or(sorted[0]);
    let upper_whisker = sorted.iter().rev().copied().find(|v| *v <= hi_fence).unwrap_or(sorted[sorted.len() - 1]);
    Ok(BoxplotSummary { q1, median, q3, lower_whisker, upper_whisker, range_coefficient })
}

/// How the "minimum and maximum ranges of the boxplot" are read when judging
/// dummy fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FenceRule {
    /// Default: the whiskers of the 1.5*IQR boxplot.
    Whisker,
    /// Override: the raw min and max of the first-period values.
    RawMinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Different,
    Similar,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Different => "Different",
            Verdict::Similar => "Similar",
        }
    }
}

/// One (variable, second-period year) verdict. `coverage_outside` is the
/// fraction of grid points outside the band; dummies report 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodVerdict {
    pub variable: String,
    pub year: i32,
    pub coverage_outside: f64,
    pub verdict: Verdict,
}

/// The fraction of a yearly CDF allowed outside the band before the period is
/// declared Different ("at least 25%" -> boundary counts as Different).
pub const COVERAGE_OUTSIDE_CUTOFF: f64 = 0.25;

/// Judges one dummy variable's second-period fraction against the
/// first-period boxplot fences. Boundary equality counts as inside.
pub fn dummy_period_verdict(
    first_period_fractions: &[f64],
    second_fraction: f64,
    fence: FenceRule,
    range_coefficient: f64,
) -> Result<(Verdict, BoxplotSummary), PeriodCompareError> {
    let summary = boxplot_summary(first_period_fractions, range_coefficient)?;
    let (lo, hi) = match fence {
        FenceRule::Whisker => (summary.lower_whisker, summary.upper_whisker),
        FenceRule::RawMinMax => {
            let lo = first_period_fractions.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = first_period_fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    let verdict = if second_fraction < lo || second_fraction > hi {
        Verdict::Different
    } else {
        Verdict::Similar
    };
    Ok((verdict, summary))
}

/// Pointwise confidence band over yearly CDF curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfBand {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

/// Evaluation grid: empirical quantiles of the pooled sample at `size` evenly
/// spaced probability levels, so coverage is weighted by where the data
/// lives. Duplicate grid points are kept on purpose.
pub fn quantile_grid(pooled: &[f64], size: usize) -> Result<Vec<f64>, PeriodCompareError> {
    if pooled.is_empty() {
        return Err(PeriodCompareError::EmptySample("grid".into()));
    }
    let mut sorted = pooled.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let size = size.max(2);
    Ok((0..size)
        .map(|i| quantile_type7(&sorted, i as f64 / (size - 1) as f64))
        .collect())
}

/// Mean +- t-quantile * s/sqrt(n) at each grid point over the yearly curves,
/// clamped to [0, 1]. For 6 curves at level 0.99 the multiplier is ~4.0321.
pub fn pointwise_ci_band(curves: &[EmpiricalCdf], grid: &[f64], level: f64) -> Result<CdfBand, PeriodCompareError> {
    let n = curves.len();
    if n < 2 {
        return Err(PeriodCompareError::TooFewCurves(n));
    }
    let df = (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let nf = n as f64;
    let mut mean = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for &x in grid {
        let values: Vec<f64> = curves.iter().map(|c| c.eval(x)).collect();
        let m = values.iter().sum::<f64>() / nf;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / df;
        let half = t * (var / nf).sqrt();
        mean.push(m);
        lower.push((m - half).clamp(0.0, 1.0));
        upper.push((m + half).clamp(0.0, 1.0));
    }
    Ok(CdfBand { grid: grid.to_vec(), mean, lower, upper, level })
}

/// Fraction of grid points where the curve leaves the band. Boundary equality
/// counts as inside.
pub fn cdf_coverage(curve: &EmpiricalCdf, band: &CdfBand) -> f64 {
    let outside = band
        .grid
        .iter()
        .enumerate()
        .filter(|(i, x)| {
            let v = curve.eval(**x);
            v < band.lower[*i] || v > band.upper[*i]
        })
        .count();
    outside as f64 / band.grid.len() as f64
}

/// Knobs for the period comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCompareOptions {
    pub ci_level: f64,
    pub grid_size: usize,
    pub fence: FenceRule,
    pub range_coefficient: f64,
}

impl Default for PeriodCompareOptions {
    fn default() -> Self {
        PeriodCompareOptions { ci_level: 0.99, grid_size: 200, fence: FenceRule::Whisker, range_coefficient: 1.5 }
    }
}

/// Per-year fraction of contracts with the dummy set. Years without contracts
/// are omitted.
pub fn yearly_dummy_fractions(contracts: &[&AnnotatedContract], var: DummyVar) -> BTreeMap<i32, f64> {
    let mut counts: BTreeMap<i32, (u64, u64)> = BTreeMap::new();
    for c in contracts {
        let entry = counts.entry(c.contract.year).or_insert((0, 0));
        entry.1 += 1;
        if var.is_set(&c.contract) {
            entry.0 += 1;
        }
    }
    counts.into_iter().map(|(year, (k, n))| (year, k as f64 / n as f64)).collect()
}

/// Per-year sample of a numeric variable.
pub fn yearly_numeric_samples(contracts: &[&AnnotatedContract], var: NumericVar) -> BTreeMap<i32, Vec<f64>> {
    let mut out: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for c in contracts {
        out.entry(c.contract.year).or_default().push(var.value(c));
    }
    out
}

/// Verdicts for one dummy series: one per second-period year present.
pub fn compare_dummy_series(
    name: &str,
    yearly: &BTreeMap<i32, f64>,
    cfg: &PeriodConfig,
    opts: &PeriodCompareOptions,
) -> Result<(Vec<PeriodVerdict>, BoxplotSummary), PeriodCompareError> {
    let first: Vec<f64> = cfg.first_years().filter_map(|y| yearly.get(&y).copied()).collect();
    if first.len() < 2 {
        return Err(PeriodCompareError::TooFewValues(first.len()));
    }
    let mut verdicts = Vec::new();
    let mut summary = None;
    for year in cfg.second_years() {
        let Some(&fraction) = yearly.get(&year) else { continue };
        let (verdict, s) = dummy_period_verdict(&first, fraction, opts.fence, opts.range_coefficient)?;
        summary = Some(s);
        verdicts.push(PeriodVerdict {
            variable: name.to_string(),
            year,
            coverage_outside: if verdict == Verdict::Different { 1.0 } else { 0.0 },
            verdict,
        });
    }
    let summary = match summary {
        Some(s) => s,
        None => boxplot_summary(&first, opts.range_coefficient)?,
    };
    Ok((verdicts, summary))
}

/// Plot data for one numeric variable: the band plus each second-period
/// year's curve evaluated on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericPlotData {
    pub variable: String,
    pub band: CdfBand,
    pub second_curves: Vec<(i32, Vec<f64>)>,
}

/// Verdicts for one numeric series: builds the first-period band on the
/// pooled quantile grid and checks each second-period year's coverage.
pub fn compare_numeric_series(
    name: &str,
    yearly: &BTreeMap<i32, Vec<f64>>,
    cfg: &PeriodConfig,
    opts: &PeriodCompareOptions,
) -> Result<(Vec<PeriodVerdict>, NumericPlotData), PeriodCompareError> {
    let mut pooled = Vec::new();
    let mut curves = Vec::new();
    for year in cfg.first_years() {
        let Some(sample) = yearly.get(&year).filter(|s| !s.is_empty()) else { continue };
        pooled.extend_from_slice(sample);
        curves.push(EmpiricalCdf::new(sample).map_err(|_| PeriodCompareError::EmptySample(name.to_string()))?);
    }
    if curves.len() < 2 {
        return Err(PeriodCompareError::TooFewCurves(curves.len()));
    }
    let grid = quantile_grid(&pooled, opts.grid_size)?;
    let band = pointwise_ci_band(&curves, &grid, opts.ci_level)?;

    let mut verdicts = Vec::new();
    let mut second_curves = Vec::new();
    for year in cfg.second_years() {
        let Some(sample) = yearly.get(&year).filter(|s| !s.is_empty()) else { continue };
        let curve = EmpiricalCdf::new(sample).map_err(|_| PeriodCompareError::EmptySample(name.to_string()))?;
        let coverage_outside = cdf_coverage(&curve, &band);
        verdicts.push(PeriodVerdict {
            variable: name.to_string(),
            year,
            coverage_outside,
            verdict: if coverage_outside >= COVERAGE_OUTSIDE_CUTOFF {
                Verdict::Different
            } else {
                Verdict::Similar
            },
        });
        second_curves.push((year, band.grid.iter().map(|&x| curve.eval(x)).collect()));
    }
    Ok((verdicts, NumericPlotData { variable: name.to_string(), band, second_curves }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxplot_fixture() {
        let s = boxplot_summary(&[1.0, 2.0, 3.0, 4.0, 100.0], 1.5).unwrap();
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.lower_whisker, 1.0);
        assert_eq!(s.upper_whisker, 4.0);
    }

    #[test]
    fn type7_interpolation() {
        let s = boxplot_summary(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1.5).unwrap();
        assert!((s.q1 - 2.25).abs() < 1e-12);
        assert!((s.q3 - 4.75).abs() < 1e-12);
    }

    #[test]
    fn constant_data_boxplot() {
        let s = boxplot_summary(&[3.0; 5], 1.5).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.lower_whisker, s.upper_whisker), (3.0, 3.0, 3.0, 3.0, 3.0));
        assert!(boxplot_summary(&[1.0], 1.5).is_err());
    }

    #[test]
    fn dummy_verdicts() {
        let first = [0.2, 0.21, 0.19, 0.22, 0.2, 0.18];
        let (v, s) = dummy_period_verdict(&first, 0.9, FenceRule::Whisker, 1.5).unwrap();
        assert_eq!(v, Verdict::Different);
        let (v, _) = dummy_period_verdict(&first, 0.20, FenceRule::Whisker, 1.5).unwrap();
        assert_eq!(v, Verdict::Similar);
        // boundary equality counts as inside
        let (v, _) = dummy_period_verdict(&first, s.upper_whisker, FenceRule::Whisker, 1.5).unwrap();
        assert_eq!(v, Verdict::Similar);
    }

    #[test]
    fn band_for_identical_curves_is_degenerate() {
        let sample = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let curves: Vec<EmpiricalCdf> = (0..6).map(|_| EmpiricalCdf::new(&sample).unwrap()).collect();
        let grid = quantile_grid(&sample, 50).unwrap();
        let band = pointwise_ci_band(&curves, &grid, 0.99).unwrap();
        for i in 0..band.grid.len() {
            assert!((band.lower[i] - band.mean[i]).abs() < 1e-12);
            assert!((band.upper[i] - band.mean[i]).abs() < 1e-12);
        }
        assert_eq!(cdf_coverage(&curves[0], &band), 0.0);
    }

    #[test]
    fn t_multiplier_for_six_curves() {
        let t = StudentsT::new(0.0, 1.0, 5.0).unwrap().inverse_cdf(0.995);
        assert!((t - 4.0321).abs() < 0.0005, "got {t}");
    }

    #[test]
    fn band_level_monotonicity() {
        let samples: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..40).map(|j| (j as f64) + 0.3 * (i as f64)).collect())
            .collect();
        let curves: Vec<EmpiricalCdf> = samples.iter().map(|s| EmpiricalCdf::new(s).unwrap()).collect();
        let pooled: Vec<f64> = samples.concat();
        let grid = quantile_grid(&pooled, 100).unwrap();
        let b99 = pointwise_ci_band(&curves, &grid, 0.99).unwrap();
        let b95 = pointwise_ci_band(&curves, &grid, 0.95).unwrap();
        for i in 0..grid.len() {
            assert!(b99.lower[i] <= b95.lower[i] + 1e-12);
            assert!(b99.upper[i] >= b95.upper[i] - 1e-12);
            assert!(b99.lower[i] <= b99.mean[i] && b99.mean[i] <= b99.upper[i]);
        }
    }

    #[test]
    fn coverage_extremes() {
        let sample = vec![1.0, 2.0, 3.0, 4.0];
        let shifted = vec![100.0, 200.0, 300.0, 400.0];
        let curves: Vec<EmpiricalCdf> = (0..4).map(|_| EmpiricalCdf::new(&sample).unwrap()).collect();
        let grid = quantile_grid(&sample, 50).unwrap();
        let band = pointwise_ci_band(&curves, &grid, 0.99).unwrap();
        let far = EmpiricalCdf::new(&shifted).unwrap();
        assert_eq!(cdf_coverage(&far, &band), 1.0);
    }
}
