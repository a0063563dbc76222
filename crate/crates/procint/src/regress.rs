//! Weighted least-squares models on yearly aggregates, with standardized
//! coefficients and variance inflation factors for the two-predictor models.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::classify::ClassLabel;
use crate::derive::AnnotatedContract;
use crate::error::Error;
use crate::risk_eval::FactorPredicate;
use crate::vars::DummyVar;

#[derive(Debug, Error, PartialEq)]
pub enum RegressError {
    #[error("class {class} present in only {years} year(s); need at least 3")]
    TooFewYears { class: &'static str, years: usize },
    #[error("need at least {needed} observations for {predictors} predictor(s), got {got}")]
    TooFewObservations { needed: usize, got: usize, predictors: usize },
    #[error("singular design matrix (constant or collinear predictor)")]
    SingularDesign,
    #[error("weights must be positive")]
    BadWeight,
}

impl From<RegressError> for Error {
    fn from(e: RegressError) -> Self {
        Error::Data(e.to_string())
    }
}

/// One yearly data point: dependent fraction y, independent fraction(s) x,
/// weighted by the class contract count that year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlyObservation {
    pub year: i32,
    pub x: Vec<f64>,
    pub y: f64,
    pub weight: f64,
}

/// Fit summary. `coefficients[0]` is the intercept; slopes follow in
/// predictor order. P-values use t with df = n - p - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub standardized_slopes: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub mean_vif: f64,
    pub collinear: bool,
    pub df: usize,
    pub n: usize,
}

/// Builds the yearly regression dataset for one class. The dependent value
/// is the class's yearly fraction of the dummy; the independent values are
/// yearly predicate fractions over the corpus with the class's own contracts
/// excluded, so the dependent class cannot drive its own predictor. Years
/// where the class has no contracts, or where the exclusion leaves nothing,
/// are skipped.
pub fn build_yearly_dataset(
    contracts: &[AnnotatedContract],
    class: ClassLabel,
    dependent: DummyVar,
    independents: &[FactorPredicate],
) -> Result<Vec<YearlyObservation>, RegressError> {
    use std::collections::BTreeMap;
    struct YearAcc {
        class_n: u64,
        class_dep: u64,
        rest_n: u64,
        rest_hits: Vec<u64>,
    }
    let mut years: BTreeMap<i32, YearAcc> = BTreeMap::new();
    for a in contracts {
        let acc = years.entry(a.contract.year).or_insert_with(|| YearAcc {
            class_n: 0,
            class_dep: 0,
            rest_n: 0,
            rest_hits: vec![0; independents.len()],
        });
        if a.class == class {
            acc.class_n += 1;
            acc.class_dep += dependent.is_set(&a.contract) as u64;
        } else {
            acc.rest_n += 1;
            for (h, pred) in acc.rest_hits.iter_mut().zip(independents) {
                *h += pred.matches(a) as u64;
            }
        }
    }
    let obs: Vec<YearlyObservation> = years
        .into_iter()
        .filter(|(_, acc)| acc.class_n > 0 && acc.rest_n > 0)
        .map(|(year, acc)| YearlyObservation {
            year,
            x: acc.rest_hits.iter().map(|&h| h as f64 / acc.rest_n as f64).collect(),
            y: acc.class_dep as f64 / acc.class_n as f64,
            weight: acc.class_n as f64,
        })
        .collect();
    if obs.len() < 3 {
        return Err(RegressError::TooFewYears { class: class.name(), years: obs.len() });
    }
    Ok(obs)
}

fn weighted_mean(values: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sw, mut swv) = (0.0, 0.0);
    for (v, w) in values {
        sw += w;
        swv += w * v;
    }
    swv / sw
}

fn weighted_sd(values: &[f64], weights: &[f64]) -> f64 {
    let mean = weighted_mean(values.iter().copied().zip(weights.iter().copied()));
    let sw: f64 = weights.iter().sum();
    let ss: f64 = values.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum();
    (ss / sw).sqrt()
}

fn weighted_correlation(x: &[f64], z: &[f64], weights: &[f64]) -> f64 {
    let mx = weighted_mean(x.iter().copied().zip(weights.iter().copied()));
    let mz = weighted_mean(z.iter().copied().zip(weights.iter().copied()));
    let (mut sxz, mut sxx, mut szz) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (dx, dz, w) = (x[i] - mx, z[i] - mz, weights[i]);
        sxz += w * dx * dz;
        sxx += w * dx * dx;
        szz += w * dz * dz;
    }
    sxz / (sxx * szz).sqrt()
}

/// Gauss-Jordan inverse for the small (at most 3x3) normal-equation matrix.
fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot_row);
        let pivot = m[col][col];
        for v in m[col].iter_mut() {
            *v /= pivot;
        }
        for row in 0..n {
            if row != col {
                let factor = m[row][col];
                for j in 0..2 * n {
                    m[row][j] -= factor * m[col][j];
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Fits y ~ intercept + x by weighted least squares over the normal
/// equations. Standardized slopes use weighted means and weighted standard
/// deviations of x and y.
pub fn wls_fit(observations: &[YearlyObservation], n_predictors: usize) -> Result<FitResult, RegressError> {
    let n = observations.len();
    let p = n_predictors;
    // n = p + 1 is the exact-interpolation case: allowed, but leaves no
    // degrees of freedom for p-values
    if n < p + 1 {
        return Err(RegressError::TooFewObservations { needed: p + 1, got: n, predictors: p });
    }
    if observations.iter().any(|o| o.weight <= 0.0 || !o.weight.is_finite()) {
        return Err(RegressError::BadWeight);
    }
    let k = p + 1;
    // X'WX and X'Wy with the intercept as column 0
    let design_col = |o: &YearlyObservation, j: usize| if j == 0 { 1.0 } else { o.x[j - 1] };
    let mut xtwx = vec![vec![0.0; k]; k];
    let mut xtwy = vec![0.0; k];
    for o in observations {
        for i in 0..k {
            let xi = design_col(o, i);
            xtwy[i] += o.weight * xi * o.y;
            for j in 0..k {
                xtwx[i][j] += o.weight * xi * design_col(o, j);
            }
        }
    }
    let inv = invert(&xtwx).ok_or(RegressError::SingularDesign)?;
    let coefficients: Vec<f64> = (0..k).map(|i| (0..k).map(|j| inv[i][j] * xtwy[j]).sum()).collect();

    let fitted = |o: &YearlyObservation| (0..k).map(|j| coefficients[j] * design_col(o, j)).sum::<f64>();
    let ss_res: f64 = observations.iter().map(|o| o.weight * (o.y - fitted(o)).powi(2)).sum();
    let y_mean = weighted_mean(observations.iter().map(|o| (o.y, o.weight)));
    let ss_tot: f64 = observations.iter().map(|o| o.weight * (o.y - y_mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };

    let df = n - k;
    let sigma2 = if df > 0 { ss_res / df as f64 } else { 0.0 };
    let standard_errors: Vec<f64> = (0..k).map(|i| (sigma2 * inv[i][i]).max(0.0).sqrt()).collect();
    let p_values = if df > 0 {
        let t_dist = StudentsT::new(0.0, 1.0, df as f64).unwrap();
        coefficients
            .iter()
            .zip(&standard_errors)
            .map(|(b, se)| {
                if *se == 0.0 {
                    if *b == 0.0 { 1.0 } else { 0.0 }
                } else {
                    2.0 * (1.0 - t_dist.cdf((b / se).abs()))
                }
            })
            .collect()
    } else {
        vec![f64::NAN; k]
    };

    let weights: Vec<f64> = observations.iter().map(|o| o.weight).collect();
    let ys: Vec<f64> = observations.iter().map(|o| o.y).collect();
    let sd_y = weighted_sd(&ys, &weights);
    let standardized_slopes: Vec<f64> = (1..k)
        .map(|j| {
            let xs: Vec<f64> = observations.iter().map(|o| o.x[j - 1]).collect();
            if sd_y == 0.0 {
                0.0
            } else {
                coefficients[j] * weighted_sd(&xs, &weights) / sd_y
            }
        })
        .collect();

    let predictors: Vec<Vec<f64>> =
        (0..p).map(|j| observations.iter().map(|o| o.x[j]).collect()).collect();
    let (mean_vif, collinear) = mean_vif(&predictors, &weights);

    Ok(FitResult {
        coefficients,
        standard_errors,
        standardized_slopes,
        p_values,
        r_squared,
        mean_vif,
        collinear,
        df,
        n,
    })
}

/// Mean variance inflation factor. One predictor is 1 by convention; for two
/// predictors both VIFs are 1/(1 - r_w^2) with r_w the weighted correlation.
/// Perfect collinearity reports +inf with the flag set.
pub fn mean_vif(predictors: &[Vec<f64>], weights: &[f64]) -> (f64, bool) {
    if predictors.len() < 2 {
        return (1.0, false);
    }
    let r = weighted_correlation(&predictors[0], &predictors[1], weights);
    let denom = 1.0 - r * r;
    if !r.is_finite() || denom <= 0.0 {
        (f64::INFINITY, true)
    } else {
        (1.0 / denom, false)
    }
}

pub const VIF_CUTOFF: f64 = 5.0;

/// Keeps only models whose mean VIF is under the cutoff.
pub fn screening_report(models: Vec<(String, FitResult)>, vif_cutoff: f64) -> Vec<(String, FitResult)> {
    models.into_iter().filter(|(_, m)| m.mean_vif < vif_cutoff).collect()
}
