//! Two-sample statistical machinery: pooled two-proportion z-test, empirical
//! CDFs, the two-sample Kolmogorov-Smirnov test with asymptotic p-value, and
//! the significance filters used for class-pair comparison.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::derive::AnnotatedContract;
use crate::error::Error;
use crate::vars::{DummyVar, NumericVar};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample for {0}")]
    EmptySample(&'static str),
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("success count exceeds sample size")]
    BadCounts,
    #[error("sample contains NaN")]
    NanSample,
}

impl From<StatsError> for Error {
    fn from(e: StatsError) -> Self {
        Error::Data(e.to_string())
    }
}

/// Two-sided p-value from a standard-normal statistic.
fn normal_two_sided_p(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * normal.cdf(-z.abs())).clamp(0.0, 1.0)
}

/// Pooled two-proportion z-test ("B-Test"). Degenerate pooled proportions
/// (0 or 1) give z = 0, p = 1.
pub fn two_proportion_z_test(k_a: u64, n_a: u64, k_b: u64, n_b: u64) -> Result<(f64, f64), StatsError> {
    if n_a == 0 || n_b == 0 {
        return Err(StatsError::ZeroSampleSize);
    }
    if k_a > n_a || k_b > n_b {
        return Err(StatsError::BadCounts);
    }
    Ok(z_from_fractions(
        k_a as f64 / n_a as f64,
        n_a as f64,
        k_b as f64 / n_b as f64,
        n_b as f64,
    ))
}

/// Same test parameterized by the observed fractions, used when reproducing
/// published tables that report fractions rather than counts.
pub fn two_proportion_z_from_fractions(f_a: f64, n_a: u64, f_b: f64, n_b: u64) -> Result<(f64, f64), StatsError> {
    if n_a == 0 || n_b == 0 {
        return Err(StatsError::ZeroSampleSize);
    }
    Ok(z_from_fractions(f_a, n_a as f64, f_b, n_b as f64))
}

fn z_from_fractions(f_a: f64, n_a: f64, f_b: f64, n_b: f64) -> (f64, f64) {
    let pooled = (f_a * n_a + f_b * n_b) / (n_a + n_b);
    if pooled <= 0.0 || pooled >= 1.0 {
        return (0.0, 1.0);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b)).sqrt();
    let z = (f_a - f_b) / se;
    (z, normal_two_sided_p(z))
}

/// Result of the dummy-variable proportion test for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DummyTestResult {
    pub variable: String,
    pub f_a: f64,
    pub f_b: f64,
    pub n_a: u64,
    pub n_b: u64,
    pub z: f64,
    pub p_value: f64,
    pub significant: bool,
}

pub const P_CUTOFF: f64 = 0.05;
pub const FRACTION_DIFF_CUTOFF: f64 = 0.1;
pub const KS_D_CUTOFF: f64 = 0.1;

/// Runs the proportion test with the significance filter
/// `p <= 0.05 && |f_a - f_b| >= 0.1`.
pub fn dummy_test(variable: &str, k_a: u64, n_a: u64, k_b: u64, n_b: u64) -> Result<DummyTestResult, StatsError> {
    let (z, p_value) = two_proportion_z_test(k_a, n_a, k_b, n_b)?;
    let f_a = k_a as f64 / n_a as f64;
    let f_b = k_b as f64 / n_b as f64;
    Ok(DummyTestResult {
        variable: variable.to_string(),
        f_a,
        f_b,
        n_a,
        n_b,
        z,
        p_value,
        significant: p_value <= P_CUTOFF && (f_a - f_b).abs() >= FRACTION_DIFF_CUTOFF,
    })
}

/// Empirical CDF: right-continuous step function, `F(x) = #{xi <= x} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    xs: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(sample: &[f64]) -> Result<Self, StatsError> {
        if sample.is_empty() {
            return Err(StatsError::EmptySample("ecdf"));
        }
        if sample.iter().any(|x| x.is_nan()) {
            return Err(StatsError::NanSample);
        }
        let mut xs = sample.to_vec();
        xs.sort_unstable_by(f64::total_cmp);
        Ok(EmpiricalCdf { xs })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let count = self.xs.partition_point(|&xi| xi <= x);
        count as f64 / self.xs.len() as f64
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// The sorted sample points.
    pub fn points(&self) -> &[f64] {
        &self.xs
    }
}

/// Result of the KS test for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct KsTestResult {
    pub variable: String,
    pub d: f64,
    pub p_value: f64,
    pub n_a: u64,
    pub n_b: u64,
    pub significant: bool,
}

/// Two-sample KS statistic and asymptotic p-value. `D` is the maximum of
/// `|F_x - F_y|` over the pooled sample points, which is exact (ties
/// included). Symmetric in its arguments.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    let fx = EmpiricalCdf::new(x)?;
    let fy = EmpiricalCdf::new(y)?;
    let mut d: f64 = 0.0;
    for &p in fx.points().iter().chain(fy.points()) {
        d = d.max((fx.eval(p) - fy.eval(p)).abs());
    }
    let p = asymptotic_ks_pvalue(d, x.len(), y.len());
    Ok((d, p))
}

/// Asymptotic Kolmogorov p-value: `Q(lambda) = 2 sum_k (-1)^{k-1}
/// exp(-2 k^2 lambda^2)` with `lambda = d sqrt(nm/(n+m))`, truncated once a
/// term drops below 1e-12, clamped to [0, 1]. `Q(0) = 1`.
pub fn asymptotic_ks_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let n = n as f64;
    let m = m as f64;
    let lambda = d * (n * m / (n + m)).sqrt();
    kolmogorov_q(lambda)
}

/// The Kolmogorov survival function `Q(lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=1000 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test with the significance filter `D >= 0.1 && p <= 0.05`.
pub fn ks_test(variable: &str, x: &[f64], y: &[f64]) -> Result<KsTestResult, StatsError> {
    let (d, p_value) = ks_two_sample(x, y)?;
    Ok(KsTestResult {
        variable: variable.to_string(),
        d,
        p_value,
        n_a: x.len() as u64,
        n_b: y.len() as u64,
        significant: d >= KS_D_CUTOFF && p_value <= P_CUTOFF,
    })
}

/// One variable's comparison outcome between two classes.
#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonFinding {
    Dummy(DummyTestResult),
    Numeric(KsTestResult),
}

impl ComparisonFinding {
    pub fn variable(&self) -> &str {
        match self {
            ComparisonFinding::Dummy(r) => &r.variable,
            ComparisonFinding::Numeric(r) => &r.variable,
        }
    }

    /// |f_a - f_b| for dummies, D for numerics; findings are reported in
    /// descending order of this.
    pub fn effect_size(&self) -> f64 {
        match self {
            ComparisonFinding::Dummy(r) => (r.f_a - r.f_b).abs(),
            ComparisonFinding::Numeric(r) => r.d,
        }
    }

    pub fn significant(&self) -> bool {
        match self {
            ComparisonFinding::Dummy(r) => r.significant,
            ComparisonFinding::Numeric(r) => r.significant,
        }
    }
}

/// Compares two classes variable by variable: proportion tests for the dummy
/// variables, KS for the numeric ones. Findings come back sorted by effect
/// size descending.
pub fn class_pair_comparison(
    contracts_a: &[&AnnotatedContract],
    contracts_b: &[&AnnotatedContract],
    dummy_vars: &[DummyVar],
    numeric_vars: &[NumericVar],
) -> Result<Vec<ComparisonFinding>, StatsError> {
    if contracts_a.is_empty() {
        return Err(StatsError::EmptySample("class A"));
    }
    if contracts_b.is_empty() {
        return Err(StatsError::EmptySample("class B"));
    }
    let n_a = contracts_a.len() as u64;
    let n_b = contracts_b.len() as u64;

    let mut findings = Vec::with_capacity(dummy_vars.len() + numeric_vars.len());
    for var in dummy_vars {
        let k_a = contracts_a.iter().filter(|c| var.is_set(&c.contract)).count() as u64;
        let k_b = contracts_b.iter().filter(|c| var.is_set(&c.contract)).count() as u64;
        findings.push(ComparisonFinding::Dummy(dummy_test(var.name(), k_a, n_a, k_b, n_b)?));
    }

    let numeric = |var: &NumericVar| -> Result<ComparisonFinding, StatsError> {
        let xs: Vec<f64> = contracts_a.iter().map(|c| var.value(c)).collect();
        let ys: Vec<f64> = contracts_b.iter().map(|c| var.value(c)).collect();
        Ok(ComparisonFinding::Numeric(ks_test(var.name(), &xs, &ys)?))
    };
    #[cfg(feature = "parallel")]
    let numeric_findings: Result<Vec<_>, _> = numeric_vars.par_iter().map(numeric).collect();
    #[cfg(not(feature = "parallel"))]
    let numeric_findings: Result<Vec<_>, _> = numeric_vars.iter().map(numeric).collect();
    findings.extend(numeric_findings?);

    findings.sort_by(|a, b| b.effect_size().total_cmp(&a.effect_size()));
    Ok(findings)
}
