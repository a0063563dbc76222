//! Risk-factor evaluation: recall (how well a factor describes a corrupt
//! class), precision against the random baseline (how well it identifies
//! one), and precision-recall sweeps over threshold grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::classify::ClassLabel;
use crate::derive::AnnotatedContract;
use crate::error::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RiskEvalError {
    #[error("class {0} has no contracts")]
    EmptyClass(&'static str),
}

impl From<RiskEvalError> for Error {
    fn from(e: RiskEvalError) -> Self {
        Error::Data(e.to_string())
    }
}

/// A closed-threshold predicate over one risk factor, or the joint
/// contract-splitting predicate which requires both cpw >= c and
/// spw >= 2c * 1000 USD PPP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FactorPredicate {
    Rad(f64),
    Fav(f64),
    Cpw(f64),
    Spw(f64),
    CpwSpwJoint(f64),
}

impl FactorPredicate {
    pub fn matches(self, a: &AnnotatedContract) -> bool {
        match self {
            FactorPredicate::Rad(t) => a.rad >= t,
            FactorPredicate::Fav(t) => a.fav >= t,
            FactorPredicate::Cpw(t) => a.cpw >= t,
            FactorPredicate::Spw(t) => a.spw >= t,
            FactorPredicate::CpwSpwJoint(c) => a.cpw >= c && a.spw >= 2.0 * c * 1000.0,
        }
    }

    pub fn factor_name(self) -> &'static str {
        match self {
            FactorPredicate::Rad(_) => "RAD",
            FactorPredicate::Fav(_) => "Fav",
            FactorPredicate::Cpw(_) => "CPW",
            FactorPredicate::Spw(_) => "SPW",
            FactorPredicate::CpwSpwJoint(_) => "CPW+SPW",
        }
    }

    pub fn threshold(self) -> f64 {
        match self {
            FactorPredicate::Rad(t)
            | FactorPredicate::Fav(t)
            | FactorPredicate::Cpw(t)
            | FactorPredicate::Spw(t)
            | FactorPredicate::CpwSpwJoint(t) => t,
        }
    }
}

/// One point of a precision-recall sweep. `precision` is absent when nothing
/// was flagged at this threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: Option<f64>,
    pub recall: f64,
    pub baseline: f64,
    pub flagged_count: u64,
    pub class_count: u64,
    pub hit_count: u64,
}

fn count_sets(contracts: &[AnnotatedContract], class: ClassLabel, pred: FactorPredicate) -> (u64, u64, u64) {
    let mut flagged = 0;
    let mut in_class = 0;
    let mut hits = 0;
    for a in contracts {
        let f = pred.matches(a);
        let c = a.class == class;
        flagged += f as u64;
        in_class += c as u64;
        hits += (f && c) as u64;
    }
    (flagged, in_class, hits)
}

/// Experiment 1: P(pred | class), the fraction of class contracts whose
/// factor exceeds the threshold. A factor describes the class when this
/// exceeds 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub recall: f64,
    pub class_count: u64,
    pub hit_count: u64,
    pub describes_class: bool,
}

pub fn recall_given_class(
    contracts: &[AnnotatedContract],
    class: ClassLabel,
    pred: FactorPredicate,
) -> Result<RecallResult, RiskEvalError> {
    let (_, in_class, hits) = count_sets(contracts, class, pred);
    if in_class == 0 {
        return Err(RiskEvalError::EmptyClass(class.name()));
    }
    let recall = hits as f64 / in_class as f64;
    Ok(RecallResult { recall, class_count: in_class, hit_count: hits, describes_class: recall > 0.5 })
}

/// Experiment 2: P(class | pred) compared against the random baseline
/// P(class). The factor identifies the class when precision beats the
/// baseline. Precision is absent when nothing is flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionResult {
    pub precision: Option<f64>,
    pub baseline: f64,
    pub flagged_count: u64,
    pub hit_count: u64,
    pub identifies_class: bool,
}

pub fn precision_given_flag(
    contracts: &[AnnotatedContract],
    class: ClassLabel,
    pred: FactorPredicate,
) -> Result<PrecisionResult, RiskEvalError> {
    if contracts.is_empty() {
        return Err(RiskEvalError::EmptyClass(class.name()));
    }
    let (flagged, in_class, hits) = count_sets(contracts, class, pred);
    let baseline = in_class as f64 / contracts.len() as f64;
    let precision = (flagged > 0).then(|| hits as f64 / flagged as f64);
    let identifies_class = precision.is_some_and(|p| p > baseline);
    Ok(PrecisionResult { precision, baseline, flagged_count: flagged, hit_count: hits, identifies_class })
}

fn pr_point(contracts: &[AnnotatedContract], class: ClassLabel, pred: FactorPredicate) -> PrPoint {
    let (flagged, in_class, hits) = count_sets(contracts, class, pred);
    PrPoint {
        threshold: pred.threshold(),
        precision: (flagged > 0).then(|| hits as f64 / flagged as f64),
        recall: if in_class > 0 { hits as f64 / in_class as f64 } else { 0.0 },
        baseline: if contracts.is_empty() { 0.0 } else { in_class as f64 / contracts.len() as f64 },
        flagged_count: flagged,
        class_count: in_class,
        hit_count: hits,
    }
}

/// Precision-recall sweep of one factor over an ascending threshold grid.
pub fn pr_curve(
    contracts: &[AnnotatedContract],
    class: ClassLabel,
    make_pred: impl Fn(f64) -> FactorPredicate + Sync,
    thresholds: &[f64],
) -> Vec<PrPoint> {
    #[cfg(feature = "parallel")]
    {
        thresholds.par_iter().map(|&t| pr_point(contracts, class, make_pred(t))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        thresholds.iter().map(|&t| pr_point(contracts, class, make_pred(t))).collect()
    }
}

/// PR points of the joint contract-splitting predicate at each parameter c
/// (thresholds cpw >= c, spw >= 2c * 1000).
pub fn joint_cpw_spw_points(contracts: &[AnnotatedContract], class: ClassLabel, c_values: &[f64]) -> Vec<PrPoint> {
    pr_curve(contracts, class, FactorPredicate::CpwSpwJoint, c_values)
}
