//! Seeded synthetic data generation: a raw contract corpus for throughput
//! and pipeline testing, and planted yearly series for exercising the
//! period-comparison verdicts.

use std::collections::BTreeMap;
use std::io::Write;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};

use crate::classify::PeriodConfig;
use crate::error::{Error, Result};

/// Shape of a generated raw corpus.
#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub rows: usize,
    pub years: (i32, i32),
    pub buyers: usize,
    pub suppliers: usize,
    /// Leading supplier indices assigned to the EFOS blocklist.
    pub efos_suppliers: usize,
    /// Next supplier indices assigned to the PCS blocklist.
    pub pcs_suppliers: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            rows: 10_000,
            years: (2013, 2020),
            buyers: 200,
            suppliers: 2_000,
            efos_suppliers: 40,
            pcs_suppliers: 200,
            seed: 7,
        }
    }
}

const GO_TOKENS: [&str; 3] = ["APF", "GE", "GM"];
const PC_TOKENS: [&str; 3] = ["N", "I", "ITLC"];
const CT_TOKENS: [&str; 5] = ["OP", "S", "ADQ", "AR", "SLAOP"];
const PT_TOKENS: [&str; 3] = ["AD", "LP", "I3P"];
const SIZE_TOKENS: [&str; 5] = ["MIC", "PEQ", "MED", "NOM", "NA"];

pub fn supplier_name(i: usize) -> String {
    format!("SUPPLIER {i:05}")
}

pub fn buyer_name(i: usize) -> String {
    format!("BUYER {i:04}")
}

/// Writes a raw contracts CSV with the default column schema. Deterministic
/// for a given config.
pub fn write_corpus_csv(mut w: impl Write, cfg: &CorpusConfig) -> Result<()> {
    let io_err = |e: std::io::Error| Error::data(format!("write corpus: {e}"));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spending = LogNormal::new(10.0, 1.5).unwrap();
    writeln!(w, "buyer,supplier,go,pc,ct,pt,size,year,beginning_week,eb_weeks,spending,currency").map_err(io_err)?;
    let mut line = String::new();
    for _ in 0..cfg.rows {
        let buyer = rng.random_range(0..cfg.buyers);
        // skew contracts toward low supplier indices so the blocklisted
        // suppliers accumulate dense relations
        let supplier = (rng.random_range(0..cfg.suppliers) * rng.random_range(1..4) / 3).min(cfg.suppliers - 1);
        let year = rng.random_range(cfg.years.0..=cfg.years.1);
        let week = rng.random_range(1u32..=52);
        let eb_weeks = rng.random_range(0u32..26);
        let amount: f64 = spending.sample(&mut rng);
        line.clear();
        use std::fmt::Write as _;
        write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{:.2},MXN",
            buyer_name(buyer),
            supplier_name(supplier),
            GO_TOKENS[rng.random_range(0..3)],
            PC_TOKENS[rng.random_range(0..3)],
            CT_TOKENS[rng.random_range(0..5)],
            PT_TOKENS[rng.random_range(0..3)],
            SIZE_TOKENS[rng.random_range(0..5)],
            year,
            week,
            eb_weeks,
            amount
        )
        .unwrap();
        writeln!(w, "{line}").map_err(io_err)?;
    }
    Ok(())
}

/// The EFOS and PCS blocklists matching a corpus config.
pub fn blocklists(cfg: &CorpusConfig) -> (Vec<String>, Vec<String>) {
    let efos = (0..cfg.efos_suppliers).map(supplier_name).collect();
    let pcs = (cfg.efos_suppliers..cfg.efos_suppliers + cfg.pcs_suppliers).map(supplier_name).collect();
    (efos, pcs)
}

/// A flat PPP conversion table covering the corpus years.
pub fn write_ppp_csv(mut w: impl Write, cfg: &CorpusConfig) -> Result<()> {
    let io_err = |e: std::io::Error| Error::data(format!("write ppp: {e}"));
    writeln!(w, "year,rate").map_err(io_err)?;
    for year in cfg.years.0..=cfg.years.1 {
        writeln!(w, "{year},{}", 8.0 + 0.25 * (year - cfg.years.0) as f64).map_err(io_err)?;
    }
    Ok(())
}

/// Yearly series with known period-comparison answers: one dummy and one
/// numeric variable planted to be Different in the second period, plus null
/// variables that should read Similar.
#[derive(Debug, Clone)]
pub struct PlantedSeries {
    pub planted_dummy: BTreeMap<i32, f64>,
    pub null_dummies: Vec<BTreeMap<i32, f64>>,
    pub planted_numeric: BTreeMap<i32, Vec<f64>>,
    pub null_numerics: Vec<BTreeMap<i32, Vec<f64>>>,
}

/// Generates the planted series. First-period years carry a small
/// between-year location jitter; null second-period values sit at the center
/// of the first-period spread, planted ones far outside it.
pub fn planted_series(seed: u64, cfg: &PeriodConfig, null_count: usize) -> PlantedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dummy_series = |rng: &mut ChaCha8Rng, planted: bool| -> BTreeMap<i32, f64> {
        let base = rng.random_range(0.25..0.4);
        let mut out = BTreeMap::new();
        let mut first = Vec::new();
        for year in cfg.first_years() {
            let f = base + rng.random_range(-0.02..0.02);
            first.push(f);
            out.insert(year, f);
        }
        let center = first.iter().sum::<f64>() / first.len() as f64;
        for year in cfg.second_years() {
            let f = if planted { 0.95 } else { center + rng.random_range(-0.002..0.002) };
            out.insert(year, f);
        }
        out
    };

    let numeric_series = |rng: &mut ChaCha8Rng, planted: bool| -> BTreeMap<i32, Vec<f64>> {
        let n = 400;
        let base = rng.random_range(-1.0..1.0);
        let mut out = BTreeMap::new();
        let mut locations = Vec::new();
        for year in cfg.first_years() {
            let loc = base + rng.random_range(-0.3..0.3);
            locations.push(loc);
            let dist = Normal::new(loc, 1.0).unwrap();
            out.insert(year, (0..n).map(|_| dist.sample(rng)).collect());
        }
        let center = locations.iter().sum::<f64>() / locations.len() as f64;
        for year in cfg.second_years() {
            let loc = if planted { center + 8.0 } else { center };
            let dist = Normal::new(loc, 1.0).unwrap();
            out.insert(year, (0..n).map(|_| dist.sample(rng)).collect());
        }
        out
    };

    PlantedSeries {
        planted_dummy: dummy_series(&mut rng, true),
        null_dummies: (0..null_count).map(|_| dummy_series(&mut rng, false)).collect(),
        planted_numeric: numeric_series(&mut rng, true),
        null_numerics: (0..null_count).map(|_| numeric_series(&mut rng, false)).collect(),
    }
}
