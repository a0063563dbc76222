//! Per-(buyer, supplier, year) relation aggregates, per-(buyer, year) maxima,
//! and the four risk factors RAD, Fav, CPW, SPW.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classify::ClassLabel;
use crate::error::{Error, Result};
use crate::ingest::{CuratedContract, ProcType};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Compensated (Kahan) accumulator. Keeps spending conservation within 1e-6
/// relative on million-row corpora.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Aggregates for one buyer-supplier-year relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationStats {
    pub buyer_id: String,
    pub supplier_id: String,
    pub year: i32,
    /// Total contracts in the relation.
    pub t_cont: u64,
    /// Single-bidder (PT.AD) contracts.
    pub t_ad: u64,
    /// Total spending, USD PPP.
    pub t_spending: f64,
    /// Distinct beginning weeks with at least one contract.
    pub active_weeks: u64,
    pub rad: f64,
    pub cpw: f64,
    pub spw: f64,
    /// Pending until buyer maxima are known.
    pub fav: Option<f64>,
}

/// Per-(buyer, year) maxima over the buyer's suppliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerStats {
    pub buyer_id: String,
    pub year: i32,
    pub t_cont_max: u64,
    pub t_spending_max: f64,
}

/// Red-flag thresholds for the risk factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskThresholds {
    pub rad_min: f64,
    pub fav_min: f64,
    pub cpw_min: f64,
    pub spw_min: f64,
}

impl Default for RiskThresholds {
    fn default() -> Self {
        RiskThresholds { rad_min: 0.5, fav_min: 0.9, cpw_min: 5.0, spw_min: 10_000.0 }
    }
}

impl RiskThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.rad_min > 0.0 && self.rad_min <= 1.0) {
            return Err(Error::config(format!("rad threshold must be in (0,1], got {}", self.rad_min)));
        }
        if !(self.fav_min > 0.0 && self.fav_min <= 0.99) {
            return Err(Error::config(format!("fav threshold must be in (0,0.99], got {}", self.fav_min)));
        }
        if !(self.cpw_min > 0.0 && self.spw_min > 0.0) {
            return Err(Error::config("cpw/spw thresholds must be positive".to_string()));
        }
        Ok(())
    }
}

/// A classified contract annotated with its relation's four risk factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedContract {
    pub contract: CuratedContract,
    pub class: ClassLabel,
    pub rad: f64,
    pub fav: f64,
    pub cpw: f64,
    pub spw: f64,
}

fn relation_from_group(buyer_id: &str, supplier_id: &str, year: i32, group: &[&CuratedContract]) -> RelationStats {
    let t_cont = group.len() as u64;
    let t_ad = group.iter().filter(|c| c.pt == ProcType::Ad).count() as u64;
    let mut spending = KahanSum::default();
    let mut weeks = [false; 54];
    for c in group {
        spending.add(c.spending_usd_ppp);
        weeks[c.beginning_week as usize] = true;
    }
    let active_weeks = weeks.iter().filter(|w| **w).count() as u64;
    let t_spending = spending.value();
    RelationStats {
        buyer_id: buyer_id.to_string(),
        supplier_id: supplier_id.to_string(),
        year,
        t_cont,
        t_ad,
        t_spending,
        active_weeks,
        rad: t_ad as f64 / t_cont as f64,
        cpw: t_cont as f64 / active_weeks as f64,
        spw: t_spending / active_weeks as f64,
        fav: None,
    }
}

/// Keyed reduction over (buyer, supplier, year). The result is sorted by key,
/// and per-group accumulation follows input order, so output is deterministic
/// regardless of the parallel split.
pub fn aggregate_relations(contracts: &[CuratedContract]) -> Vec<RelationStats> {
    let mut groups: HashMap<(&str, &str, i32), Vec<&CuratedContract>> = HashMap::new();
    for c in contracts {
        groups.entry((c.buyer_id.as_str(), c.supplier_id.as_str(), c.year)).or_default().push(c);
    }
    let mut keyed: Vec<((&str, &str, i32), Vec<&CuratedContract>)> = groups.into_iter().collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));

    #[cfg(feature = "parallel")]
    {
        keyed
            .par_iter()
            .map(|((buyer, supplier, year), group)| relation_from_group(buyer, supplier, *year, group))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        keyed
            .iter()
            .map(|((buyer, supplier, year), group)| relation_from_group(buyer, supplier, *year, group))
            .collect()
    }
}

/// Sequential reference path, kept callable for benchmarking against the
/// parallel default.
pub fn aggregate_relations_seq(contracts: &[CuratedContract]) -> Vec<RelationStats> {
    let mut groups: HashMap<(&str, &str, i32), Vec<&CuratedContract>> = HashMap::new();
    for c in contracts {
        groups.entry((c.buyer_id.as_str(), c.supplier_id.as_str(), c.year)).or_default().push(c);
    }
    let mut keyed: Vec<_> = groups.into_iter().collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed
        .iter()
        .map(|((buyer, supplier, year), group)| relation_from_group(buyer, supplier, *year, group))
        .collect()
}

/// Maxima over suppliers within each (buyer, year). Output sorted by key.
pub fn buyer_maxima(relations: &[RelationStats]) -> Vec<BuyerStats> {
    let mut maxima: HashMap<(&str, i32), (u64, f64)> = HashMap::new();
    for r in relations {
        let entry = maxima.entry((r.buyer_id.as_str(), r.year)).or_insert((0, 0.0));
        entry.0 = entry.0.max(r.t_cont);
        entry.1 = entry.1.max(r.t_spending);
    }
    let mut out: Vec<BuyerStats> = maxima
        .into_iter()
        .map(|((buyer_id, year), (t_cont_max, t_spending_max))| BuyerStats {
            buyer_id: buyer_id.to_string(),
            year,
            t_cont_max,
            t_spending_max,
        })
        .collect();
    out.sort_by(|a, b| (a.buyer_id.as_str(), a.year).cmp(&(b.buyer_id.as_str(), b.year)));
    out
}

/// Favoritism score for a relation given its buyer's maxima. The attainable
/// maximum is 0.99 (the printed coefficients 0.33 + 0.66); a zero spending
/// maximum contributes 0 rather than dividing by zero.
pub fn favoritism(rel: &RelationStats, buyer: &BuyerStats) -> f64 {
    debug_assert_eq!((rel.buyer_id.as_str(), rel.year), (buyer.buyer_id.as_str(), buyer.year));
    let cont_term = 0.33 * rel.t_cont as f64 / buyer.t_cont_max as f64;
    let spending_term = if buyer.t_spending_max > 0.0 {
        0.66 * rel.t_spending / buyer.t_spending_max
    } else {
        0.0
    };
    cont_term + spending_term
}

/// Fills `fav` on every relation from the buyer maxima table.
pub fn apply_favoritism(relations: &mut [RelationStats], buyers: &[BuyerStats]) -> Result<()> {
    let index: HashMap<(&str, i32), &BuyerStats> =
        buyers.iter().map(|b| ((b.buyer_id.as_str(), b.year), b)).collect();
    for rel in relations.iter_mut() {
        let buyer = index
            .get(&(rel.buyer_id.as_str(), rel.year))
            .ok_or_else(|| Error::data(format!("no buyer maxima for ({}, {})", rel.buyer_id, rel.year)))?;
        rel.fav = Some(favoritism(rel, buyer));
    }
    Ok(())
}

/// Attaches each contract's relation factors. Contracts sharing a relation
/// share values. A missing relation key is an aggregation bug, not user error.
pub fn annotate_contracts(
    contracts: &[CuratedContract],
    classes: &[ClassLabel],
    relations: &[RelationStats],
) -> Result<Vec<AnnotatedContract>> {
    assert_eq!(contracts.len(), classes.len());
    let index: HashMap<(&str, &str, i32), &RelationStats> = relations
        .iter()
        .map(|r| ((r.buyer_id.as_str(), r.supplier_id.as_str(), r.year), r))
        .collect();
    contracts
        .iter()
        .zip(classes)
        .map(|(c, class)| {
            let rel = index
                .get(&(c.buyer_id.as_str(), c.supplier_id.as_str(), c.year))
                .ok_or_else(|| {
                    Error::data(format!(
                        "internal: no relation for ({}, {}, {})",
                        c.buyer_id, c.supplier_id, c.year
                    ))
                })?;
            let fav = rel
                .fav
                .ok_or_else(|| Error::data("internal: favoritism not applied before annotation".to_string()))?;
            Ok(AnnotatedContract {
                contract: c.clone(),
                class: *class,
                rad: rel.rad,
                fav,
                cpw: rel.cpw,
                spw: rel.spw,
            })
        })
        .collect()
}

/// Runs the full derivation: relations, buyer maxima, favoritism, annotation.
pub fn derive_all(
    contracts: &[CuratedContract],
    classes: &[ClassLabel],
) -> Result<(Vec<RelationStats>, Vec<BuyerStats>, Vec<AnnotatedContract>)> {
    let mut relations = aggregate_relations(contracts);
    let buyers = buyer_maxima(&relations);
    apply_favoritism(&mut relations, &buyers)?;
    let annotated = annotate_contracts(contracts, classes, &relations)?;
    Ok((relations, buyers, annotated))
}

pub fn write_relations_csv(w: impl Write, relations: &[RelationStats], header_lines: &[String]) -> Result<()> {
    let mut w = w;
    let io = |e: std::io::Error| Error::data(format!("write relations: {e}"));
    for line in header_lines {
        writeln!(w, "# {line}").map_err(io)?;
    }
    writeln!(w, "buyer_id,supplier_id,year,t_cont,t_ad,t_spending,active_weeks,rad,fav,cpw,spw").map_err(io)?;
    for r in relations {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.buyer_id,
            r.supplier_id,
            r.year,
            r.t_cont,
            r.t_ad,
            r.t_spending,
            r.active_weeks,
            r.rad,
            r.fav.unwrap_or(f64::NAN),
            r.cpw,
            r.spw
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn write_buyers_csv(w: impl Write, buyers: &[BuyerStats], header_lines: &[String]) -> Result<()> {
    let mut w = w;
    let io = |e: std::io::Error| Error::data(format!("write buyers: {e}"));
    for line in header_lines {
        writeln!(w, "# {line}").map_err(io)?;
    }
    writeln!(w, "buyer_id,year,t_cont_max,t_spending_max").map_err(io)?;
    for b in buyers {
        writeln!(w, "{},{},{},{}", b.buyer_id, b.year, b.t_cont_max, b.t_spending_max).map_err(io)?;
    }
    Ok(())
}

/// Contracts re-emitted with class and the four appended factor columns.
pub fn write_annotated_csv(w: impl Write, annotated: &[AnnotatedContract], header_lines: &[String]) -> Result<()> {
    let mut w = w;
    let io = |e: std::io::Error| Error::data(format!("write annotated: {e}"));
    for line in header_lines {
        writeln!(w, "# {line}").map_err(io)?;
    }
    writeln!(
        w,
        "{},class,rad,fav,cpw,spw",
        crate::ingest::CURATED_COLUMNS.join(",")
    )
    .map_err(io)?;
    for a in annotated {
        let c = &a.contract;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.buyer_id,
            c.supplier_id,
            c.go.token(),
            c.pc.token(),
            c.ct.token(),
            c.pt.token(),
            c.size.token(),
            c.year,
            c.beginning_week,
            c.eb_weeks,
            c.spending_usd_ppp,
            a.class,
            a.rad,
            a.fav,
            a.cpw,
            a.spw
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Reads back an annotated file (as written by [`write_annotated_csv`]).
pub fn read_annotated_csv(reader: impl std::io::Read) -> Result<Vec<AnnotatedContract>> {
    use crate::ingest::{ContractType, GovOrder, ProcChar, SupplierSize};
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b',')
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("annotated file record {}: {e}", i + 1)))?;
        let get = |idx: usize| record.get(idx).unwrap_or("").trim();
        let parse_err = |field: &str| Error::data(format!("annotated file record {}: bad {field}", i + 1));
        let contract = CuratedContract {
            buyer_id: get(0).to_string(),
            supplier_id: get(1).to_string(),
            go: GovOrder::from_token(get(2)).ok_or_else(|| parse_err("go"))?,
            pc: ProcChar::from_token(get(3)).ok_or_else(|| parse_err("pc"))?,
            ct: ContractType::from_token(get(4)).ok_or_else(|| parse_err("ct"))?,
            pt: ProcType::from_token(get(5)).ok_or_else(|| parse_err("pt"))?,
            size: SupplierSize::from_token(get(6)).ok_or_else(|| parse_err("size"))?,
            year: get(7).parse().map_err(|_| parse_err("year"))?,
            beginning_week: get(8).parse().map_err(|_| parse_err("beginning_week"))?,
            eb_weeks: get(9).parse().map_err(|_| parse_err("eb_weeks"))?,
            spending_usd_ppp: get(10).parse().map_err(|_| parse_err("spending_usd_ppp"))?,
        };
        out.push(AnnotatedContract {
            contract,
            class: ClassLabel::from_name(get(11)).ok_or_else(|| parse_err("class"))?,
            rad: get(12).parse().map_err(|_| parse_err("rad"))?,
            fav: get(13).parse().map_err(|_| parse_err("fav"))?,
            cpw: get(14).parse().map_err(|_| parse_err("cpw"))?,
            spw: get(15).parse().map_err(|_| parse_err("spw"))?,
        });
    }
    Ok(out)
}
