//! Report tables and provenance headers. All numbers are formatted with a
//! fixed precision and '.' decimal separator at presentation time; the table
//! structs keep full precision.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::ClassLabel;
use crate::derive::AnnotatedContract;
use crate::error::{Error, Result};
use crate::period_compare::quantile_type7;
use crate::vars::{DummyVar, NumericVar};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Fixed-precision decimal formatting, locale independent.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    format!("{value:.decimals$}")
}

fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Builds the provenance lines written at the top of every report file:
/// input hashes, the config digest, and the toolkit version. Writers prefix
/// each line with `# `.
pub fn provenance_header(inputs: &[(&str, &Path)], config_digest: &str) -> Result<Vec<String>> {
    let mut out = vec![format!("procint v{TOOLKIT_VERSION}")];
    for (label, path) in inputs {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::config(format!("cannot read input {}: {e}", path.display())))?;
        let hash = Sha256::digest(&bytes);
        out.push(format!("input {label} sha256={}", hex(&hash)));
    }
    out.push(format!("config {config_digest}"));
    Ok(out)
}

/// Digest of the serialized run configuration, for the provenance header.
pub fn config_digest(config: &impl Serialize) -> String {
    let json = serde_json::to_string(config).unwrap_or_default();
    format!("sha256={}", hex(&Sha256::digest(json.as_bytes())))
}

/// Spending context per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearContext {
    pub year: i32,
    pub federal_budget: f64,
    pub total_spending: f64,
    pub total_contracts: u64,
    pub ts_fb_ratio: f64,
}

/// Per class per year share of contracts and spending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassYearContext {
    pub class: ClassLabel,
    pub year: i32,
    pub contracts: u64,
    pub spending: f64,
    pub pct_tc: f64,
    pub pct_ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTable {
    pub years: Vec<YearContext>,
    pub class_years: Vec<ClassYearContext>,
}

/// Yearly totals, the TS/FB ratio, and each class's share of contracts and
/// spending. Every corpus year must have a budget entry.
pub fn context_table(contracts: &[AnnotatedContract], budgets: &BTreeMap<i32, f64>) -> Result<ContextTable> {
    let mut totals: BTreeMap<i32, (u64, f64)> = BTreeMap::new();
    let mut by_class: BTreeMap<(i32, ClassLabel), (u64, f64)> = BTreeMap::new();
    for a in contracts {
        let t = totals.entry(a.contract.year).or_insert((0, 0.0));
        t.0 += 1;
        t.1 += a.contract.spending_usd_ppp;
        let c = by_class.entry((a.contract.year, a.class)).or_insert((0, 0.0));
        c.0 += 1;
        c.1 += a.contract.spending_usd_ppp;
    }
    let mut years = Vec::new();
    let mut class_years = Vec::new();
    for (&year, &(n, spending)) in &totals {
        let fb = *budgets
            .get(&year)
            .ok_or_else(|| Error::config(format!("no federal budget entry for year {year}")))?;
        years.push(YearContext {
            year,
            federal_budget: fb,
            total_spending: spending,
            total_contracts: n,
            ts_fb_ratio: spending / fb,
        });
        for class in ClassLabel::ALL {
            let &(cn, cs) = by_class.get(&(year, class)).unwrap_or(&(0, 0.0));
            class_years.push(ClassYearContext {
                class,
                year,
                contracts: cn,
                spending: cs,
                pct_tc: 100.0 * cn as f64 / n as f64,
                pct_ts: if spending > 0.0 { 100.0 * cs / spending } else { 0.0 },
            });
        }
    }
    Ok(ContextTable { years, class_years })
}

/// One row of the descriptive-statistics table: a fraction for dummies, and
/// mean, sd, quartiles for numerics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VariableSummary {
    Dummy { name: String, fraction: f64 },
    Numeric { name: String, mean: f64, sd: f64, q1: f64, median: f64, q3: f64 },
}

/// Per-variable descriptive statistics for one class. Quartiles use the same
/// interpolation convention as the period comparison.
pub fn descriptive_stats(contracts: &[&AnnotatedContract], class: ClassLabel) -> Result<Vec<VariableSummary>> {
    let members: Vec<&AnnotatedContract> = contracts.iter().copied().filter(|a| a.class == class).collect();
    if members.is_empty() {
        return Err(Error::data(format!("class {} has no contracts", class.name())));
    }
    let n = members.len() as f64;
    let mut out = Vec::new();
    for var in DummyVar::ALL {
        let k = members.iter().filter(|a| var.is_set(&a.contract)).count();
        out.push(VariableSummary::Dummy { name: var.name().to_string(), fraction: k as f64 / n });
    }
    for var in NumericVar::CONTRACT.into_iter().chain(NumericVar::FACTORS) {
        let mut values: Vec<f64> = members.iter().map(|a| var.value(a)).collect();
        values.sort_unstable_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        out.push(VariableSummary::Numeric {
            name: var.name().to_string(),
            mean,
            sd,
            q1: quantile_type7(&values, 0.25),
            median: quantile_type7(&values, 0.5),
            q3: quantile_type7(&values, 0.75),
        });
    }
    Ok(out)
}

/// Writes the context table as delimited text: a yearly block, then the per
/// class per year block. Monetary values keep 2 decimals.
pub fn write_context_table(mut w: impl Write, header_lines: &[String], table: &ContextTable) -> Result<()> {
    let io_err = |e: std::io::Error| Error::data(format!("write context table: {e}"));
    for line in header_lines {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "year,federal_budget,total_spending,total_contracts,ts_fb_ratio").map_err(io_err)?;
    for y in &table.years {
        writeln!(
            w,
            "{},{},{},{},{}",
            y.year,
            format_fixed(y.federal_budget, 2),
            format_fixed(y.total_spending, 2),
            y.total_contracts,
            format_fixed(y.ts_fb_ratio, 2)
        )
        .map_err(io_err)?;
    }
    writeln!(w, "class,year,contracts,spending,pct_tc,pct_ts").map_err(io_err)?;
    for c in &table.class_years {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.class,
            c.year,
            c.contracts,
            format_fixed(c.spending, 2),
            format_fixed(c.pct_tc, 2),
            format_fixed(c.pct_ts, 2)
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Writes a descriptive-statistics table for one class.
pub fn write_descriptive_stats(mut w: impl Write, header_lines: &[String], class: ClassLabel, rows: &[VariableSummary]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::data(format!("write descriptive stats: {e}"));
    for line in header_lines {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "class,variable,kind,fraction,mean,sd,q1,median,q3").map_err(io_err)?;
    for row in rows {
        match row {
            VariableSummary::Dummy { name, fraction } => {
                writeln!(w, "{class},{name},dummy,{},,,,,", format_fixed(*fraction, 4)).map_err(io_err)?;
            }
            VariableSummary::Numeric { name, mean, sd, q1, median, q3 } => {
                writeln!(
                    w,
                    "{class},{name},numeric,,{},{},{},{},{}",
                    format_fixed(*mean, 4),
                    format_fixed(*sd, 4),
                    format_fixed(*q1, 4),
                    format_fixed(*median, 4),
                    format_fixed(*q3, 4)
                )
                .map_err(io_err)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ContractType, CuratedContract, GovOrder, ProcChar, ProcType, SupplierSize};

    fn annotated(class: ClassLabel, year: i32, spending: f64, go: GovOrder) -> AnnotatedContract {
        AnnotatedContract {
            contract: CuratedContract {
                buyer_id: "B".into(),
                supplier_id: "S".into(),
                go,
                pc: ProcChar::N,
                ct: ContractType::Adq,
                pt: ProcType::Ad,
                size: SupplierSize::Mic,
                year,
                beginning_week: 1,
                eb_weeks: 0,
                spending_usd_ppp: spending,
            },
            class,
            rad: 1.0,
            fav: 0.5,
            cpw: 1.0,
            spw: spending,
        }
    }

    #[test]
    fn published_ratio_arithmetic() {
        // 2013 and 2019 columns of the yearly budget table
        assert_eq!(format_fixed(6.43e10 / 5.02e11, 2), "0.13");
        assert_eq!(format_fixed(3.03e10 / 6.28e11, 2), "0.05");
    }

    #[test]
    fn context_conservation() {
        let contracts = vec![
            annotated(ClassLabel::Efos, 2015, 100.0, GovOrder::Apf),
            annotated(ClassLabel::Nc, 2015, 300.0, GovOrder::Ge),
            annotated(ClassLabel::Nc, 2016, 50.0, GovOrder::Apf),
        ];
        let budgets = BTreeMap::from([(2015, 1000.0), (2016, 1000.0)]);
        let t = context_table(&contracts, &budgets).unwrap();
        assert_eq!(t.years[0].total_contracts, 2);
        assert!((t.years[0].ts_fb_ratio - 0.4).abs() < 1e-12);
        for y in &t.years {
            let rows: Vec<_> = t.class_years.iter().filter(|c| c.year == y.year).collect();
            assert_eq!(rows.iter().map(|c| c.contracts).sum::<u64>(), y.total_contracts);
            assert!((rows.iter().map(|c| c.pct_tc).sum::<f64>() - 100.0).abs() < 0.01);
            assert!((rows.iter().map(|c| c.pct_ts).sum::<f64>() - 100.0).abs() < 0.01);
        }
        // missing budget year is a config error
        let missing = BTreeMap::from([(2015, 1000.0)]);
        assert!(context_table(&contracts, &missing).is_err());
    }

    #[test]
    fn descriptive_shapes() {
        let contracts = vec![
            annotated(ClassLabel::Efos, 2015, 10.0, GovOrder::Apf),
            annotated(ClassLabel::Efos, 2016, 10.0, GovOrder::Apf),
            annotated(ClassLabel::Nc, 2015, 99.0, GovOrder::Ge),
        ];
        let refs: Vec<&AnnotatedContract> = contracts.iter().collect();
        let rows = descriptive_stats(&refs, ClassLabel::Efos).unwrap();
        let go_apf = rows
            .iter()
            .find_map(|r| match r {
                VariableSummary::Dummy { name, fraction } if name == "GO.APF" => Some(*fraction),
                _ => None,
            })
            .unwrap();
        assert_eq!(go_apf, 1.0);
        let spending = rows
            .iter()
            .find_map(|r| match r {
                VariableSummary::Numeric { name, sd, q1, q3, .. } if name == "Spending" => Some((*sd, *q1, *q3)),
                _ => None,
            })
            .unwrap();
        // constant numeric: sd 0 and q1 = q3
        assert_eq!(spending, (0.0, 10.0, 10.0));
        assert!(descriptive_stats(&refs, ClassLabel::Pcs).is_err());
    }

    #[test]
    fn header_has_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, b"a,b\n").unwrap();
        let header = provenance_header(&[("contracts", input.as_path())], "sha256=abc").unwrap();
        assert_eq!(header.len(), 3);
        assert!(header[1].starts_with("input contracts sha256="));
        assert_eq!(header[2], "config sha256=abc");
    }
}
