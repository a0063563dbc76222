//! Parsing and curation of raw contract registries.
//!
//! Raw delimited files are parsed into [`RawContractRow`]s, then curated into
//! [`CuratedContract`]s: names are normalized, categorical tokens mapped onto
//! their enumerated sets, and monetary amounts converted to USD PPP. Every
//! input line ends up either in the curated list or in a rejection record, so
//! `|input| = |curated| + |rejected|` holds for every run.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Government order: level of the buying agency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GovOrder {
    Apf,
    Ge,
    Gm,
}

/// Procedure character: legal framework of the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcChar {
    N,
    I,
    Itlc,
}

/// Contract type: services or commodities contracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContractType {
    Op,
    S,
    Adq,
    Ar,
    Slaop,
}

/// Procedure type: how the supplier won the contract. `Ad` is single-bidder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcType {
    Ad,
    Lp,
    I3p,
}

/// Supplier size class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupplierSize {
    Mic,
    Peq,
    Med,
    Nom,
    Na,
}

macro_rules! token_enum {
    ($ty:ty, $field:literal, [$(($variant:path, $token:literal)),+]) => {
        impl $ty {
            pub fn from_token(token: &str) -> Option<Self> {
                let t = token.trim().to_uppercase();
                match t.as_str() {
                    $($token => Some($variant),)+
                    _ => None,
                }
            }

            pub fn token(self) -> &'static str {
                match self {
                    $($variant => $token,)+
                }
            }

            pub const FIELD: &'static str = $field;
        }
    };
}

token_enum!(GovOrder, "go", [(GovOrder::Apf, "APF"), (GovOrder::Ge, "GE"), (GovOrder::Gm, "GM")]);
token_enum!(ProcChar, "pc", [(ProcChar::N, "N"), (ProcChar::I, "I"), (ProcChar::Itlc, "ITLC")]);
token_enum!(
    ContractType,
    "ct",
    [
        (ContractType::Op, "OP"),
        (ContractType::S, "S"),
        (ContractType::Adq, "ADQ"),
        (ContractType::Ar, "AR"),
        (ContractType::Slaop, "SLAOP")
    ]
);
token_enum!(ProcType, "pt", [(ProcType::Ad, "AD"), (ProcType::Lp, "LP"), (ProcType::I3p, "I3P")]);
token_enum!(
    SupplierSize,
    "size",
    [
        (SupplierSize::Mic, "MIC"),
        (SupplierSize::Peq, "PEQ"),
        (SupplierSize::Med, "MED"),
        (SupplierSize::Nom, "NOM"),
        (SupplierSize::Na, "NA")
    ]
);

/// One input line carried verbatim (strings) with the numeric columns parsed.
#[derive(Debug, Clone)]
pub struct RawContractRow {
    pub source_line: u64,
    pub buyer_name: String,
    pub supplier_name: String,
    pub government_order: String,
    pub procedure_character: String,
    pub contract_type: String,
    pub procedure_type: String,
    pub supplier_size: String,
    pub year: i32,
    pub beginning_week: u32,
    pub eb_weeks: u32,
    pub spending_amount: f64,
    pub spending_currency: String,
}

/// One cleaned contract with all categorical fields mapped and spending in
/// USD PPP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedContract {
    pub buyer_id: String,
    pub supplier_id: String,
    pub go: GovOrder,
    pub pc: ProcChar,
    pub ct: ContractType,
    pub pt: ProcType,
    pub size: SupplierSize,
    pub year: i32,
    pub beginning_week: u32,
    pub eb_weeks: u32,
    pub spending_usd_ppp: f64,
}

/// Why a row was rejected. Each reason names exactly one offending field.
#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    MissingField(&'static str),
    BadEnum { field: &'static str, value: String },
    BadNumber(&'static str),
    UnknownYear(i32),
    NegativeSpending,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::MissingField(field) => write!(f, "missing_field:{field}"),
            RejectReason::BadEnum { field, value } => write!(f, "bad_enum:{field}:{value}"),
            RejectReason::BadNumber(field) => write!(f, "bad_number:{field}"),
            RejectReason::UnknownYear(year) => write!(f, "unknown_year:{year}"),
            RejectReason::NegativeSpending => write!(f, "negative_spending"),
        }
    }
}

/// A rejected input line: its 1-based line number and the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionRecord {
    pub source_line: u64,
    pub reason: RejectReason,
}

/// Year to rate table (local currency units per USD PPP).
#[derive(Debug, Clone, Default)]
pub struct PppTable {
    rates: BTreeMap<i32, f64>,
}

impl PppTable {
    pub fn new(rates: impl IntoIterator<Item = (i32, f64)>) -> Result<Self> {
        let rates: BTreeMap<i32, f64> = rates.into_iter().collect();
        for (year, rate) in &rates {
            if !(*rate > 0.0) {
                return Err(Error::config(format!("ppp rate for {year} must be positive, got {rate}")));
            }
        }
        Ok(PppTable { rates })
    }

    /// Loads a two-column `year,rate` file. A header line is skipped if its
    /// first field does not parse as a year.
    pub fn load(reader: impl BufRead) -> Result<Self> {
        let mut rates = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::data(format!("ppp table line {}: {e}", i + 1)))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, [',', ';']);
            let year = parts.next().unwrap_or("").trim();
            let rate = parts.next().unwrap_or("").trim();
            let year: i32 = match year.parse() {
                Ok(y) => y,
                Err(_) if i == 0 => continue, // header
                Err(_) => return Err(Error::data(format!("ppp table line {}: bad year {year:?}", i + 1))),
            };
            let rate: f64 = rate
                .parse()
                .map_err(|_| Error::data(format!("ppp table line {}: bad rate {rate:?}", i + 1)))?;
            rates.push((year, rate));
        }
        PppTable::new(rates)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::config(format!("cannot open ppp table {}: {e}", path.display())))?;
        Self::load(std::io::BufReader::new(file))
    }

    pub fn rate(&self, year: i32) -> Option<f64> {
        self.rates.get(&year).copied()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.rates.keys().copied()
    }
}

/// Normalizes a buyer or supplier name: uppercase, diacritics folded,
/// punctuation dropped, whitespace collapsed. Idempotent.
pub fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        for u in c.to_uppercase() {
            let u = fold_diacritic(u);
            if u.is_alphanumeric() {
                if pending_space && !out.is_empty() {
                    out.push(' ');
                }
                pending_space = false;
                out.push(u);
            } else if u.is_whitespace() {
                pending_space = true;
            }
            // anything else (punctuation, symbols) is dropped
        }
    }
    out
}

fn fold_diacritic(c: char) -> char {
    match c {
        'Á' | 'À' | 'Â' | 'Ä' | 'Ã' | 'Å' => 'A',
        'É' | 'È' | 'Ê' | 'Ë' => 'E',
        'Í' | 'Ì' | 'Î' | 'Ï' => 'I',
        'Ó' | 'Ò' | 'Ô' | 'Ö' | 'Õ' => 'O',
        'Ú' | 'Ù' | 'Û' | 'Ü' => 'U',
        'Ñ' => 'N',
        'Ç' => 'C',
        'Ý' => 'Y',
        _ => c,
    }
}

/// Converts an amount to USD PPP. Amounts already in USD (PPP) pass through;
/// everything else is divided by the year's rate.
pub fn convert_to_usd_ppp(amount: f64, currency: &str, year: i32, table: &PppTable) -> std::result::Result<f64, RejectReason> {
    if amount < 0.0 {
        return Err(RejectReason::NegativeSpending);
    }
    let code = normalize_name(currency);
    if code == "USD" || code == "USD PPP" || code == "USDPPP" {
        return Ok(amount);
    }
    match table.rate(year) {
        Some(rate) => Ok(amount / rate),
        None => Err(RejectReason::UnknownYear(year)),
    }
}

/// Maps the required input variables to column names in the raw file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub buyer: String,
    pub supplier: String,
    pub government_order: String,
    pub procedure_character: String,
    pub contract_type: String,
    pub procedure_type: String,
    pub supplier_size: String,
    pub year: String,
    pub beginning_week: String,
    pub eb_weeks: String,
    pub spending: String,
    /// Optional; rows default to MXN when the file carries no currency column.
    pub currency: Option<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            buyer: "buyer".into(),
            supplier: "supplier".into(),
            government_order: "go".into(),
            procedure_character: "pc".into(),
            contract_type: "ct".into(),
            procedure_type: "pt".into(),
            supplier_size: "size".into(),
            year: "year".into(),
            beginning_week: "beginning_week".into(),
            eb_weeks: "eb_weeks".into(),
            spending: "spending".into(),
            currency: Some("currency".into()),
        }
    }
}

/// Picks the delimiter from a header line: `;` wins if it occurs more often
/// than `,`.
pub fn detect_delimiter(header_line: &str) -> u8 {
    let semis = header_line.bytes().filter(|b| *b == b';').count();
    let commas = header_line.bytes().filter(|b| *b == b',').count();
    if semis > commas {
        b';'
    } else {
        b','
    }
}

struct ColumnIndices {
    buyer: usize,
    supplier: usize,
    go: usize,
    pc: usize,
    ct: usize,
    pt: usize,
    size: usize,
    year: usize,
    beginning_week: usize,
    eb_weeks: usize,
    spending: usize,
    currency: Option<usize>,
}

impl ColumnIndices {
    fn resolve(header: &csv::StringRecord, schema: &ColumnSchema) -> Result<Self> {
        let find = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::config(format!("input header is missing column {name:?}")))
        };
        Ok(ColumnIndices {
            buyer: find(&schema.buyer)?,
            supplier: find(&schema.supplier)?,
            go: find(&schema.government_order)?,
            pc: find(&schema.procedure_character)?,
            ct: find(&schema.contract_type)?,
            pt: find(&schema.procedure_type)?,
            size: find(&schema.supplier_size)?,
            year: find(&schema.year)?,
            beginning_week: find(&schema.beginning_week)?,
            eb_weeks: find(&schema.eb_weeks)?,
            spending: find(&schema.spending)?,
            currency: match &schema.currency {
                Some(name) => header.iter().position(|h| h.trim().eq_ignore_ascii_case(name)),
                None => None,
            },
        })
    }
}

/// Parses a delimited stream into raw rows. Every data line yields exactly one
/// row or one rejection; a missing schema column is a fatal config error.
pub fn parse_contract_rows(
    reader: impl std::io::Read,
    schema: &ColumnSchema,
    delimiter: u8,
) -> Result<(Vec<RawContractRow>, Vec<RejectionRecord>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::data(format!("cannot read header: {e}")))?
        .clone();
    let cols = ColumnIndices::resolve(&header, schema)?;

    let mut rows = Vec::new();
    let mut rejections = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2; // 1-based, after the header
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                rejections.push(RejectionRecord { source_line: line, reason: RejectReason::BadNumber("row") });
                continue;
            }
        };
        match parse_record(&record, &cols, line) {
            Ok(row) => rows.push(row),
            Err(reason) => rejections.push(RejectionRecord { source_line: line, reason }),
        }
    }
    Ok((rows, rejections))
}

fn parse_record(
    record: &csv::StringRecord,
    cols: &ColumnIndices,
    line: u64,
) -> std::result::Result<RawContractRow, RejectReason> {
    let field = |idx: usize, name: &'static str| -> std::result::Result<&str, RejectReason> {
        match record.get(idx) {
            Some(v) if !v.trim().is_empty() => Ok(v.trim()),
            _ => Err(RejectReason::MissingField(name)),
        }
    };
    let year: i32 = field(cols.year, "year")?.parse().map_err(|_| RejectReason::BadNumber("year"))?;
    let beginning_week: u32 = field(cols.beginning_week, "beginning_week")?
        .parse()
        .map_err(|_| RejectReason::BadNumber("beginning_week"))?;
    let eb_weeks: u32 = field(cols.eb_weeks, "eb_weeks")?
        .parse()
        .map_err(|_| RejectReason::BadNumber("eb_weeks"))?;
    let spending_amount: f64 = field(cols.spending, "spending")?
        .parse()
        .map_err(|_| RejectReason::BadNumber("spending"))?;
    let currency = match cols.currency {
        Some(idx) => record.get(idx).map(|v| v.trim()).filter(|v| !v.is_empty()).unwrap_or("MXN"),
        None => "MXN",
    };
    Ok(RawContractRow {
        source_line: line,
        buyer_name: field(cols.buyer, "buyer")?.to_string(),
        supplier_name: field(cols.supplier, "supplier")?.to_string(),
        government_order: field(cols.go, "go")?.to_string(),
        procedure_character: field(cols.pc, "pc")?.to_string(),
        contract_type: field(cols.ct, "ct")?.to_string(),
        procedure_type: field(cols.pt, "pt")?.to_string(),
        supplier_size: field(cols.size, "size")?.to_string(),
        year,
        beginning_week,
        eb_weeks,
        spending_amount,
        spending_currency: currency.to_string(),
    })
}

/// Validates and cleans one raw row.
pub fn curate(row: &RawContractRow, table: &PppTable) -> std::result::Result<CuratedContract, RejectReason> {
    let buyer_id = normalize_name(&row.buyer_name);
    if buyer_id.is_empty() {
        return Err(RejectReason::MissingField("buyer"));
    }
    let supplier_id = normalize_name(&row.supplier_name);
    if supplier_id.is_empty() {
        return Err(RejectReason::MissingField("supplier"));
    }
    let bad_enum = |field: &'static str, value: &str| RejectReason::BadEnum { field, value: value.to_string() };
    let go = GovOrder::from_token(&row.government_order).ok_or_else(|| bad_enum("go", &row.government_order))?;
    let pc = ProcChar::from_token(&row.procedure_character).ok_or_else(|| bad_enum("pc", &row.procedure_character))?;
    let ct = ContractType::from_token(&row.contract_type).ok_or_else(|| bad_enum("ct", &row.contract_type))?;
    let pt = ProcType::from_token(&row.procedure_type).ok_or_else(|| bad_enum("pt", &row.procedure_type))?;
    let size = SupplierSize::from_token(&row.supplier_size).ok_or_else(|| bad_enum("size", &row.supplier_size))?;
    // some registries use 0-indexed weeks; week 0 maps to 1
    let beginning_week = match row.beginning_week {
        0 => 1,
        w @ 1..=53 => w,
        _ => return Err(RejectReason::BadNumber("beginning_week")),
    };
    let spending_usd_ppp = convert_to_usd_ppp(row.spending_amount, &row.spending_currency, row.year, table)?;
    Ok(CuratedContract {
        buyer_id,
        supplier_id,
        go,
        pc,
        ct,
        pt,
        size,
        year: row.year,
        beginning_week,
        eb_weeks: row.eb_weeks,
        spending_usd_ppp,
    })
}

fn split_curated(
    results: Vec<std::result::Result<CuratedContract, RejectionRecord>>,
    dedup: bool,
) -> (Vec<CuratedContract>, Vec<RejectionRecord>) {
    let mut curated = Vec::with_capacity(results.len());
    let mut rejections = Vec::new();
    for r in results {
        match r {
            Ok(c) => curated.push(c),
            Err(r) => rejections.push(r),
        }
    }
    if dedup {
        let mut seen = std::collections::HashSet::new();
        curated.retain(|c| {
            let key = format!(
                "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
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
                c.spending_usd_ppp
            );
            seen.insert(key)
        });
    }
    (curated, rejections)
}

/// Curates all rows, preserving input order in the curated list.
pub fn curate_all(rows: &[RawContractRow], table: &PppTable, dedup: bool) -> (Vec<CuratedContract>, Vec<RejectionRecord>) {
    #[cfg(feature = "parallel")]
    {
        curate_all_par(rows, table, dedup)
    }
    #[cfg(not(feature = "parallel"))]
    {
        curate_all_seq(rows, table, dedup)
    }
}

pub fn curate_all_seq(rows: &[RawContractRow], table: &PppTable, dedup: bool) -> (Vec<CuratedContract>, Vec<RejectionRecord>) {
    let results = rows
        .iter()
        .map(|row| curate(row, table).map_err(|reason| RejectionRecord { source_line: row.source_line, reason }))
        .collect();
    split_curated(results, dedup)
}

#[cfg(feature = "parallel")]
pub fn curate_all_par(rows: &[RawContractRow], table: &PppTable, dedup: bool) -> (Vec<CuratedContract>, Vec<RejectionRecord>) {
    let results = rows
        .par_iter()
        .map(|row| curate(row, table).map_err(|reason| RejectionRecord { source_line: row.source_line, reason }))
        .collect();
    split_curated(results, dedup)
}

pub const CURATED_COLUMNS: [&str; 11] =
    ["buyer_id", "supplier_id", "go", "pc", "ct", "pt", "size", "year", "beginning_week", "eb_weeks", "spending_usd_ppp"];

/// Writes curated contracts as canonical delimited text. `header_lines` are
/// emitted first as `#`-prefixed comments.
pub fn write_curated_csv(w: impl Write, contracts: &[CuratedContract], header_lines: &[String]) -> Result<()> {
    let mut w = w;
    for line in header_lines {
        writeln!(w, "# {line}").map_err(|e| Error::data(format!("write curated: {e}")))?;
    }
    writeln!(w, "{}", CURATED_COLUMNS.join(",")).map_err(|e| Error::data(format!("write curated: {e}")))?;
    for c in contracts {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
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
            c.spending_usd_ppp
        )
        .map_err(|e| Error::data(format!("write curated: {e}")))?;
    }
    Ok(())
}

/// Reads back a canonical curated file (as written by [`write_curated_csv`]).
pub fn read_curated_csv(reader: impl std::io::Read) -> Result<Vec<CuratedContract>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b',')
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("curated file record {}: {e}", i + 1)))?;
        let get = |idx: usize| record.get(idx).unwrap_or("").trim();
        let parse_err = |field: &str| Error::data(format!("curated file record {}: bad {field}", i + 1));
        out.push(CuratedContract {
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
        });
    }
    Ok(out)
}

/// Writes the rejection sidecar: line number and reason code per row.
pub fn write_rejections_csv(w: impl Write, rejections: &[RejectionRecord], header_lines: &[String]) -> Result<()> {
    let mut w = w;
    for line in header_lines {
        writeln!(w, "# {line}").map_err(|e| Error::data(format!("write rejections: {e}")))?;
    }
    writeln!(w, "source_line,reason").map_err(|e| Error::data(format!("write rejections: {e}")))?;
    for r in rejections {
        writeln!(w, "{},{}", r.source_line, r.reason).map_err(|e| Error::data(format!("write rejections: {e}")))?;
    }
    Ok(())
}
