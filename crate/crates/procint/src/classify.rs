//! Contract classification from supplier blocklists and period assignment.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{normalize_name, CuratedContract};

/// Contract class. Every contract gets exactly one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Efos,
    Pcs,
    Nc,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Efos, ClassLabel::Pcs, ClassLabel::Nc];

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Efos => "EFOS",
            ClassLabel::Pcs => "PCS",
            ClassLabel::Nc => "NC",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim().to_uppercase().as_str() {
            "EFOS" => Some(ClassLabel::Efos),
            "PCS" => Some(ClassLabel::Pcs),
            "NC" => Some(ClassLabel::Nc),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of normalized supplier identifiers loaded from a blocklist file.
#[derive(Debug, Clone, Default)]
pub struct SupplierSet {
    names: BTreeSet<String>,
}

impl SupplierSet {
    pub fn from_names<I: IntoIterator<Item = S>, S: AsRef<str>>(names: I) -> Self {
        let names = names
            .into_iter()
            .map(|n| normalize_name(n.as_ref()))
            .filter(|n| !n.is_empty())
            .collect();
        SupplierSet { names }
    }

    /// Loads a plain-text blocklist, one supplier name per line. Empty lines
    /// are skipped; an empty file yields an empty (valid) set.
    pub fn load(reader: impl BufRead) -> Result<Self> {
        let mut names = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::data(format!("blocklist read: {e}")))?;
            names.push(line);
        }
        Ok(Self::from_names(names))
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::config(format!("cannot open blocklist {}: {e}", path.display())))?;
        Self::load(std::io::BufReader::new(file))
    }

    pub fn contains(&self, supplier_id: &str) -> bool {
        self.names.contains(supplier_id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Suppliers present in both sets; such conflicts classify as EFOS and
    /// must be reported.
    pub fn conflicts_with<'a>(&'a self, other: &'a SupplierSet) -> impl Iterator<Item = &'a str> {
        self.names.iter().filter(|n| other.names.contains(*n)).map(String::as_str)
    }
}

/// Labels one contract. EFOS takes precedence when a supplier sits on both
/// lists. Classification is independent of the contract date.
pub fn classify_contract(contract: &CuratedContract, efos: &SupplierSet, pcs: &SupplierSet) -> ClassLabel {
    if efos.contains(&contract.supplier_id) {
        ClassLabel::Efos
    } else if pcs.contains(&contract.supplier_id) {
        ClassLabel::Pcs
    } else {
        ClassLabel::Nc
    }
}

/// Government period of a year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    First,
    Second,
    OutOfRange,
}

/// Inclusive year ranges for the two government periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodConfig {
    pub first: (i32, i32),
    pub second: (i32, i32),
}

impl Default for PeriodConfig {
    fn default() -> Self {
        PeriodConfig { first: (2013, 2018), second: (2019, 2020) }
    }
}

impl PeriodConfig {
    pub fn new(first: (i32, i32), second: (i32, i32)) -> Result<Self> {
        if first.0 > first.1 || second.0 > second.1 {
            return Err(Error::config("period ranges must be non-empty".to_string()));
        }
        if first.1 >= second.0 && second.1 >= first.0 {
            return Err(Error::config("period ranges must be disjoint".to_string()));
        }
        Ok(PeriodConfig { first, second })
    }

    /// Parses `A-B,C-D`, e.g. `2013-2018,2019-2020`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parse_range = |s: &str| -> Result<(i32, i32)> {
            let (a, b) = s
                .split_once('-')
                .ok_or_else(|| Error::config(format!("bad period range {s:?}, expected A-B")))?;
            let a = a.trim().parse().map_err(|_| Error::config(format!("bad year {a:?}")))?;
            let b = b.trim().parse().map_err(|_| Error::config(format!("bad year {b:?}")))?;
            Ok((a, b))
        };
        let (first, second) = spec
            .split_once(',')
            .ok_or_else(|| Error::config(format!("bad periods {spec:?}, expected A-B,C-D")))?;
        PeriodConfig::new(parse_range(first)?, parse_range(second)?)
    }

    pub fn first_years(&self) -> impl Iterator<Item = i32> {
        self.first.0..=self.first.1
    }

    pub fn second_years(&self) -> impl Iterator<Item = i32> {
        self.second.0..=self.second.1
    }
}

/// Period membership by inclusive range.
pub fn period_of(year: i32, cfg: &PeriodConfig) -> Period {
    if year >= cfg.first.0 && year <= cfg.first.1 {
        Period::First
    } else if year >= cfg.second.0 && year <= cfg.second.1 {
        Period::Second
    } else {
        Period::OutOfRange
    }
}
