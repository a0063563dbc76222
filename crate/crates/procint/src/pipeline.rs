//! Pipeline orchestration: staged artifacts on disk, resumable per
//! subcommand, deterministic for a given config and inputs.

use std::collections::BTreeMap;
use std::fmt::Write as FmtWrite;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{classify_contract, period_of, ClassLabel, Period, PeriodConfig, SupplierSet};
use crate::derive::{
    derive_all, read_annotated_csv, write_annotated_csv, write_buyers_csv, write_relations_csv, AnnotatedContract,
    BuyerStats, RiskThresholds,
};
use crate::error::{Error, Result};
use crate::ingest::{
    curate_all, detect_delimiter, parse_contract_rows, read_curated_csv, write_curated_csv, write_rejections_csv,
    ColumnSchema, CuratedContract, PppTable, CURATED_COLUMNS,
};
use crate::period_compare::{
    compare_dummy_series, compare_numeric_series, yearly_dummy_fractions, yearly_numeric_samples, FenceRule,
    PeriodCompareOptions, PeriodVerdict,
};
use crate::regress::{build_yearly_dataset, screening_report, wls_fit, FitResult, VIF_CUTOFF};
use crate::report::{
    config_digest, context_table, descriptive_stats, format_fixed, provenance_header, write_context_table,
    write_descriptive_stats,
};
use crate::risk_eval::{joint_cpw_spw_points, pr_curve, precision_given_flag, recall_given_class, FactorPredicate};
use crate::stats::{class_pair_comparison, ks_test, ComparisonFinding};
use crate::vars::{BuyerVar, DummyVar, NumericVar};

/// Which period the class comparisons and risk experiments run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeriodFilter {
    First,
    Second,
    All,
}

impl PeriodFilter {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(PeriodFilter::First),
            "2" => Ok(PeriodFilter::Second),
            "all" => Ok(PeriodFilter::All),
            other => Err(Error::config(format!("bad period filter {other:?}, expected 1, 2 or all"))),
        }
    }

    fn keeps(self, year: i32, cfg: &PeriodConfig) -> bool {
        match self {
            PeriodFilter::All => true,
            PeriodFilter::First => period_of(year, cfg) == Period::First,
            PeriodFilter::Second => period_of(year, cfg) == Period::Second,
        }
    }
}

/// Parses `rad=0.5,fav=0.9,cpw=5,spw=10000`; unspecified keys keep their
/// defaults.
pub fn parse_thresholds(spec: &str) -> Result<RiskThresholds> {
    let mut t = RiskThresholds::default();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::config(format!("bad threshold {part:?}, expected key=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad threshold value {value:?}")))?;
        match key.trim() {
            "rad" => t.rad_min = value,
            "fav" => t.fav_min = value,
            "cpw" => t.cpw_min = value,
            "spw" => t.spw_min = value,
            other => return Err(Error::config(format!("unknown threshold key {other:?}"))),
        }
    }
    t.validate()?;
    Ok(t)
}

/// Full run configuration. Its serialized digest goes into every provenance
/// header.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub efos: PathBuf,
    pub pcs: PathBuf,
    pub ppp: PathBuf,
    pub budgets: Option<PathBuf>,
    /// Not part of the config digest: the same analysis written elsewhere is
    /// still the same analysis.
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub periods: PeriodConfig,
    pub thresholds: RiskThresholds,
    pub ci_level: f64,
    pub grid_size: usize,
    pub delimiter: Option<u8>,
    pub dedup: bool,
    pub fence: FenceRule,
    pub period_filter: PeriodFilter,
}

impl RunConfig {
    pub fn new(input: PathBuf, efos: PathBuf, pcs: PathBuf, ppp: PathBuf, out_dir: PathBuf) -> Self {
        RunConfig {
            input,
            efos,
            pcs,
            ppp,
            budgets: None,
            out_dir,
            periods: PeriodConfig::default(),
            thresholds: RiskThresholds::default(),
            ci_level: 0.99,
            grid_size: 200,
            delimiter: None,
            dedup: false,
            fence: FenceRule::Whisker,
            period_filter: PeriodFilter::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::config(format!("ci level must be in (0,1), got {}", self.ci_level)));
        }
        if self.grid_size < 10 {
            return Err(Error::config(format!("grid size must be at least 10, got {}", self.grid_size)));
        }
        self.thresholds.validate()
    }

    fn header(&self) -> Result<Vec<String>> {
        let mut inputs: Vec<(&str, &Path)> = vec![
            ("contracts", self.input.as_path()),
            ("efos", self.efos.as_path()),
            ("pcs", self.pcs.as_path()),
            ("ppp", self.ppp.as_path()),
        ];
        if let Some(b) = &self.budgets {
            inputs.push(("budgets", b.as_path()));
        }
        provenance_header(&inputs, &config_digest(self))
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn compare_options(&self) -> PeriodCompareOptions {
        PeriodCompareOptions {
            ci_level: self.ci_level,
            grid_size: self.grid_size,
            fence: self.fence,
            range_coefficient: 1.5,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::config(format!("cannot create output directory {}: {e}", parent.display())))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::config(format!("cannot create {}: {e}", path.display()))
    })?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::config(format!("cannot open {}: {e}", path.display()))
    })?))
}

/// Loads `year,budget` delimited text (comment lines allowed).
pub fn load_budgets(path: &Path) -> Result<BTreeMap<i32, f64>> {
    let reader = open(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::data(format!("budgets read: {e}")))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split([',', ';']);
        let year = parts.next().unwrap_or("").trim();
        let budget = parts.next().unwrap_or("").trim();
        let Ok(year) = year.parse::<i32>() else {
            if i == 0 {
                continue; // header line
            }
            return Err(Error::data(format!("budgets line {}: bad year {year:?}", i + 1)));
        };
        let budget: f64 = budget
            .parse()
            .map_err(|_| Error::data(format!("budgets line {}: bad budget {budget:?}", i + 1)))?;
        if budget <= 0.0 {
            return Err(Error::data(format!("budgets line {}: budget must be positive", i + 1)));
        }
        out.insert(year, budget);
    }
    Ok(out)
}

/// Stage 1: parse and curate the raw input, writing `curated.csv` and
/// `rejections.csv`. Fails with a reason summary when every row is rejected.
pub fn stage_ingest(cfg: &RunConfig) -> Result<(usize, usize)> {
    cfg.validate()?;
    let header = cfg.header()?;
    let ppp = PppTable::load_path(&cfg.ppp)?;
    let mut reader = open(&cfg.input)?;
    let delimiter = match cfg.delimiter {
        Some(d) => d,
        None => {
            let mut first_line = String::new();
            reader
                .read_line(&mut first_line)
                .map_err(|e| Error::data(format!("cannot read input header: {e}")))?;
            let d = detect_delimiter(&first_line);
            reader = open(&cfg.input)?;
            d
        }
    };
    let (rows, mut rejections) = parse_contract_rows(reader, &ColumnSchema::default(), delimiter)?;
    let total = rows.len() + rejections.len();
    let (curated, curation_rejections) = curate_all(&rows, &ppp, cfg.dedup);
    rejections.extend(curation_rejections);
    rejections.sort_by_key(|r| r.source_line);
    if curated.is_empty() && total > 0 {
        let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
        for r in &rejections {
            *reasons.entry(r.reason.to_string()).or_default() += 1;
        }
        let summary: Vec<String> = reasons.into_iter().map(|(k, v)| format!("{k} x{v}")).collect();
        return Err(Error::data(format!("all {total} rows rejected ({})", summary.join(", "))));
    }
    write_curated_csv(create(&cfg.artifact("curated.csv"))?, &curated, &header)?;
    write_rejections_csv(create(&cfg.artifact("rejections.csv"))?, &rejections, &header)?;
    Ok((curated.len(), rejections.len()))
}

const CLASSIFIED_COLUMNS: &str = "class";

fn write_classified_csv(
    mut w: impl Write,
    contracts: &[CuratedContract],
    classes: &[ClassLabel],
    header_lines: &[String],
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::data(format!("write classified: {e}"));
    for line in header_lines {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "{},{}", CURATED_COLUMNS.join(","), CLASSIFIED_COLUMNS).map_err(io_err)?;
    for (c, class) in contracts.iter().zip(classes) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
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
            class
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn read_classified_csv(reader: impl std::io::Read) -> Result<(Vec<CuratedContract>, Vec<ClassLabel>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut contracts = Vec::new();
    let mut classes = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("classified file record {}: {e}", i + 1)))?;
        let mut fields: Vec<&str> = record.iter().collect();
        let class_field = fields
            .pop()
            .ok_or_else(|| Error::data(format!("classified file record {}: missing class", i + 1)))?;
        let class = ClassLabel::from_name(class_field)
            .ok_or_else(|| Error::data(format!("classified file record {}: bad class {class_field:?}", i + 1)))?;
        let curated_line = fields.join(",");
        let mut parsed =
            read_curated_csv(format!("{}\n{}\n", CURATED_COLUMNS.join(","), curated_line).as_bytes())?;
        contracts.push(parsed.pop().unwrap());
        classes.push(class);
    }
    Ok((contracts, classes))
}

/// Stage 2: label curated contracts from the blocklists, writing
/// `classified.csv` and `conflicts.csv`. Returns per-class counts.
pub fn stage_classify(cfg: &RunConfig) -> Result<BTreeMap<ClassLabel, usize>> {
    cfg.validate()?;
    let header = cfg.header()?;
    let contracts = read_curated_csv(open(&cfg.artifact("curated.csv"))?)?;
    let efos = SupplierSet::load_path(&cfg.efos)?;
    let pcs = SupplierSet::load_path(&cfg.pcs)?;
    let classes: Vec<ClassLabel> = contracts.iter().map(|c| classify_contract(c, &efos, &pcs)).collect();
    write_classified_csv(create(&cfg.artifact("classified.csv"))?, &contracts, &classes, &header)?;

    let mut conflicts = create(&cfg.artifact("conflicts.csv"))?;
    for line in &header {
        writeln!(conflicts, "# {line}").map_err(|e| Error::data(format!("write conflicts: {e}")))?;
    }
    writeln!(conflicts, "supplier_id").map_err(|e| Error::data(format!("write conflicts: {e}")))?;
    for name in efos.conflicts_with(&pcs) {
        writeln!(conflicts, "{name}").map_err(|e| Error::data(format!("write conflicts: {e}")))?;
    }

    let mut counts = BTreeMap::new();
    for class in &classes {
        *counts.entry(*class).or_default() += 1;
    }
    Ok(counts)
}

/// Stage 3: aggregate relations, buyer maxima and risk factors, writing
/// `relations.csv`, `buyers.csv` and `annotated.csv`.
pub fn stage_derive(cfg: &RunConfig) -> Result<usize> {
    cfg.validate()?;
    let header = cfg.header()?;
    let (contracts, classes) = read_classified_csv(open(&cfg.artifact("classified.csv"))?)?;
    let (relations, buyers, annotated) = derive_all(&contracts, &classes)?;
    write_relations_csv(create(&cfg.artifact("relations.csv"))?, &relations, &header)?;
    write_buyers_csv(create(&cfg.artifact("buyers.csv"))?, &buyers, &header)?;
    write_annotated_csv(create(&cfg.artifact("annotated.csv"))?, &annotated, &header)?;
    Ok(relations.len())
}

fn load_annotated(cfg: &RunConfig) -> Result<Vec<AnnotatedContract>> {
    read_annotated_csv(open(&cfg.artifact("annotated.csv"))?)
}

fn read_buyers_csv(reader: impl std::io::Read) -> Result<Vec<BuyerStats>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("buyers file record {}: {e}", i + 1)))?;
        let get = |idx: usize| record.get(idx).unwrap_or("").trim();
        let parse_err = |field: &str| Error::data(format!("buyers file record {}: bad {field}", i + 1));
        out.push(BuyerStats {
            buyer_id: get(0).to_string(),
            year: get(1).parse().map_err(|_| parse_err("year"))?,
            t_cont_max: get(2).parse().map_err(|_| parse_err("t_cont_max"))?,
            t_spending_max: get(3).parse().map_err(|_| parse_err("t_spending_max"))?,
        });
    }
    Ok(out)
}

fn by_class<'a>(annotated: &'a [AnnotatedContract], class: ClassLabel) -> Vec<&'a AnnotatedContract> {
    annotated.iter().filter(|a| a.class == class).collect()
}

fn finding_row(pair: &str, f: &ComparisonFinding) -> String {
    match f {
        ComparisonFinding::Dummy(r) => format!(
            "{pair},{},dummy,{},{},{},{},{},{},{}",
            r.variable,
            r.n_a,
            r.n_b,
            format_fixed(r.f_a, 6),
            format_fixed(r.f_b, 6),
            format_fixed(r.z, 4),
            format_fixed(r.p_value, 6),
            r.significant
        ),
        ComparisonFinding::Numeric(r) => format!(
            "{pair},{},numeric,{},{},,,{},{},{}",
            r.variable,
            r.n_a,
            r.n_b,
            format_fixed(r.d, 6),
            format_fixed(r.p_value, 6),
            r.significant
        ),
    }
}

/// Type ii samples: one value per (buyer, year) that holds at least one
/// contract of the class.
fn buyer_samples(annotated: &[&AnnotatedContract], buyers: &[BuyerStats], var: BuyerVar) -> Vec<f64> {
    let index: BTreeMap<(&str, i32), &BuyerStats> =
        buyers.iter().map(|b| ((b.buyer_id.as_str(), b.year), b)).collect();
    let keys: BTreeMap<(&str, i32), ()> = annotated
        .iter()
        .map(|a| ((a.contract.buyer_id.as_str(), a.contract.year), ()))
        .collect();
    keys.keys().filter_map(|k| index.get(k).map(|b| var.value(b))).collect()
}

/// Stage 4: pairwise class comparisons (proportion tests, KS, buyer-feature
/// KS), writing `compare_classes.csv`. Honors the period filter.
pub fn stage_compare_classes(cfg: &RunConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let header = cfg.header()?;
    let annotated = load_annotated(cfg)?;
    let buyers = read_buyers_csv(open(&cfg.artifact("buyers.csv"))?)?;
    let filtered: Vec<AnnotatedContract> = annotated
        .into_iter()
        .filter(|a| cfg.period_filter.keeps(a.contract.year, &cfg.periods))
        .collect();

    let mut w = create(&cfg.artifact("compare_classes.csv"))?;
    let io_err = |e: std::io::Error| Error::data(format!("write compare_classes: {e}"));
    for line in &header {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "pair,variable,kind,n_a,n_b,f_a,f_b,stat,p_value,significant").map_err(io_err)?;

    let numeric_vars: Vec<NumericVar> =
        NumericVar::CONTRACT.into_iter().chain(NumericVar::FACTORS).collect();
    let mut notes = Vec::new();
    for (a, b) in [
        (ClassLabel::Efos, ClassLabel::Nc),
        (ClassLabel::Pcs, ClassLabel::Nc),
        (ClassLabel::Efos, ClassLabel::Pcs),
    ] {
        let pair = format!("{a}-{b}");
        let set_a = by_class(&filtered, a);
        let set_b = by_class(&filtered, b);
        if set_a.is_empty() || set_b.is_empty() {
            notes.push(format!("skipped {pair}: a class is empty in the selected period"));
            continue;
        }
        let findings = class_pair_comparison(&set_a, &set_b, &DummyVar::ALL, &numeric_vars)?;
        for f in &findings {
            writeln!(w, "{}", finding_row(&pair, f)).map_err(io_err)?;
        }
        for var in BuyerVar::ALL {
            let xs = buyer_samples(&set_a, &buyers, var);
            let ys = buyer_samples(&set_b, &buyers, var);
            if xs.is_empty() || ys.is_empty() {
                continue;
            }
            let r = ks_test(var.name(), &xs, &ys)?;
            writeln!(w, "{}", finding_row(&pair, &ComparisonFinding::Numeric(r))).map_err(io_err)?;
        }
    }
    Ok(notes)
}

/// Stage 5: between-period comparison per class, writing
/// `period_verdicts.csv` plus boxplot and CDF-band plot data. Variables
/// whose class lacks enough yearly coverage are skipped with a note.
pub fn stage_compare_periods(cfg: &RunConfig) -> Result<(Vec<PeriodVerdict>, Vec<String>)> {
    cfg.validate()?;
    let header = cfg.header()?;
    let annotated = load_annotated(cfg)?;
    let opts = cfg.compare_options();
    let io_err = |e: std::io::Error| Error::data(format!("write period artifacts: {e}"));

    let mut verdicts_file = create(&cfg.artifact("period_verdicts.csv"))?;
    for line in &header {
        writeln!(verdicts_file, "# {line}").map_err(io_err)?;
    }
    writeln!(verdicts_file, "class,variable,year,coverage_outside,verdict").map_err(io_err)?;

    let mut boxplot_file = create(&cfg.artifact("period_boxplots.csv"))?;
    for line in &header {
        writeln!(boxplot_file, "# {line}").map_err(io_err)?;
    }
    writeln!(boxplot_file, "class,variable,q1,median,q3,lower_whisker,upper_whisker").map_err(io_err)?;

    let mut all_verdicts = Vec::new();
    let mut notes = Vec::new();
    for class in ClassLabel::ALL {
        let members = by_class(&annotated, class);
        if members.is_empty() {
            notes.push(format!("skipped period comparison for {class}: no contracts"));
            continue;
        }
        for var in DummyVar::ALL {
            let yearly = yearly_dummy_fractions(&members, var);
            match compare_dummy_series(var.name(), &yearly, &cfg.periods, &opts) {
                Ok((verdicts, summary)) => {
                    for v in &verdicts {
                        writeln!(
                            verdicts_file,
                            "{class},{},{},{},{}",
                            v.variable,
                            v.year,
                            format_fixed(v.coverage_outside, 4),
                            v.verdict.name()
                        )
                        .map_err(io_err)?;
                    }
                    writeln!(
                        boxplot_file,
                        "{class},{},{},{},{},{},{}",
                        var.name(),
                        format_fixed(summary.q1, 6),
                        format_fixed(summary.median, 6),
                        format_fixed(summary.q3, 6),
                        format_fixed(summary.lower_whisker, 6),
                        format_fixed(summary.upper_whisker, 6)
                    )
                    .map_err(io_err)?;
                    all_verdicts.extend(verdicts);
                }
                Err(e) => notes.push(format!("{class} {}: {e}", var.name())),
            }
        }
        for var in NumericVar::CONTRACT.into_iter().chain(NumericVar::FACTORS) {
            let yearly = yearly_numeric_samples(&members, var);
            match compare_numeric_series(var.name(), &yearly, &cfg.periods, &opts) {
                Ok((verdicts, plot)) => {
                    for v in &verdicts {
                        writeln!(
                            verdicts_file,
                            "{class},{},{},{},{}",
                            v.variable,
                            v.year,
                            format_fixed(v.coverage_outside, 4),
                            v.verdict.name()
                        )
                        .map_err(io_err)?;
                    }
                    let name = format!("band_{}_{}.csv", class.name().to_lowercase(), var.name().replace('.', "_"));
                    let mut plot_file = create(&cfg.artifact(&name))?;
                    for line in &header {
                        writeln!(plot_file, "# {line}").map_err(io_err)?;
                    }
                    let years: Vec<String> =
                        plot.second_curves.iter().map(|(y, _)| format!("cdf_{y}")).collect();
                    writeln!(plot_file, "grid_x,mean,lower,upper{}{}", if years.is_empty() { "" } else { "," }, years.join(","))
                        .map_err(io_err)?;
                    for i in 0..plot.band.grid.len() {
                        let mut row = format!(
                            "{},{},{},{}",
                            format_fixed(plot.band.grid[i], 6),
                            format_fixed(plot.band.mean[i], 6),
                            format_fixed(plot.band.lower[i], 6),
                            format_fixed(plot.band.upper[i], 6)
                        );
                        for (_, curve) in &plot.second_curves {
                            write!(row, ",{}", format_fixed(curve[i], 6)).unwrap();
                        }
                        writeln!(plot_file, "{row}").map_err(io_err)?;
                    }
                    all_verdicts.extend(verdicts);
                }
                Err(e) => notes.push(format!("{class} {}: {e}", var.name())),
            }
        }
    }
    Ok((all_verdicts, notes))
}

fn factor_grids(t: &RiskThresholds) -> Vec<(&'static str, Vec<f64>, Box<dyn Fn(f64) -> FactorPredicate + Sync>)> {
    let _ = t;
    vec![
        ("RAD", (0..=20).map(|i| i as f64 / 20.0).collect(), Box::new(FactorPredicate::Rad)),
        ("Fav", (0..=33).map(|i| 0.03 * i as f64).collect(), Box::new(FactorPredicate::Fav)),
        ("CPW", (0..=20).map(|i| i as f64).collect(), Box::new(FactorPredicate::Cpw)),
        ("SPW", (0..=20).map(|i| 2500.0 * i as f64).collect(), Box::new(FactorPredicate::Spw)),
    ]
}

/// Stage 6: descriptor/identifier experiments and PR sweeps, writing
/// `risk_eval.csv` and one `pr_*.csv` per factor and class. Honors the
/// period filter.
pub fn stage_risk_eval(cfg: &RunConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let header = cfg.header()?;
    let annotated = load_annotated(cfg)?;
    let filtered: Vec<AnnotatedContract> = annotated
        .into_iter()
        .filter(|a| cfg.period_filter.keeps(a.contract.year, &cfg.periods))
        .collect();
    let io_err = |e: std::io::Error| Error::data(format!("write risk_eval: {e}"));

    let mut w = create(&cfg.artifact("risk_eval.csv"))?;
    for line in &header {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "class,factor,threshold,recall,describes_class,precision,baseline,identifies_class").map_err(io_err)?;

    let t = &cfg.thresholds;
    let configured: Vec<(&str, FactorPredicate)> = vec![
        ("RAD", FactorPredicate::Rad(t.rad_min)),
        ("Fav", FactorPredicate::Fav(t.fav_min)),
        ("CPW", FactorPredicate::Cpw(t.cpw_min)),
        ("SPW", FactorPredicate::Spw(t.spw_min)),
        ("CPW+SPW", FactorPredicate::CpwSpwJoint(t.cpw_min)),
    ];
    let mut notes = Vec::new();
    for class in [ClassLabel::Efos, ClassLabel::Pcs] {
        if !filtered.iter().any(|a| a.class == class) {
            notes.push(format!("skipped risk evaluation for {class}: no contracts in the selected period"));
            continue;
        }
        for (name, pred) in &configured {
            let recall = recall_given_class(&filtered, class, *pred).map_err(Error::from)?;
            let precision = precision_given_flag(&filtered, class, *pred).map_err(Error::from)?;
            writeln!(
                w,
                "{class},{name},{},{},{},{},{},{}",
                format_fixed(pred.threshold(), 4),
                format_fixed(recall.recall, 6),
                recall.describes_class,
                precision.precision.map(|p| format_fixed(p, 6)).unwrap_or_default(),
                format_fixed(precision.baseline, 6),
                precision.identifies_class
            )
            .map_err(io_err)?;
        }
        for (factor, grid, make) in factor_grids(t) {
            let points = pr_curve(&filtered, class, make.as_ref(), &grid);
            let name = format!("pr_{}_{}.csv", factor.to_lowercase(), class.name().to_lowercase());
            write_pr_points(create(&cfg.artifact(&name))?, &header, &points)?;
        }
        let joint = joint_cpw_spw_points(&filtered, class, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
        let name = format!("pr_joint_{}.csv", class.name().to_lowercase());
        write_pr_points(create(&cfg.artifact(&name))?, &header, &joint)?;
    }
    Ok(notes)
}

fn write_pr_points(mut w: impl Write, header: &[String], points: &[crate::risk_eval::PrPoint]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::data(format!("write pr curve: {e}"));
    for line in header {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "threshold,precision,recall,baseline,flagged_count,class_count").map_err(io_err)?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            format_fixed(p.threshold, 4),
            p.precision.map(|v| format_fixed(v, 6)).unwrap_or_default(),
            format_fixed(p.recall, 6),
            format_fixed(p.baseline, 6),
            p.flagged_count,
            p.class_count
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Stage 7: yearly WLS models per corrupt class, writing `regress.csv`.
/// Models failing the VIF screen are dropped from the table.
pub fn stage_regress(cfg: &RunConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let header = cfg.header()?;
    let annotated = load_annotated(cfg)?;
    let io_err = |e: std::io::Error| Error::data(format!("write regress: {e}"));

    let mut w = create(&cfg.artifact("regress.csv"))?;
    for line in &header {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "model,class,dependent,predictors,coefficients,standard_errors,standardized_slopes,p_values,r_squared,mean_vif,n,df")
        .map_err(io_err)?;

    let t = &cfg.thresholds;
    let mut notes = Vec::new();
    let mut models: Vec<(String, FitResult)> = Vec::new();
    let mut rows: Vec<(String, ClassLabel, String)> = Vec::new();
    for class in [ClassLabel::Efos, ClassLabel::Pcs] {
        let specs: [(&str, Vec<FactorPredicate>); 3] = [
            ("rad", vec![FactorPredicate::Rad(t.rad_min)]),
            ("fav", vec![FactorPredicate::Fav(t.fav_min)]),
            ("rad+fav", vec![FactorPredicate::Rad(t.rad_min), FactorPredicate::Fav(t.fav_min)]),
        ];
        for (label, preds) in specs {
            let model_name = format!("{}_ptad~{label}", class.name().to_lowercase());
            let data = match build_yearly_dataset(&annotated, class, DummyVar::PtAd, &preds) {
                Ok(d) => d,
                Err(e) => {
                    notes.push(format!("{model_name}: {e}"));
                    continue;
                }
            };
            match wls_fit(&data, preds.len()) {
                Ok(fit) => {
                    rows.push((model_name.clone(), class, label.to_string()));
                    models.push((model_name, fit));
                }
                Err(e) => notes.push(format!("{model_name}: {e}")),
            }
        }
    }
    let retained = screening_report(models, VIF_CUTOFF);
    for (name, fit) in &retained {
        let (_, class, predictors) = rows.iter().find(|(n, _, _)| n == name).unwrap();
        let join = |v: &[f64]| v.iter().map(|x| format_fixed(*x, 6)).collect::<Vec<_>>().join(";");
        writeln!(
            w,
            "{name},{class},PT.AD,{predictors},{},{},{},{},{},{},{},{}",
            join(&fit.coefficients),
            join(&fit.standard_errors),
            join(&fit.standardized_slopes),
            join(&fit.p_values),
            format_fixed(fit.r_squared, 4),
            format_fixed(fit.mean_vif, 4),
            fit.n,
            fit.df
        )
        .map_err(io_err)?;
    }
    Ok(notes)
}

/// Stage 8: context and descriptive tables, writing `context.csv` (when
/// budgets are configured) and `descriptive.csv`.
pub fn stage_report(cfg: &RunConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let header = cfg.header()?;
    let annotated = load_annotated(cfg)?;
    let mut notes = Vec::new();

    if let Some(budgets_path) = &cfg.budgets {
        let budgets = load_budgets(budgets_path)?;
        let table = context_table(&annotated, &budgets)?;
        write_context_table(create(&cfg.artifact("context.csv"))?, &header, &table)?;
    } else {
        notes.push("no budgets file configured; context table skipped".to_string());
    }

    let refs: Vec<&AnnotatedContract> = annotated.iter().collect();
    let mut w = create(&cfg.artifact("descriptive.csv"))?;
    let io_err = |e: std::io::Error| Error::data(format!("write descriptive: {e}"));
    for line in &header {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "class,variable,kind,fraction,mean,sd,q1,median,q3").map_err(io_err)?;
    for class in ClassLabel::ALL {
        match descriptive_stats(&refs, class) {
            Ok(stats) => write_descriptive_rows(&mut w, class, &stats)?,
            Err(e) => notes.push(format!("descriptive stats for {class}: {e}")),
        }
    }
    Ok(notes)
}

fn write_descriptive_rows(
    w: &mut impl Write,
    class: ClassLabel,
    rows: &[crate::report::VariableSummary],
) -> Result<()> {
    // reuse the single-class writer without repeating its header
    let mut buffer = Vec::new();
    write_descriptive_stats(&mut buffer, &[], class, rows)?;
    let body = buffer.split(|&b| b == b'\n').skip(1).collect::<Vec<_>>().join(&b'\n');
    w.write_all(&body).map_err(|e| Error::data(format!("write descriptive: {e}")))?;
    Ok(())
}

/// Summary counts from a full run.
#[derive(Debug, Clone, Default)]
pub struct PipelineSummary {
    pub curated: usize,
    pub rejected: usize,
    pub class_counts: BTreeMap<ClassLabel, usize>,
    pub relations: usize,
    pub verdicts: Vec<PeriodVerdict>,
    pub notes: Vec<String>,
}

/// Runs every stage in order and writes `summary.txt`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineSummary> {
    cfg.validate()?;
    let mut summary = PipelineSummary::default();
    let (curated, rejected) = stage_ingest(cfg)?;
    summary.curated = curated;
    summary.rejected = rejected;
    summary.class_counts = stage_classify(cfg)?;
    summary.relations = stage_derive(cfg)?;
    summary.notes.extend(stage_compare_classes(cfg)?);
    let (verdicts, notes) = stage_compare_periods(cfg)?;
    summary.verdicts = verdicts;
    summary.notes.extend(notes);
    summary.notes.extend(stage_risk_eval(cfg)?);
    summary.notes.extend(stage_regress(cfg)?);
    summary.notes.extend(stage_report(cfg)?);

    let mut w = create(&cfg.artifact("summary.txt"))?;
    let io_err = |e: std::io::Error| Error::data(format!("write summary: {e}"));
    for line in cfg.header()? {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "curated contracts: {}", summary.curated).map_err(io_err)?;
    writeln!(w, "rejected rows: {}", summary.rejected).map_err(io_err)?;
    for (class, n) in &summary.class_counts {
        writeln!(w, "class {class}: {n}").map_err(io_err)?;
    }
    writeln!(w, "relations: {}", summary.relations).map_err(io_err)?;
    for v in &summary.verdicts {
        writeln!(
            w,
            "period {} {}: {} (coverage outside {})",
            v.variable,
            v.year,
            v.verdict.name(),
            format_fixed(v.coverage_outside, 4)
        )
        .map_err(io_err)?;
    }
    for note in &summary.notes {
        writeln!(w, "note: {note}").map_err(io_err)?;
    }
    Ok(summary)
}
