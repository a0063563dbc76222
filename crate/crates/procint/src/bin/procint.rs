use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use procint::classify::PeriodConfig;
use procint::error::{Error, Result};
use procint::period_compare::FenceRule;
use procint::pipeline::{
    parse_thresholds, run_pipeline, stage_classify, stage_compare_classes, stage_compare_periods, stage_derive,
    stage_ingest, stage_regress, stage_risk_eval, PeriodFilter, RunConfig,
};
use procint::synth::{blocklists, write_corpus_csv, write_ppp_csv, CorpusConfig};

#[derive(Parser)]
#[command(name = "procint", version, about = "Procurement-integrity analytics pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PipelineArgs {
    /// Raw contracts file (delimited text)
    #[arg(long)]
    input: PathBuf,
    /// EFOS supplier blocklist, one name per line
    #[arg(long)]
    efos: PathBuf,
    /// PCS supplier blocklist, one name per line
    #[arg(long)]
    pcs: PathBuf,
    /// Year to PPP conversion-rate table
    #[arg(long)]
    ppp: PathBuf,
    /// Yearly federal budget table (year,budget)
    #[arg(long)]
    budgets: Option<PathBuf>,
    /// Government periods as A-B,C-D
    #[arg(long, default_value = "2013-2018,2019-2020")]
    periods: String,
    /// Output directory for artifacts
    #[arg(long)]
    out: PathBuf,
    /// Confidence level for the period CDF bands
    #[arg(long, default_value_t = 0.99)]
    ci_level: f64,
    /// Evaluation grid size for the CDF bands
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Risk thresholds as key=value pairs
    #[arg(long, default_value = "rad=0.5,fav=0.9,cpw=5,spw=10000")]
    thresholds: String,
    /// Field delimiter; detected from the header when omitted
    #[arg(long)]
    delimiter: Option<char>,
    /// Drop exact duplicate rows during curation
    #[arg(long)]
    dedup: bool,
    /// Boxplot fence rule for dummy verdicts
    #[arg(long, default_value = "whisker")]
    fence: String,
    /// Period filter for class comparisons and risk evaluation
    #[arg(long, default_value = "all")]
    period: String,
}

impl PipelineArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(self.input, self.efos, self.pcs, self.ppp, self.out);
        cfg.budgets = self.budgets;
        cfg.periods = PeriodConfig::parse(&self.periods)?;
        cfg.thresholds = parse_thresholds(&self.thresholds)?;
        cfg.ci_level = self.ci_level;
        cfg.grid_size = self.grid;
        cfg.delimiter = match self.delimiter {
            Some(c) if c.is_ascii() => Some(c as u8),
            Some(c) => return Err(Error::config(format!("delimiter must be ASCII, got {c:?}"))),
            None => None,
        };
        cfg.dedup = self.dedup;
        cfg.fence = match self.fence.as_str() {
            "whisker" => FenceRule::Whisker,
            "raw-min-max" => FenceRule::RawMinMax,
            other => return Err(Error::config(format!("bad fence {other:?}, expected whisker or raw-min-max"))),
        };
        cfg.period_filter = PeriodFilter::parse(&self.period)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Number of contract rows
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    /// RNG seed
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for contracts.csv, efos.txt, pcs.txt, ppp.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and curate the raw input
    Ingest(PipelineArgs),
    /// Label curated contracts from the blocklists
    Classify(PipelineArgs),
    /// Aggregate relations and risk factors
    Derive(PipelineArgs),
    /// Compare corrupt classes against the non-corrupt class
    CompareClasses(PipelineArgs),
    /// Compare the two government periods per class
    ComparePeriods(PipelineArgs),
    /// Evaluate risk factors as descriptors and identifiers
    RiskEval(PipelineArgs),
    /// Fit yearly weighted least-squares models
    Regress(PipelineArgs),
    /// Run every stage and write all reports
    ReportAll(PipelineArgs),
    /// Generate a seeded synthetic corpus
    Synth(SynthArgs),
}

fn print_notes(notes: &[String]) {
    for note in notes {
        eprintln!("note: {note}");
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => {
            let cfg = args.into_config()?;
            let (curated, rejected) = stage_ingest(&cfg)?;
            println!("curated {curated} contracts, rejected {rejected} rows");
        }
        Command::Classify(args) => {
            let cfg = args.into_config()?;
            for (class, n) in stage_classify(&cfg)? {
                println!("class {class}: {n}");
            }
        }
        Command::Derive(args) => {
            let cfg = args.into_config()?;
            let relations = stage_derive(&cfg)?;
            println!("derived {relations} relations");
        }
        Command::CompareClasses(args) => {
            let cfg = args.into_config()?;
            print_notes(&stage_compare_classes(&cfg)?);
            println!("wrote {}", cfg.out_dir.join("compare_classes.csv").display());
        }
        Command::ComparePeriods(args) => {
            let cfg = args.into_config()?;
            let (verdicts, notes) = stage_compare_periods(&cfg)?;
            print_notes(&notes);
            println!("wrote {} verdicts", verdicts.len());
        }
        Command::RiskEval(args) => {
            let cfg = args.into_config()?;
            print_notes(&stage_risk_eval(&cfg)?);
            println!("wrote {}", cfg.out_dir.join("risk_eval.csv").display());
        }
        Command::Regress(args) => {
            let cfg = args.into_config()?;
            print_notes(&stage_regress(&cfg)?);
            println!("wrote {}", cfg.out_dir.join("regress.csv").display());
        }
        Command::ReportAll(args) => {
            let cfg = args.into_config()?;
            let summary = run_pipeline(&cfg)?;
            print_notes(&summary.notes);
            println!(
                "curated {} contracts ({} rejected), {} relations, {} period verdicts",
                summary.curated,
                summary.rejected,
                summary.relations,
                summary.verdicts.len()
            );
        }
        Command::Synth(args) => {
            std::fs::create_dir_all(&args.out)
                .map_err(|e| Error::config(format!("cannot create {}: {e}", args.out.display())))?;
            let cfg = CorpusConfig { rows: args.rows, seed: args.seed, ..CorpusConfig::default() };
            let file = |name: &str| -> Result<std::fs::File> {
                std::fs::File::create(args.out.join(name))
                    .map_err(|e| Error::config(format!("cannot create {name}: {e}")))
            };
            write_corpus_csv(std::io::BufWriter::new(file("contracts.csv")?), &cfg)?;
            write_ppp_csv(file("ppp.csv")?, &cfg)?;
            let (efos, pcs) = blocklists(&cfg);
            std::fs::write(args.out.join("efos.txt"), efos.join("\n") + "\n")
                .map_err(|e| Error::config(format!("cannot write efos.txt: {e}")))?;
            std::fs::write(args.out.join("pcs.txt"), pcs.join("\n") + "\n")
                .map_err(|e| Error::config(format!("cannot write pcs.txt: {e}")))?;
            println!("wrote {} rows to {}", cfg.rows, args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
