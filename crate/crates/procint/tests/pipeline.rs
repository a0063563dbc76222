//! End-to-end pipeline tests over a small synthetic fixture, including the
//! CLI exit-code contract.

use std::path::{Path, PathBuf};
use std::process::Command;

use procint::pipeline::{run_pipeline, RunConfig};
use procint::synth::{blocklists, write_corpus_csv, write_ppp_csv, CorpusConfig};

struct Fixture {
    _dir: tempfile::TempDir,
    input: PathBuf,
    efos: PathBuf,
    pcs: PathBuf,
    ppp: PathBuf,
    budgets: PathBuf,
    root: PathBuf,
}

fn fixture(rows: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig { rows, seed, ..CorpusConfig::default() };
    let input = dir.path().join("contracts.csv");
    write_corpus_csv(std::fs::File::create(&input).unwrap(), &cfg).unwrap();
    let ppp = dir.path().join("ppp.csv");
    write_ppp_csv(std::fs::File::create(&ppp).unwrap(), &cfg).unwrap();
    let (efos_names, pcs_names) = blocklists(&cfg);
    let efos = dir.path().join("efos.txt");
    let pcs = dir.path().join("pcs.txt");
    std::fs::write(&efos, efos_names.join("\n")).unwrap();
    std::fs::write(&pcs, pcs_names.join("\n")).unwrap();
    let budgets = dir.path().join("budgets.csv");
    std::fs::write(&budgets, (2013..=2020).map(|y| format!("{y},5.0e11\n")).collect::<String>()).unwrap();
    let root = dir.path().to_path_buf();
    Fixture { _dir: dir, input, efos, pcs, ppp, budgets, root }
}

fn config(f: &Fixture, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::new(
        f.input.clone(),
        f.efos.clone(),
        f.pcs.clone(),
        f.ppp.clone(),
        out.to_path_buf(),
    );
    cfg.budgets = Some(f.budgets.clone());
    cfg
}

#[test]
fn full_run_writes_all_artifacts() {
    let f = fixture(20_000, 13);
    let out = f.root.join("out");
    let summary = run_pipeline(&config(&f, &out)).unwrap();
    assert!(summary.curated > 19_000);
    assert_eq!(summary.class_counts.values().sum::<usize>(), summary.curated);
    assert!(!summary.verdicts.is_empty());

    for name in [
        "curated.csv",
        "rejections.csv",
        "classified.csv",
        "conflicts.csv",
        "relations.csv",
        "buyers.csv",
        "annotated.csv",
        "compare_classes.csv",
        "period_verdicts.csv",
        "period_boxplots.csv",
        "risk_eval.csv",
        "pr_rad_efos.csv",
        "pr_joint_pcs.csv",
        "regress.csv",
        "context.csv",
        "descriptive.csv",
        "summary.txt",
    ] {
        let path = out.join(name);
        assert!(path.is_file(), "missing artifact {name}");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# procint v"), "{name} lacks a provenance header");
        assert!(text.contains("config sha256="), "{name} lacks a config digest");
    }

    // CDF band plot data exists for at least one class variable
    assert!(out.join("band_nc_Spending.csv").is_file());
}

#[test]
fn cli_exit_codes() {
    let f = fixture(200, 3);
    let bin = env!("CARGO_BIN_EXE_procint");
    let run = |input: &Path, efos: &Path, out: &str| {
        Command::new(bin)
            .args(["ingest", "--input"])
            .arg(input)
            .arg("--efos")
            .arg(efos)
            .arg("--pcs")
            .arg(&f.pcs)
            .arg("--ppp")
            .arg(&f.ppp)
            .arg("--out")
            .arg(f.root.join(out))
            .output()
            .unwrap()
    };

    // happy path
    let ok = run(&f.input, &f.efos, "ok");
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    // ingest succeeds without blocklists, but classify must fail with exit 2
    let missing = Command::new(bin)
        .args(["classify", "--input"])
        .arg(&f.input)
        .arg("--efos")
        .arg(f.root.join("nonexistent.txt"))
        .arg("--pcs")
        .arg(&f.pcs)
        .arg("--ppp")
        .arg(&f.ppp)
        .arg("--out")
        .arg(f.root.join("ok"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2), "{}", String::from_utf8_lossy(&missing.stderr));

    // a corpus where every row is rejected is a data error: exit 1
    let bad = f.root.join("bad.csv");
    std::fs::write(
        &bad,
        "buyer,supplier,go,pc,ct,pt,size,year,beginning_week,eb_weeks,spending,currency\n\
         B,S,BOGUS,N,ADQ,AD,MIC,2015,1,0,10,MXN\n\
         B,S,APF,N,ADQ,AD,MIC,1999,1,0,10,MXN\n",
    )
    .unwrap();
    let rejected = run(&bad, &f.efos, "bad_out");
    assert_eq!(rejected.status.code(), Some(1), "{}", String::from_utf8_lossy(&rejected.stderr));
    let stderr = String::from_utf8_lossy(&rejected.stderr);
    assert!(stderr.contains("rejected"), "stderr: {stderr}");

    // bad config flag value: exit 2
    let badcfg = Command::new(bin)
        .args(["ingest", "--input"])
        .arg(&f.input)
        .arg("--efos")
        .arg(&f.efos)
        .arg("--pcs")
        .arg(&f.pcs)
        .arg("--ppp")
        .arg(&f.ppp)
        .arg("--out")
        .arg(f.root.join("x"))
        .args(["--thresholds", "rad=7"])
        .output()
        .unwrap();
    assert_eq!(badcfg.status.code(), Some(2));
}

#[test]
fn staged_subcommands_resume() {
    let f = fixture(2_000, 5);
    let bin = env!("CARGO_BIN_EXE_procint");
    let out = f.root.join("staged");
    for sub in ["ingest", "classify", "derive", "compare-classes", "compare-periods", "risk-eval", "regress"] {
        let result = Command::new(bin)
            .args([sub, "--input"])
            .arg(&f.input)
            .arg("--efos")
            .arg(&f.efos)
            .arg("--pcs")
            .arg(&f.pcs)
            .arg("--ppp")
            .arg(&f.ppp)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            result.status.success(),
            "{sub} failed: {}",
            String::from_utf8_lossy(&result.stderr)
        );
    }
    assert!(out.join("risk_eval.csv").is_file());
    assert!(out.join("regress.csv").is_file());
}

#[test]
fn synth_subcommand_is_seed_stable() {
    let f = fixture(10, 1);
    let bin = env!("CARGO_BIN_EXE_procint");
    let out_a = f.root.join("synth_a");
    let out_b = f.root.join("synth_b");
    for out in [&out_a, &out_b] {
        let result = Command::new(bin)
            .args(["synth", "--rows", "500", "--seed", "21", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(result.status.success());
    }
    let a = std::fs::read(out_a.join("contracts.csv")).unwrap();
    let b = std::fs::read(out_b.join("contracts.csv")).unwrap();
    assert_eq!(a, b);
}
