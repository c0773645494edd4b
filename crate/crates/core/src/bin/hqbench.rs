//! `hqbench`: benchmark, complementarity, extraction and probe commands.
//!
//! Exit codes: 0 when every run succeeded, 2 when some run failed, 1 on a
//! configuration or I/O error before or after the runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hydra_quant::data::save_split_pair;
use hydra_quant::ensembles::Strategy;
use hydra_quant::error::{Error, Result};
use hydra_quant::harness::{
    cmd_bench, cmd_complementarity, cmd_extract, cmd_oracle_probe, summary_csv, OutputFormat, RunConfig, RunStatus,
    TransformKind,
};
use hydra_quant::synthetic::{generate, SyntheticConfig, SyntheticKind};

#[derive(Parser)]
#[command(name = "hqbench", version, about = "Hydra and Quant ensembles and their complementarity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run strategies over datasets and write one record per run.
    Bench(BenchArgs),
    /// Feature and prediction complementarity of the two bases.
    Complementarity(CommonArgs),
    /// Fit a transform on the training split and write feature blobs.
    Extract(ExtractArgs),
    /// Fit both bases once and report whether an ensemble looks worthwhile.
    OracleProbe(ProbeArgs),
    /// Write a synthetic dataset directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Dataset directories holding train and test files.
    #[arg(long = "data", num_args = 1.., required = true)]
    data: Vec<PathBuf>,
    #[arg(long = "seed", num_args = 1.., default_values_t = [42u64])]
    seed: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// CAWPE accuracy exponent.
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    /// Row cap for feature-level complementarity metrics.
    #[arg(long, default_value_t = 5000)]
    cap: usize,
    /// Wall-clock limit per run, in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the report printed to stdout.
    #[arg(long, default_value = "json")]
    format: String,
    /// Run datasets concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Strategy names, e.g. fc_et or qfeat_hlogit_et; `all` runs every one.
    #[arg(long = "strategy", num_args = 1.., required = true)]
    strategy: Vec<String>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Oracle gain at or above which an ensemble is recommended.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    data: PathBuf,
    /// hydra or quant.
    #[arg(long)]
    transform: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// planted, interaction or offset.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 500)]
    n_test: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn run_config(common: CommonArgs, strategies: Vec<Strategy>) -> Result<RunConfig> {
    Ok(RunConfig {
        datasets: common.data,
        strategies,
        seeds: common.seed,
        folds: common.folds,
        cawpe_alpha: common.alpha,
        cap: common.cap,
        timeout: common.timeout,
        out_dir: common.out,
        format: common.format.parse()?,
        parallel: common.parallel,
        ..RunConfig::default()
    })
}

fn parse_strategies(names: &[String]) -> Result<Vec<Strategy>> {
    let mut out = Vec::new();
    for name in names {
        let parsed: Vec<Strategy> = if name == "all" {
            Strategy::ALL.to_vec()
        } else {
            vec![name.parse()?]
        };
        for s in parsed {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// Runs the command; `Ok(true)` when every run succeeded.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bench(args) => {
            let config = run_config(args.common, parse_strategies(&args.strategy)?)?;
            let records = cmd_bench(&config)?;
            match config.format {
                OutputFormat::Json => {
                    for r in &records {
                        println!("{}", serde_json::to_string(r)?);
                    }
                }
                OutputFormat::Csv => print!("{}", summary_csv(&records)?),
            }
            for r in records.iter().filter(|r| !r.is_ok()) {
                eprintln!(
                    "failed: {} {} seed {}: {}",
                    r.dataset,
                    r.strategy,
                    r.seed,
                    r.error.as_deref().unwrap_or("")
                );
            }
            Ok(records.iter().all(|r| r.is_ok()))
        }
        Command::Complementarity(common) => {
            let config = run_config(common, vec![])?;
            let records = cmd_complementarity(&config)?;
            match config.format {
                OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&records)?),
                OutputFormat::Csv => print!("{}", complementarity_csv(&records)?),
            }
            Ok(records.iter().all(|r| r.status == RunStatus::Ok))
        }
        Command::Extract(args) => {
            let kind: TransformKind = args.transform.parse()?;
            let out = cmd_extract(&args.data, kind, &args.out, args.seed)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(true)
        }
        Command::OracleProbe(args) => {
            let mut config = run_config(args.common, vec![])?;
            config.threshold = args.threshold;
            let results = cmd_oracle_probe(&config)?;
            for r in &results {
                match r {
                    Ok(p) => match config.format {
                        OutputFormat::Json => println!("{}", serde_json::to_string(p)?),
                        OutputFormat::Csv => println!("{}", p.line()),
                    },
                    Err((dataset, e)) => eprintln!("failed: {dataset}: {e}"),
                }
            }
            Ok(results.iter().all(|r| r.is_ok()))
        }
        Command::Synth(args) => {
            let kind: SyntheticKind = args.kind.parse()?;
            let pair = generate(&SyntheticConfig::new(kind, args.n_train, args.n_test, args.seed))?;
            save_split_pair(&pair, &args.out)?;
            println!("{}", args.out.display());
            Ok(true)
        }
    }
}

fn complementarity_csv(records: &[hydra_quant::harness::ComplementarityRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dataset",
        "status",
        "n_test",
        "subsample_n",
        "median_max_cross_corr",
        "first_canonical_corr",
        "error_corr",
        "disagreement",
        "acc_h",
        "acc_q",
        "acc_oracle",
        "oracle_gain",
        "both_wrong_count",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in records {
        let mut row = vec![
            r.dataset.clone(),
            if r.status == RunStatus::Ok { "ok" } else { "failed" }.to_string(),
        ];
        match &r.report {
            Some(rep) => row.extend([
                rep.n_test.to_string(),
                rep.subsample_n.to_string(),
                opt(rep.median_max_cross_corr),
                opt(rep.canonical_corrs.first().copied()),
                opt(rep.error_corr),
                format!("{:.6}", rep.disagreement),
                format!("{:.6}", rep.acc_h),
                format!("{:.6}", rep.acc_q),
                format!("{:.6}", rep.acc_oracle),
                format!("{:.6}", rep.oracle_gain),
                rep.both_wrong_count.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 11)),
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
