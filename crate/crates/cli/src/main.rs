//! Command-line experiment runner.
//!
//! Subcommands map to the library's experiment surfaces:
//! `experiment` (segmenter/strategy comparison tables and distribution
//! data), `sweep` (EOS threshold x silence-length threshold grid), `oracle`
//! (SL50-matched oracle-WER study) and `report` (side-by-side error
//! analysis). Configuration comes from an optional TOML file plus repeatable
//! `--set dotted.key=value` overrides; every output is a deterministic
//! function of (config, seed).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use segstream_core::experiment::{
    run_error_analysis, run_experiment, run_oracle_study, run_sweep, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "segstream", version, about = "Streaming two-pass EOS decoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the segmenter and strategy comparison on the configured corpus.
    Experiment(RunArgs),
    /// Sweep WER over the EOS-threshold x silence-length-threshold grid.
    Sweep(RunArgs),
    /// Oracle-WER study with SL50-matched segmenters.
    Oracle(RunArgs),
    /// Per-utterance error analysis diff of the VAD and E2E segmenters.
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV and report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. --set corpus.num_utterances=20 or
    /// --set run.pipeline.strategy="e1_dummy_zero". Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .with_context(|| format!("--set expects KEY=VALUE, got '{raw}'"))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("--set key '{key}' has an empty path component");
    }
    // Interpret the value as a TOML literal; fall back to a plain string.
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(value.to_string()),
    };
    Ok((path, parsed))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let mut table = root;
    for key in &path[..path.len() - 1] {
        table = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("config key '{key}' is not a table"))?;
    }
    table.insert(path[path.len() - 1].clone(), value);
    Ok(())
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut table: toml::Table = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => toml::Table::new(),
    };
    for raw in &args.set {
        let (path, value) = parse_override(raw)?;
        apply_override(&mut table, &path, value)?;
    }
    let mut cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .context("config does not match the experiment schema")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.apply_seed();
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (args, files) = match &cli.command {
        Command::Experiment(args) => {
            let cfg = load_config(args)?;
            (args, run_experiment(&cfg, &args.out)?)
        }
        Command::Sweep(args) => {
            let cfg = load_config(args)?;
            (args, run_sweep(&cfg, &args.out)?)
        }
        Command::Oracle(args) => {
            let cfg = load_config(args)?;
            let study = segstream_core::experiment::oracle_study(&cfg)?;
            if study.match_flagged {
                eprintln!(
                    "warning: no EOS threshold matched the VAD SL50 within tolerance \
                     (vad {:.2}s vs e2e {:.2}s at threshold {:.2}); reporting closest",
                    study.vad_sl50, study.e2e_sl50, study.matched_threshold
                );
            }
            (args, run_oracle_study(&cfg, &args.out)?)
        }
        Command::Report(args) => {
            let cfg = load_config(args)?;
            (args, run_error_analysis(&cfg, &args.out)?)
        }
    };
    for f in &files {
        println!("wrote {}", f.display());
    }
    let _ = args;
    Ok(())
}
