//! Command-line front end: `predict`, `simulate` and `compare`.

pub mod compare;
pub mod config;
pub mod output;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{defaulted_keys, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "clusterlab", version, about = "Cluster statistics of returns to shrinking targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic cluster laws and counting distributions.
    Predict(RunArgs),
    /// Monte Carlo estimates for every schedule row.
    Simulate(RunArgs),
    /// Chi-square test of a simulated counting law; exit 1 below the threshold.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, env = "CLUSTERLAB_CONFIG")]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long, env = "CLUSTERLAB_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, env = "CLUSTERLAB_WORKERS")]
    pub workers: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long, env = "CLUSTERLAB_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Prediction (or simulation) file giving the model law.
    pub model: PathBuf,
    /// Simulation file giving the sample.
    pub sample: PathBuf,
    #[arg(long, env = "CLUSTERLAB_THRESHOLD", default_value_t = 0.01)]
    pub threshold: f64,
    /// Directory for `compare.json`.
    #[arg(long, env = "CLUSTERLAB_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    StatisticalFail,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Reads the config and applies overrides: flags, then environment, then
/// file.
pub fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, Vec<String>)> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text).with_context(|| format!("in config {}", args.config.display()))?;
    let raw: toml::Value = toml::from_str(&text)?;
    let resolved = toml::Value::try_from(&cfg)?;
    let mut defaulted: Vec<String> =
        defaulted_keys(&raw, &resolved).into_iter().filter(|k| k != "workers").collect();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = &args.out {
        cfg.outputs.dir = out.clone();
        defaulted.retain(|k| k != "outputs" && k != "outputs.dir");
    }
    Ok((cfg, defaulted))
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build()?)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Predict(args) => {
            let (cfg, defaulted) = load_config(&args)?;
            let records = pool(cfg.workers)?.install(|| pipeline::predict(&cfg))?;
            for r in &records {
                println!("row {}: extremal index {:.6} ({})", r.row, r.extremal_index, r.basis);
            }
            output::write_run(&cfg.outputs.dir, "predict", &cfg, defaulted, &records, &[])?;
            Ok(Outcome::Pass)
        }
        Command::Simulate(args) => {
            let (cfg, defaulted) = load_config(&args)?;
            let records = pool(cfg.workers)?.install(|| pipeline::simulate(&cfg))?;
            for r in &records {
                let c = &r.cluster;
                println!(
                    "row {}: size {} K={} entries {} extremal index {:.5} ± {:.5}{}",
                    r.row,
                    r.size,
                    r.k,
                    c.n_entries,
                    c.extremal_index,
                    c.extremal_index_se,
                    if c.insufficient { " (insufficient)" } else { "" }
                );
            }
            output::write_run(&cfg.outputs.dir, "simulate", &cfg, defaulted, &[], &records)?;
            Ok(Outcome::Pass)
        }
        Command::Compare(args) => {
            let (report, table) = compare::compare(&args.model, &args.sample, args.threshold)?;
            print!("{table}");
            println!(
                "TV {:.6}  chi-square {:.3} on {} dof  p = {:.4e}  ({})",
                report.gof.tv_distance,
                report.gof.chi_square,
                report.gof.dof,
                report.gof.p_value,
                if report.pass { "pass" } else { "fail" }
            );
            if let Some(dir) = &args.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            }
            Ok(if report.pass { Outcome::Pass } else { Outcome::StatisticalFail })
        }
    }
}

/// Parses `args` and runs, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => EXIT_PASS,
        Ok(Outcome::StatisticalFail) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
