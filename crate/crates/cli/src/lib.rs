//! Command-line runner: baseline training, distillation runs with ablations,
//! the seed-set size sweep, zero-shot teacher baselines and manifest reports.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, RunSpec, TeacherKind};

#[derive(Debug, Parser)]
#[command(name = "pgkd", version, about = "Performance-guided distillation of an LLM teacher into a small text classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate the seed-set baseline for every seed.
    TrainBase(CommonArgs),
    /// Run the distillation loop for every seed and compare against the baseline.
    Pgkd {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        ablation: AblationArgs,
    },
    /// Repeat baseline and distillation over several seed-set sizes.
    ScalingSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        ablation: AblationArgs,
        /// Comma-separated seed-set sizes.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        sizes: Vec<usize>,
    },
    /// Classify the test set with the teacher directly.
    ZeroShot(CommonArgs),
    /// Re-render a stored run manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the rendering here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Labelled JSONL pool ({"text", "label"} per line).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Class names, one per line.
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Separate labelled test set; otherwise a fixed share of the dataset is held out.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub seed_size: Option<usize>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub teacher: Option<TeacherKind>,
    /// Label-flip rate of the mock teacher.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Seeds run in parallel.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Also write wall-clock timings and latency rows.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// Leave the validation report out of teacher prompts.
    #[arg(long)]
    pub no_validation: bool,
    /// Leave hard negatives out of teacher prompts.
    #[arg(long)]
    pub no_hard_negatives: bool,
    /// Number of distillation steps after the baseline.
    #[arg(long)]
    pub kd_steps: Option<u32>,
}

impl CommonArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self, ablation: Option<&AblationArgs>) -> Result<RunSpec> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seeds) = &self.seeds {
            config.seeds = seeds.clone();
        }
        if let Some(n) = self.seed_size {
            config.seed_size = n;
        }
        if let Some(kind) = self.teacher {
            config.teacher.kind = kind;
        }
        if let Some(noise) = self.noise {
            config.teacher.noise = noise;
        }
        if let Some(a) = ablation {
            if a.no_validation {
                config.pgkd.use_validation_report = false;
            }
            if a.no_hard_negatives {
                config.pgkd.use_hard_negatives = false;
            }
            if let Some(steps) = a.kd_steps {
                config.pgkd.num_kd_steps = steps;
            }
        }
        config.validate()?;
        Ok(RunSpec {
            dataset: self.dataset.clone(),
            taxonomy: self.taxonomy.clone(),
            test: self.test.clone(),
            out: self.out.clone(),
            workers: self.workers,
            timings: self.timings,
            config,
        })
    }
}

/// Runs a parsed command and returns what it prints.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::TrainBase(common) => commands::train_base(&common.resolve(None)?),
        Command::Pgkd { common, ablation } => commands::pgkd(&common.resolve(Some(&ablation))?),
        Command::ScalingSweep { common, ablation, sizes } => {
            commands::scaling_sweep(&common.resolve(Some(&ablation))?, &sizes)
        }
        Command::ZeroShot(common) => commands::zero_shot(&common.resolve(None)?),
        Command::Report { manifest, out } => {
            let text = commands::report(&manifest)?;
            if let Some(path) = out {
                std::fs::write(&path, &text)?;
            }
            if text.contains("manifest check: FAILED") {
                bail!("{text}");
            }
            Ok(text)
        }
    }
}
