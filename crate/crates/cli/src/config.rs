use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use pgkd_core::corpus::DEFAULT_SEED_SET_SIZE;
use pgkd_core::cost::Pricing;
use pgkd_core::distill::PgkdConfig;
use pgkd_core::student::StudentConfig;
use pgkd_core::teacher::HttpBackendConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    /// Label-flip rate of the mock teacher.
    pub noise: f64,
    /// Makes the mock teacher answer every prompt with this text.
    pub constant_response: Option<String>,
    pub http: HttpBackendConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            kind: TeacherKind::Mock,
            noise: 0.0,
            constant_response: None,
            http: HttpBackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingConfig {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
    /// Hourly price of the machine the student runs on.
    pub student_hourly_rate: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            input_per_1k: 0.003,
            output_per_1k: 0.015,
            student_hourly_rate: 0.768,
        }
    }
}

impl PricingConfig {
    pub fn teacher(&self) -> Pricing {
        Pricing {
            input_per_1k: self.input_per_1k,
            output_per_1k: self.output_per_1k,
        }
    }
}

/// Everything that shapes a run's results. Paths and worker counts live
/// elsewhere so the hash only changes when results can.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed_size: usize,
    pub seeds: Vec<u64>,
    /// Share of the dataset held out for testing when no test file is given.
    pub test_fraction: f64,
    pub student: StudentConfig,
    pub pgkd: PgkdConfig,
    pub teacher: TeacherConfig,
    pub pricing: PricingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed_size: DEFAULT_SEED_SET_SIZE,
            seeds: vec![0, 1, 2, 3, 4],
            test_fraction: 0.2,
            student: StudentConfig::default(),
            pgkd: PgkdConfig::default(),
            teacher: TeacherConfig::default(),
            pricing: PricingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if self.seed_size == 0 {
            bail!("seed-size must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction must lie strictly between 0 and 1");
        }
        if !(0.0..=1.0).contains(&self.teacher.noise) {
            bail!("teacher noise must lie in [0, 1]");
        }
        self.student.validate()?;
        self.pgkd.validate()?;
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable");
        Sha256::digest(json.as_bytes())[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A resolved invocation: data locations, output directory and config.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub dataset: PathBuf,
    pub taxonomy: PathBuf,
    pub test: Option<PathBuf>,
    pub out: PathBuf,
    pub workers: usize,
    /// Also write wall-clock timings and latency measurements (these differ
    /// between otherwise identical runs).
    pub timings: bool,
    pub config: RunConfig,
}

impl RunSpec {
    pub fn header(&self, command: &str) -> String {
        let seeds: Vec<String> = self.config.seeds.iter().map(u64::to_string).collect();
        format!(
            "# {command} | config {} | seeds {} | seed-size {}",
            self.config.hash(),
            seeds.join(","),
            self.config.seed_size
        )
    }
}
