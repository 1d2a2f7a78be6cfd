//! Multi-seed base-vs-PGKD comparisons on a labelled corpus.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{exclude, sample_seed_set, split, CorpusError, DatasetSplit, LabeledSample, Taxonomy, DEFAULT_TRAIN_FRACTION};
use crate::distill::{run_pgkd, PgkdConfig, PgkdError, PgkdRun};
use crate::evaluation::{evaluate, ClassificationReport, EvalError};
use crate::student::StudentConfig;
use crate::teacher::{MockOracleBackend, TeacherBackend, TeacherError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pgkd(#[from] PgkdError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

/// Seed for carving a test set out of a single labelled file. Fixed so every
/// run seed sees the same test set.
pub const TEST_HOLDOUT_SEED: u64 = 0x7e57;

/// Splits `samples` into (pool, test) with `test_fraction` of them held out.
pub fn holdout_test(
    samples: &[LabeledSample],
    test_fraction: f64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>), CorpusError> {
    let s = split(samples, 1.0 - test_fraction, TEST_HOLDOUT_SEED)?;
    let mut pool = s.train;
    pool.sort_by_key(|x| x.id);
    let mut test = s.val;
    test.sort_by_key(|x| x.id);
    Ok((pool, test))
}

/// Seed-set split for one seed plus the labelled samples left over.
#[derive(Debug, Clone)]
pub struct SeedSetup {
    pub seed: u64,
    pub split: DatasetSplit,
    /// Pool samples outside the seed set; the oracle teacher draws from here.
    pub reserve: Vec<LabeledSample>,
}

pub fn prepare_seed(pool: &[LabeledSample], seed_size: usize, seed: u64) -> Result<SeedSetup, CorpusError> {
    let seed_set = sample_seed_set(pool, seed_size, seed)?;
    let split = split(&seed_set, DEFAULT_TRAIN_FRACTION, seed)?;
    Ok(SeedSetup { seed, reserve: exclude(pool, &seed_set), split })
}

/// Oracle teacher over the setup's reserve.
pub fn oracle_teacher(taxonomy: &Taxonomy, setup: &SeedSetup, noise: f64) -> Result<MockOracleBackend, TeacherError> {
    MockOracleBackend::new(taxonomy.clone(), &setup.reserve, noise, setup.seed)
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub base: ClassificationReport,
    pub pgkd: ClassificationReport,
    pub run: PgkdRun,
}

/// Runs the loop for one seed (seeding the student and the loop with it) and
/// scores both the step-0 model and the returned model on `test`.
pub fn run_seed(
    taxonomy: &Taxonomy,
    setup: &SeedSetup,
    test: &[LabeledSample],
    student: &StudentConfig,
    pgkd: &PgkdConfig,
    teacher: &mut dyn TeacherBackend,
) -> Result<SeedOutcome, ExperimentError> {
    let student = StudentConfig { seed: setup.seed, ..student.clone() };
    let pgkd = PgkdConfig { seed: setup.seed, ..pgkd.clone() };
    let mut run = run_pgkd(&setup.split, taxonomy, &student, teacher, &pgkd)?;
    let base = evaluate(&run.baseline, test)?.report;
    let pgkd = run.evaluate_test(test)?.clone();
    Ok(SeedOutcome { seed: setup.seed, base, pgkd, run })
}

/// Mean and sample standard deviation (0 for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// Accuracy, macro-F1 and weighted-F1 aggregated over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub weighted_f1: MeanStd,
}

impl MetricSummary {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a ClassificationReport>) -> Self {
        let reports: Vec<_> = reports.into_iter().collect();
        let col = |f: fn(&ClassificationReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            accuracy: col(|r| r.accuracy),
            macro_f1: col(|r| r.macro_f1),
            weighted_f1: col(|r| r.weighted_f1),
        }
    }
}
