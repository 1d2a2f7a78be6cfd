//! The distillation loop: train, evaluate, ask the teacher for targeted
//! samples, retrain on the grown history, stop once validation loss has not
//! improved for too long.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{stratified_pick, DatasetSplit, LabeledSample, SampleId, Taxonomy};
use crate::evaluation::{
    evaluate, mine_hard_negatives, partition, predict_records, render_report, ClassificationReport, EvalError,
    Evaluation, ScoredSample,
};
use crate::student::{train, train_from, StudentConfig, StudentError, StudentModel};
use crate::teacher::{generate, ParseContext, PromptContext, TeacherBackend, TokenUsage};

#[derive(Debug, Error)]
pub enum PgkdError {
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Student(#[from] StudentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgkdConfig {
    /// KD steps after the baseline (step 0).
    pub num_kd_steps: u32,
    pub patience_limit: usize,
    pub gen_batch_size: usize,
    pub few_shot_k: usize,
    pub correct_k: usize,
    pub incorrect_k: usize,
    pub hard_negative_k: usize,
    pub use_validation_report: bool,
    pub use_hard_negatives: bool,
    /// Extra teacher attempts per step after a failed one.
    pub retries: usize,
    pub seed: u64,
    /// Continue from the previous step's weights instead of retraining from
    /// scratch.
    pub warm_start: bool,
}

impl Default for PgkdConfig {
    fn default() -> Self {
        Self {
            num_kd_steps: 10,
            patience_limit: 5,
            gen_batch_size: 32,
            few_shot_k: 16,
            correct_k: 16,
            incorrect_k: 16,
            hard_negative_k: 16,
            use_validation_report: true,
            use_hard_negatives: true,
            retries: 2,
            seed: 0,
            warm_start: false,
        }
    }
}

impl PgkdConfig {
    pub fn validate(&self) -> Result<(), PgkdError> {
        let counts = [
            ("gen_batch_size", self.gen_batch_size),
            ("few_shot_k", self.few_shot_k),
            ("correct_k", self.correct_k),
            ("incorrect_k", self.incorrect_k),
            ("hard_negative_k", self.hard_negative_k),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(PgkdError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 0 is the baseline trained on the seed split.
    pub step: u32,
    pub val_loss: f64,
    pub report: ClassificationReport,
    pub generated: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub reject_reasons: BTreeMap<String, usize>,
    pub teacher_attempts: usize,
    pub teacher_failure: Option<String>,
    pub usage: TokenUsage,
    pub history_size: usize,
    pub improved: bool,
    pub patience_counter: usize,
    pub student_best_epoch: usize,
    pub student_stopped_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PgkdConfig,
    pub student_config: StudentConfig,
    pub taxonomy: Taxonomy,
    pub seed_train_ids: Vec<SampleId>,
    pub val_ids: Vec<SampleId>,
    pub steps: Vec<StepRecord>,
    pub best_step: u32,
    pub best_val_loss: f64,
    /// Report of the returned model on the validation split.
    pub final_report: ClassificationReport,
    pub stopped_early: bool,
    pub total_usage: TokenUsage,
    pub test_report: Option<ClassificationReport>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn step(&self, step: u32) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.step == step)
    }

    /// Re-derives the stopping decisions and the best step from the recorded
    /// losses and checks them against what the run recorded.
    pub fn verify(&self) -> Result<(), String> {
        let Some(first) = self.steps.first() else {
            return Err("no baseline step".into());
        };
        if first.step != 0 || first.history_size != self.seed_train_ids.len() {
            return Err("first step must be the baseline on the seed split".into());
        }
        let mut best = first.val_loss;
        let mut best_step = 0;
        let mut counter = 0usize;
        let mut stopped = false;
        for (prev, s) in self.steps.iter().zip(&self.steps[1..]) {
            if stopped {
                return Err(format!("step {} recorded after the stopping rule fired", s.step));
            }
            if s.step != prev.step + 1 {
                return Err(format!("step {} does not follow step {}", s.step, prev.step));
            }
            if s.history_size != prev.history_size + s.accepted {
                return Err(format!("history size at step {} does not add up", s.step));
            }
            let improved = s.val_loss <= best;
            if improved {
                best = s.val_loss;
                best_step = s.step;
                counter = 0;
            } else {
                counter += 1;
                stopped = counter > self.config.patience_limit;
            }
            if s.improved != improved || s.patience_counter != counter {
                return Err(format!("patience bookkeeping at step {} disagrees with the losses", s.step));
            }
        }
        let last = self.steps.last().map_or(0, |s| s.step);
        if !stopped && last != self.config.num_kd_steps {
            return Err(format!("run ended at step {last} without the stopping rule firing"));
        }
        if stopped != self.stopped_early {
            return Err("stopped_early flag disagrees with the losses".into());
        }
        if best_step != self.best_step || best.to_bits() != self.best_val_loss.to_bits() {
            return Err(format!(
                "best step {} ({}) recorded, losses give {} ({})",
                self.best_step, self.best_val_loss, best_step, best
            ));
        }
        let min = self.steps.iter().map(|s| s.val_loss).fold(f64::INFINITY, f64::min);
        if min.to_bits() != self.best_val_loss.to_bits() {
            return Err("best loss is not the minimum recorded loss".into());
        }
        if self.step(best_step).map(|s| &s.report) != Some(&self.final_report) {
            return Err("final report is not the best step's report".into());
        }
        Ok(())
    }

    /// One tab-separated row per step, for plotting.
    pub fn metrics_tsv(&self) -> String {
        let mut out = String::from(
            "step\tval_loss\taccuracy\tmacro_f1\tweighted_f1\tgenerated\taccepted\trejected\thistory_size\tinput_tokens\toutput_tokens\timproved\tpatience_counter\n",
        );
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.step,
                s.val_loss,
                s.report.accuracy,
                s.report.macro_f1,
                s.report.weighted_f1,
                s.generated,
                s.accepted,
                s.rejected,
                s.history_size,
                s.usage.input_tokens,
                s.usage.output_tokens,
                s.improved,
                s.patience_counter
            );
        }
        out
    }
}

/// Wall-clock seconds per step, kept apart from the manifest so manifests of
/// identical runs stay byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub step: u32,
    pub teacher_secs: f64,
    pub train_secs: f64,
    pub eval_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub steps: Vec<StepTiming>,
    pub total_secs: f64,
}

#[derive(Debug, Clone)]
pub struct PgkdRun {
    pub model: StudentModel,
    /// The step-0 model trained on the seed split alone.
    pub baseline: StudentModel,
    pub manifest: RunManifest,
    /// Every prompt sent to the teacher, in step order.
    pub prompts: Vec<String>,
    /// Seed training samples followed by every accepted generated sample.
    pub history: Vec<LabeledSample>,
    pub timings: RunTimings,
}

impl PgkdRun {
    /// Evaluates the returned model on a held-out test set and records the
    /// report in the manifest.
    pub fn evaluate_test(&mut self, test: &[LabeledSample]) -> Result<&ClassificationReport, PgkdError> {
        let eval = evaluate(&self.model, test)?;
        Ok(self.manifest.test_report.insert(eval.report))
    }
}

/// Stream ids for per-step seeds.
const FEW_SHOT_STREAM: u64 = 1;
const CORRECT_STREAM: u64 = 2;
const INCORRECT_STREAM: u64 = 3;

/// SplitMix64 finaliser over (seed, stream, step).
pub fn derive_seed(seed: u64, stream: u64, step: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(step.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keeps validation texts out of prompts: a sample is shown to the teacher
/// only if its text contains no validation text.
struct PrivacyGuard<'a> {
    val_texts: Vec<&'a str>,
}

impl<'a> PrivacyGuard<'a> {
    fn new(val: &'a [LabeledSample]) -> Self {
        Self {
            val_texts: val.iter().map(|s| s.text.as_str()).collect(),
        }
    }

    fn allows(&self, text: &str) -> bool {
        !self.val_texts.iter().any(|v| text.contains(v))
    }
}

fn scored_pick(items: &[ScoredSample], k: usize, seed: u64) -> Vec<ScoredSample> {
    stratified_pick(items, k, seed, |s| s.sample.label, |s| s.sample.id)
}

struct Trained {
    model: StudentModel,
    eval: Evaluation,
    best_epoch: usize,
    stopped_epoch: usize,
    train_secs: f64,
    eval_secs: f64,
}

fn fit(
    init: Option<&StudentModel>,
    history: &[LabeledSample],
    split: &DatasetSplit,
    taxonomy: &Taxonomy,
    config: &StudentConfig,
) -> Result<Trained, PgkdError> {
    let t = Instant::now();
    let (model, log) = match init {
        Some(m) => train_from(m.clone(), history, &split.val, config)?,
        None => train(history, &split.val, taxonomy, config)?,
    };
    let train_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let eval = evaluate(&model, &split.val)?;
    Ok(Trained {
        model,
        eval,
        best_epoch: log.best_epoch,
        stopped_epoch: log.stopped_epoch,
        train_secs,
        eval_secs: t.elapsed().as_secs_f64(),
    })
}

/// Runs the loop. Step 0 trains on the seed split; each later step mines the
/// current model's mistakes on the history, asks the teacher for a batch,
/// appends what it accepts and retrains. A step that improves (or matches) the
/// best validation loss resets the patience counter and becomes the returned
/// model; the run stops once the counter exceeds `patience_limit`.
pub fn run_pgkd(
    split: &DatasetSplit,
    taxonomy: &Taxonomy,
    student_config: &StudentConfig,
    teacher: &mut dyn TeacherBackend,
    config: &PgkdConfig,
) -> Result<PgkdRun, PgkdError> {
    let run_start = Instant::now();
    config.validate()?;
    student_config.validate()?;
    split.check().map_err(PgkdError::InvalidSplit)?;
    let k = taxonomy.len();
    if let Some(bad) = split.train.iter().chain(&split.val).find(|s| s.label >= k) {
        return Err(StudentError::InvalidLabel { id: bad.id, label: bad.label }.into());
    }

    let guard = PrivacyGuard::new(&split.val);
    let shot_pool: Vec<LabeledSample> = split.train.iter().filter(|s| guard.allows(&s.text)).cloned().collect();
    let mut history = split.train.clone();
    let mut known_texts: HashSet<String> = history.iter().chain(&split.val).map(|s| s.text.clone()).collect();
    let mut next_id: SampleId = history.iter().chain(&split.val).map(|s| s.id + 1).max().unwrap_or(0);

    let base = fit(None, &history, split, taxonomy, student_config)?;
    let mut timings = RunTimings {
        steps: vec![StepTiming { step: 0, teacher_secs: 0.0, train_secs: base.train_secs, eval_secs: base.eval_secs }],
        total_secs: 0.0,
    };
    let mut steps = vec![StepRecord {
        step: 0,
        val_loss: base.eval.loss,
        report: base.eval.report.clone(),
        generated: 0,
        accepted: 0,
        rejected: 0,
        reject_reasons: BTreeMap::new(),
        teacher_attempts: 0,
        teacher_failure: None,
        usage: TokenUsage::default(),
        history_size: history.len(),
        improved: true,
        patience_counter: 0,
        student_best_epoch: base.best_epoch,
        student_stopped_epoch: base.stopped_epoch,
    }];
    let mut best_loss = base.eval.loss;
    let mut best_step = 0u32;
    let mut best_model = base.model.clone();
    let mut best_report = base.eval.report.clone();
    let baseline = base.model.clone();
    let mut current = base.model;
    let mut current_report = base.eval.report;
    let mut patience_counter = 0usize;
    let mut stopped_early = false;
    let mut prompts = Vec::new();
    let mut total_usage = TokenUsage::default();

    for step in 1..=config.num_kd_steps {
        let t = Instant::now();
        let records = predict_records(&current, &history);
        let (correct, incorrect) = partition(&records, &history)?;
        let correct: Vec<ScoredSample> = correct.into_iter().filter(|s| guard.allows(&s.sample.text)).collect();
        let incorrect: Vec<ScoredSample> = incorrect.into_iter().filter(|s| guard.allows(&s.sample.text)).collect();
        let hard_negatives = if config.use_hard_negatives {
            let allowed: HashSet<SampleId> =
                history.iter().filter(|s| guard.allows(&s.text)).map(|s| s.id).collect();
            let shown: Vec<_> = records.iter().filter(|r| allowed.contains(&r.sample_id)).cloned().collect();
            Some(mine_hard_negatives(&shown, &history, config.hard_negative_k)?)
        } else {
            None
        };
        let s = u64::from(step);
        let ctx = PromptContext {
            taxonomy: taxonomy.clone(),
            few_shot: stratified_pick(&shot_pool, config.few_shot_k, derive_seed(config.seed, FEW_SHOT_STREAM, s), |x| x.label, |x| x.id),
            gen_batch_size: config.gen_batch_size,
            report_text: config.use_validation_report.then(|| render_report(&current_report, taxonomy)),
            correct: scored_pick(&correct, config.correct_k, derive_seed(config.seed, CORRECT_STREAM, s)),
            incorrect: scored_pick(&incorrect, config.incorrect_k, derive_seed(config.seed, INCORRECT_STREAM, s)),
            hard_negatives,
        };
        let parse = ParseContext { taxonomy, step, known_texts: &known_texts, first_id: next_id };
        let batch = generate(teacher, &ctx, config.retries, &parse);
        let teacher_secs = t.elapsed().as_secs_f64();

        let mut reject_reasons = BTreeMap::new();
        for r in &batch.rejected {
            *reject_reasons.entry(r.reason.kind().to_string()).or_insert(0) += 1;
        }
        next_id += batch.accepted.len() as SampleId;
        known_texts.extend(batch.accepted.iter().map(|s| s.text.clone()));
        history.extend(batch.accepted.iter().cloned());
        total_usage += batch.usage;
        prompts.push(batch.prompt.clone());

        let trained = fit(config.warm_start.then_some(&current), &history, split, taxonomy, student_config)?;
        let new_loss = trained.eval.loss;
        let improved = new_loss <= best_loss;
        if improved {
            best_loss = new_loss;
            best_step = step;
            best_model = trained.model.clone();
            best_report = trained.eval.report.clone();
            patience_counter = 0;
        } else {
            patience_counter += 1;
        }
        steps.push(StepRecord {
            step,
            val_loss: new_loss,
            report: trained.eval.report.clone(),
            generated: batch.generated(),
            accepted: batch.accepted.len(),
            rejected: batch.rejected.len(),
            reject_reasons,
            teacher_attempts: batch.attempts,
            teacher_failure: batch.failure,
            usage: batch.usage,
            history_size: history.len(),
            improved,
            patience_counter,
            student_best_epoch: trained.best_epoch,
            student_stopped_epoch: trained.stopped_epoch,
        });
        timings.steps.push(StepTiming {
            step,
            teacher_secs,
            train_secs: trained.train_secs,
            eval_secs: trained.eval_secs,
        });
        current = trained.model;
        current_report = trained.eval.report;
        if patience_counter > config.patience_limit {
            stopped_early = true;
            break;
        }
    }

    let manifest = RunManifest {
        config: config.clone(),
        student_config: student_config.clone(),
        taxonomy: taxonomy.clone(),
        seed_train_ids: split.train.iter().map(|s| s.id).collect(),
        val_ids: split.val.iter().map(|s| s.id).collect(),
        steps,
        best_step,
        best_val_loss: best_loss,
        final_report: best_report,
        stopped_early,
        total_usage,
        test_report: None,
    };
    timings.total_secs = run_start.elapsed().as_secs_f64();
    Ok(PgkdRun { model: best_model, baseline, manifest, prompts, history, timings })
}
