//! Classification metrics, validation reports, correct/incorrect partitioning
//! and confidence-ranked hard-negative mining.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClassId, LabeledSample, SampleId, Taxonomy};
use crate::student::{self, Classifier, StudentError};

/// Default number of hard negatives placed in a prompt.
pub const DEFAULT_HARD_NEGATIVES: usize = 16;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record refers to unknown sample id {0}")]
    DanglingId(SampleId),
    #[error(transparent)]
    Student(#[from] StudentError),
    #[error("report text: {0}")]
    ReportFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: SampleId,
    pub true_label: ClassId,
    pub predicted_label: ClassId,
    /// Probability of the predicted class.
    pub confidence: f64,
}

impl PredictionRecord {
    pub fn from_proba(sample: &LabeledSample, proba: &[f64]) -> Self {
        let (predicted_label, confidence) = argmax(proba);
        Self {
            sample_id: sample.id,
            true_label: sample.label,
            predicted_label,
            confidence,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted_label
    }
}

/// Index and value of the maximum; ties go to the lower index.
pub fn argmax(v: &[f64]) -> (ClassId, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class precision/recall/F1/support over every taxonomy class, plus
/// accuracy and macro/weighted F1. Zero denominators yield 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub total: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassificationReport {
    /// Builds the report from `(true, predicted)` pairs. Labels must be
    /// `< num_classes`.
    pub fn from_pairs(num_classes: usize, pairs: impl IntoIterator<Item = (ClassId, ClassId)>) -> Self {
        let mut tp = vec![0usize; num_classes];
        let mut predicted = vec![0usize; num_classes];
        let mut support = vec![0usize; num_classes];
        let mut total = 0;
        for (t, p) in pairs {
            support[t] += 1;
            predicted[p] += 1;
            if t == p {
                tp[t] += 1;
            }
            total += 1;
        }
        let per_class: Vec<ClassMetrics> = (0..num_classes)
            .map(|c| {
                let precision = ratio(tp[c], predicted[c]);
                let recall = ratio(tp[c], support[c]);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support: support[c],
                }
            })
            .collect();
        let correct: usize = tp.iter().sum();
        let macro_f1 = if num_classes == 0 {
            0.0
        } else {
            per_class.iter().map(|m| m.f1).sum::<f64>() / num_classes as f64
        };
        let weighted_f1 = if total == 0 {
            0.0
        } else {
            per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / total as f64
        };
        Self {
            per_class,
            accuracy: ratio(correct, total),
            macro_f1,
            weighted_f1,
            total,
        }
    }

    pub fn from_records(num_classes: usize, records: &[PredictionRecord]) -> Self {
        Self::from_pairs(num_classes, records.iter().map(|r| (r.true_label, r.predicted_label)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub report: ClassificationReport,
    pub records: Vec<PredictionRecord>,
}

pub fn predict_records<C: Classifier + ?Sized>(model: &C, data: &[LabeledSample]) -> Vec<PredictionRecord> {
    data.iter()
        .map(|s| PredictionRecord::from_proba(s, &model.predict_proba(&s.text)))
        .collect()
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, data: &[LabeledSample]) -> Result<Evaluation, EvalError> {
    if data.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let loss = student::loss(model, data)?;
    let records = predict_records(model, data);
    let report = ClassificationReport::from_records(model.taxonomy().len(), &records);
    Ok(Evaluation { loss, report, records })
}

/// A sample together with what the student made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample: LabeledSample,
    pub predicted: ClassId,
    pub confidence: f64,
}

fn index(samples: &[LabeledSample]) -> HashMap<SampleId, &LabeledSample> {
    samples.iter().map(|s| (s.id, s)).collect()
}

fn resolve(
    idx: &HashMap<SampleId, &LabeledSample>,
    r: &PredictionRecord,
) -> Result<ScoredSample, EvalError> {
    let s = idx.get(&r.sample_id).ok_or(EvalError::DanglingId(r.sample_id))?;
    Ok(ScoredSample {
        sample: (*s).clone(),
        predicted: r.predicted_label,
        confidence: r.confidence,
    })
}

/// Splits records into correctly and incorrectly classified samples, each
/// sorted by sample id.
pub fn partition(
    records: &[PredictionRecord],
    samples: &[LabeledSample],
) -> Result<(Vec<ScoredSample>, Vec<ScoredSample>), EvalError> {
    let idx = index(samples);
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for r in records {
        let s = resolve(&idx, r)?;
        if r.is_correct() {
            correct.push(s);
        } else {
            incorrect.push(s);
        }
    }
    correct.sort_by_key(|s| s.sample.id);
    incorrect.sort_by_key(|s| s.sample.id);
    Ok((correct, incorrect))
}

/// Top-`k` misclassified samples by confidence, highest first; ties go to the
/// lower sample id.
pub fn mine_hard_negatives(
    records: &[PredictionRecord],
    samples: &[LabeledSample],
    k: usize,
) -> Result<Vec<ScoredSample>, EvalError> {
    let mut wrong: Vec<&PredictionRecord> = records.iter().filter(|r| !r.is_correct()).collect();
    wrong.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.sample_id.cmp(&b.sample_id))
    });
    let idx = index(samples);
    wrong.into_iter().take(k).map(|r| resolve(&idx, r)).collect()
}

const SUMMARY_ROWS: [&str; 3] = ["accuracy", "macro avg", "weighted avg"];

fn name_width(taxonomy: &Taxonomy) -> usize {
    taxonomy
        .names()
        .iter()
        .map(|n| n.chars().count())
        .chain(SUMMARY_ROWS.iter().map(|n| n.len()))
        .max()
        .unwrap_or(0)
}

/// Fixed-layout text table: one row per class, then accuracy, macro and
/// weighted F1 rows. Values use three decimals.
pub fn render_report(report: &ClassificationReport, taxonomy: &Taxonomy) -> String {
    let w = name_width(taxonomy);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<w$}  {:>9}  {:>9}  {:>9}  {:>7}",
        "class", "precision", "recall", "f1-score", "support"
    );
    for (c, m) in report.per_class.iter().enumerate() {
        let name = taxonomy.name(c).unwrap_or("?");
        let _ = writeln!(
            out,
            "{:<w$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7}",
            name, m.precision, m.recall, m.f1, m.support
        );
    }
    out.push('\n');
    for (label, value) in SUMMARY_ROWS
        .iter()
        .zip([report.accuracy, report.macro_f1, report.weighted_f1])
    {
        let _ = writeln!(out, "{:<w$}  {:>9}  {:>9}  {:>9.3}  {:>7}", label, "", "", value, report.total);
    }
    out
}

/// Reads back a table produced by [`render_report`]. Values carry the
/// rendering's three-decimal rounding. Trailing text after the weighted-F1
/// row is ignored.
pub fn parse_report(text: &str, taxonomy: &Taxonomy) -> Result<ClassificationReport, EvalError> {
    let bad = |m: String| EvalError::ReportFormat(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
    if !header.trim_start().starts_with("class") || !header.contains("f1-score") {
        return Err(bad("unexpected header".into()));
    }
    let mut per_class = Vec::with_capacity(taxonomy.len());
    for c in 0..taxonomy.len() {
        let line = lines.next().ok_or_else(|| bad(format!("missing row for class {c}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(bad(format!("short row {line:?}")));
        }
        let n = fields.len();
        let name = fields[..n - 4].join(" ");
        let expected = taxonomy.name(c).unwrap_or_default();
        if name != expected.split_whitespace().collect::<Vec<_>>().join(" ") {
            return Err(bad(format!("row {c} is {name:?}, expected {expected:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        per_class.push(ClassMetrics {
            precision: num(fields[n - 4])?,
            recall: num(fields[n - 3])?,
            f1: num(fields[n - 2])?,
            support: fields[n - 1].parse().map_err(|e| bad(format!("support: {e}")))?,
        });
    }
    match lines.next() {
        Some(l) if l.trim().is_empty() => {}
        _ => return Err(bad("missing separator line".into())),
    }
    let mut summary = [0.0; 3];
    let mut total = 0;
    for (slot, label) in summary.iter_mut().zip(SUMMARY_ROWS) {
        let line = lines.next().ok_or_else(|| bad(format!("missing {label} row")))?;
        let rest = line
            .trim_start()
            .strip_prefix(label)
            .ok_or_else(|| bad(format!("expected {label} row, got {line:?}")))?;
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(bad(format!("malformed {label} row")));
        }
        *slot = fields[0].parse().map_err(|e| bad(format!("{label}: {e}")))?;
        total = fields[1].parse().map_err(|e| bad(format!("{label} support: {e}")))?;
    }
    Ok(ClassificationReport {
        per_class,
        accuracy: summary[0],
        macro_f1: summary[1],
        weighted_f1: summary[2],
        total,
    })
}
