//! Teacher token cost and student inference latency accounting.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::distill::RunManifest;
use crate::student::StudentModel;
use crate::teacher::TokenUsage;

/// Inference batch used for latency measurements.
pub const INFERENCE_BATCH: usize = 64;

/// Dollar rates per 1000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl Pricing {
    pub fn cost(&self, usage: TokenUsage) -> f64 {
        usage.input_tokens as f64 * self.input_per_1k / 1000.0
            + usage.output_tokens as f64 * self.output_per_1k / 1000.0
    }
}

/// Timing of one inference batch on some hardware with an hourly price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeasurement {
    pub batch_size: usize,
    pub latency_secs: f64,
    pub hourly_rate: f64,
}

impl BatchMeasurement {
    pub fn cost(&self) -> f64 {
        self.latency_secs * self.hourly_rate / 3600.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub method: String,
    pub batch: usize,
    pub latency_secs: Option<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLatency {
    pub teacher_usage: TokenUsage,
    pub teacher_calls: usize,
    /// Total teacher spend for the distillation run.
    pub teacher_cost: f64,
    pub rows: Vec<CostRow>,
}

/// Teacher spend from the manifest's token tallies, plus a student inference
/// row when a batch measurement is supplied.
pub fn estimate_cost_latency(
    manifest: &RunManifest,
    pricing: &Pricing,
    measured: Option<&BatchMeasurement>,
) -> CostLatency {
    let usage = manifest.steps.iter().fold(TokenUsage::default(), |acc, s| acc + s.usage);
    let calls = manifest.steps.iter().map(|s| s.teacher_attempts).sum();
    let teacher_cost = pricing.cost(usage);
    let mut rows = vec![CostRow {
        method: "PGKD distillation (teacher)".into(),
        batch: manifest.config.gen_batch_size,
        latency_secs: None,
        cost: teacher_cost,
    }];
    if let Some(m) = measured {
        rows.push(CostRow {
            method: "student + PGKD".into(),
            batch: m.batch_size,
            latency_secs: Some(m.latency_secs),
            cost: m.cost(),
        });
    }
    CostLatency { teacher_usage: usage, teacher_calls: calls, teacher_cost, rows }
}

/// Row for LLM zero-shot classification of one batch.
pub fn zero_shot_row(usage: TokenUsage, pricing: &Pricing, batch: usize, latency_secs: Option<f64>) -> CostRow {
    CostRow {
        method: "teacher zero-shot".into(),
        batch,
        latency_secs,
        cost: pricing.cost(usage),
    }
}

pub fn render_cost_table(rows: &[CostRow]) -> String {
    let mut out = String::from("| Method | Batch | Latency (s) | Cost ($) |\n|---|---:|---:|---:|\n");
    for r in rows {
        let latency = r.latency_secs.map_or_else(|| "-".to_string(), |l| format!("{l:.4}"));
        let _ = writeln!(out, "| {} | {} | {} | {:.4} |", r.method, r.batch, latency, r.cost);
    }
    out
}

/// Median wall-clock seconds to classify one batch of `texts`, over
/// `repeats` timed passes.
pub fn measure_batch_latency(model: &StudentModel, texts: &[String], repeats: usize) -> f64 {
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            for text in texts {
                std::hint::black_box(model.predict_proba(text));
            }
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}
