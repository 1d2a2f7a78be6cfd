//! Deterministic stand-ins for an LLM teacher.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{ClassId, LabeledSample, Taxonomy};
use crate::evaluation::parse_report;

use super::prompt::{REPORT_LEAD, ZERO_SHOT_TEXT_LEAD};
use super::{BackendError, Completion, TeacherBackend, TeacherError};

const REQUEST_MARKER: &str = "please generate ";

/// Oracle teacher backed by a held-out reserve of labelled texts.
///
/// For each generation prompt it reads the requested batch size and the
/// embedded validation report, allocates the batch across classes in
/// proportion to `1 - F1` (uniformly when the prompt carries no report),
/// draws texts from the per-class reserves without replacement and flips
/// each label to a random wrong class with probability `noise`.
#[derive(Debug, Clone)]
pub struct MockOracleBackend {
    taxonomy: Taxonomy,
    reserves: Vec<VecDeque<String>>,
    noise: f64,
    rng: ChaCha8Rng,
    calls: usize,
}

#[derive(Serialize)]
struct Record<'a> {
    text: &'a str,
    label: &'a str,
}

impl MockOracleBackend {
    pub fn new(
        taxonomy: Taxonomy,
        pool: &[LabeledSample],
        noise: f64,
        seed: u64,
    ) -> Result<Self, TeacherError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut by_class: Vec<Vec<String>> = vec![Vec::new(); taxonomy.len()];
        for s in pool {
            if let Some(slot) = by_class.get_mut(s.label) {
                slot.push(s.text.clone());
            }
        }
        if let Some(c) = by_class.iter().position(Vec::is_empty) {
            return Err(TeacherError::PoolMissingClass(c));
        }
        let reserves = by_class
            .into_iter()
            .map(|mut texts| {
                texts.shuffle(&mut rng);
                VecDeque::from(texts)
            })
            .collect();
        Ok(Self {
            taxonomy,
            reserves,
            noise: noise.clamp(0.0, 1.0),
            rng,
            calls: 0,
        })
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn remaining(&self, class: ClassId) -> usize {
        self.reserves.get(class).map_or(0, VecDeque::len)
    }

    /// Per-class counts summing to `n`: largest-remainder rounding of
    /// `n * w_c / sum(w)`, remainder ties broken in a seeded order.
    pub fn allocate(&mut self, n: usize, weights: &[f64]) -> Vec<usize> {
        let k = weights.len();
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = if total > 0.0 {
            weights.to_vec()
        } else {
            vec![1.0; k]
        };
        let total: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = n - counts.iter().sum::<usize>();
        let mut order: Vec<ClassId> = (0..k).collect();
        order.shuffle(&mut self.rng);
        // Stable sort keeps the shuffled order among equal remainders.
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        for c in order {
            if left == 0 {
                break;
            }
            counts[c] += 1;
            left -= 1;
        }
        counts
    }

    fn class_weights(&self, prompt: &str) -> Vec<f64> {
        let uniform = vec![1.0; self.taxonomy.len()];
        let Some(at) = prompt.find(REPORT_LEAD) else {
            return uniform;
        };
        let body = prompt[at + REPORT_LEAD.len()..].trim_start_matches('\n');
        match parse_report(body, &self.taxonomy) {
            Ok(report) => report.per_class.iter().map(|m| (1.0 - m.f1).max(0.0)).collect(),
            Err(_) => uniform,
        }
    }
}

fn requested_count(prompt: &str) -> Option<usize> {
    let at = prompt.find(REQUEST_MARKER)? + REQUEST_MARKER.len();
    let digits: String = prompt[at..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

impl TeacherBackend for MockOracleBackend {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError> {
        self.calls += 1;
        let n = requested_count(prompt)
            .ok_or_else(|| BackendError::Unsupported("no batch size in prompt".into()))?;
        let weights = self.class_weights(prompt);
        let counts = self.allocate(n, &weights);
        if let Some(class) = (0..counts.len()).find(|&c| counts[c] > self.reserves[c].len()) {
            return Err(BackendError::PoolExhausted { class });
        }
        let k = self.taxonomy.len();
        let mut drawn: Vec<(String, ClassId)> = Vec::with_capacity(n);
        for (c, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let text = self.reserves[c].pop_front().expect("checked above");
                let mut label = c;
                if k > 1 && self.noise > 0.0 && self.rng.random::<f64>() < self.noise {
                    let shift = self.rng.random_range(1..k);
                    label = (c + shift) % k;
                }
                drawn.push((text, label));
            }
        }
        drawn.shuffle(&mut self.rng);
        let records: Vec<Record> = drawn
            .iter()
            .map(|(text, label)| Record {
                text,
                label: self.taxonomy.name(*label).expect("valid id"),
            })
            .collect();
        let text = serde_json::to_string_pretty(&records).expect("serializable");
        Ok(Completion::text(text))
    }
}

/// Returns the same text for every prompt.
#[derive(Debug, Clone)]
pub struct ConstantBackend {
    pub response: String,
    pub calls: usize,
}

impl ConstantBackend {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            calls: 0,
        }
    }
}

impl TeacherBackend for ConstantBackend {
    fn complete(&mut self, _prompt: &str) -> Result<Completion, BackendError> {
        self.calls += 1;
        Ok(Completion::text(self.response.clone()))
    }
}

/// Replays a fixed script of outcomes and keeps every prompt it was sent.
/// Once the script runs out it answers with a transport error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: VecDeque<Result<Completion, BackendError>>,
    pub prompts: Vec<String>,
}

impl ScriptedBackend {
    pub fn new(script: impl IntoIterator<Item = Result<Completion, BackendError>>) -> Self {
        Self {
            script: script.into_iter().collect(),
            prompts: Vec::new(),
        }
    }
}

impl TeacherBackend for ScriptedBackend {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError> {
        self.prompts.push(prompt.to_string());
        self.script
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Transport("script exhausted".into())))
    }
}

/// Zero-shot oracle: answers classification prompts from a text-to-label
/// table in the template's key/value format, flipping the answer to a random
/// wrong class with probability `noise`. Unknown texts get an empty category.
#[derive(Debug, Clone)]
pub struct LookupBackend {
    taxonomy: Taxonomy,
    labels: HashMap<String, ClassId>,
    noise: f64,
    rng: ChaCha8Rng,
}

impl LookupBackend {
    pub fn new(taxonomy: Taxonomy, known: &[LabeledSample], noise: f64, seed: u64) -> Self {
        Self {
            taxonomy,
            labels: known.iter().map(|s| (s.text.clone(), s.label)).collect(),
            noise: noise.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl TeacherBackend for LookupBackend {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError> {
        let at = prompt
            .find(ZERO_SHOT_TEXT_LEAD)
            .ok_or_else(|| BackendError::Unsupported("not a zero-shot prompt".into()))?;
        let rest = &prompt[at + ZERO_SHOT_TEXT_LEAD.len()..];
        let rest = rest.strip_prefix('\n').unwrap_or(rest);
        let text = rest.strip_suffix("\nAssistant:").unwrap_or(rest);
        let k = self.taxonomy.len();
        let answer = match self.labels.get(text) {
            Some(&c) => {
                let mut c = c;
                if k > 1 && self.noise > 0.0 && self.rng.random::<f64>() < self.noise {
                    c = (c + self.rng.random_range(1..k)) % k;
                }
                serde_json::json!({"class_label": c, "class_names": self.taxonomy.name(c)})
            }
            None => serde_json::json!({"class_label": null, "class_names": ""}),
        };
        Ok(Completion::text(answer.to_string()))
    }
}
