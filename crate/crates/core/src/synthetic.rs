//! Synthetic labelled corpora with class-conditional vocabularies.
//!
//! Each class owns a set of topic words; every class also shares a background
//! vocabulary. A document mixes background words with topic words of its
//! class, and some topic words are borrowed from a neighbouring class so the
//! task is not trivially separable.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, LabeledSample, SampleId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub topic_words_per_class: usize,
    pub background_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token is a topic word rather than background.
    pub topic_rate: f64,
    /// Probability that a topic word comes from the next class instead.
    pub confusion: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 20,
            topic_words_per_class: 40,
            background_words: 800,
            min_len: 8,
            max_len: 20,
            topic_rate: 0.3,
            confusion: 0.25,
            seed: 0,
        }
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

/// Deterministic pseudo-word for index `i`: three syllables, bijective over
/// the first 16^3 * 6^3 indices.
fn word(i: usize) -> String {
    let mut n = i;
    let mut w = String::new();
    for _ in 0..3 {
        w.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        w.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
    }
    w
}

pub struct SyntheticCorpus {
    pub taxonomy: Taxonomy,
    config: SyntheticConfig,
    topics: Vec<Vec<String>>,
    background: Vec<String>,
}

impl SyntheticCorpus {
    pub fn new(config: SyntheticConfig) -> Result<Self, CorpusError> {
        let k = config.num_classes;
        let taxonomy = Taxonomy::new((0..k).map(|c| format!("topic-{c:02}")))?;
        let t = config.topic_words_per_class;
        let topics = (0..k).map(|c| (0..t).map(|j| word(c * t + j)).collect()).collect();
        let background = (0..config.background_words).map(|j| word(k * t + j)).collect();
        Ok(Self { taxonomy, config, topics, background })
    }

    fn document(&self, label: usize, rng: &mut ChaCha8Rng) -> String {
        let cfg = &self.config;
        let len = rng.random_range(cfg.min_len..=cfg.max_len.max(cfg.min_len));
        let words: Vec<&str> = (0..len)
            .map(|_| {
                let vocab = if rng.random::<f64>() < cfg.topic_rate {
                    let class = if rng.random::<f64>() < cfg.confusion {
                        (label + 1) % self.topics.len()
                    } else {
                        label
                    };
                    &self.topics[class]
                } else {
                    &self.background
                };
                vocab.choose(rng).expect("non-empty vocabulary").as_str()
            })
            .collect();
        words.join(" ")
    }

    /// `n` samples with distinct texts, labels cycling through the classes,
    /// ids starting at `first_id`.
    pub fn generate(&self, n: usize, first_id: SampleId) -> Vec<LabeledSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let k = self.taxonomy.len();
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let label = out.len() % k;
            let text = self.document(label, &mut rng);
            if seen.insert(text.clone()) {
                out.push(LabeledSample::seed(first_id + out.len() as SampleId, text, label));
            }
        }
        out
    }
}
