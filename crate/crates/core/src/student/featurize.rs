use serde::{Deserialize, Serialize};

use super::StudentError;

/// Hashed bag-of-word-n-grams configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub ngram_orders: Vec<usize>,
    /// Size of the hashed feature space; must be a power of two.
    pub dimension: usize,
    pub hash_seed: u64,
    /// Inputs are truncated to this many whitespace tokens before n-gram
    /// extraction.
    pub max_tokens: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            ngram_orders: vec![1, 2],
            dimension: 1 << 16,
            hash_seed: 0,
            max_tokens: 512,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<(), StudentError> {
        if self.dimension < 2 || !self.dimension.is_power_of_two() {
            return Err(StudentError::InvalidConfig(format!(
                "dimension {} is not a power of two >= 2",
                self.dimension
            )));
        }
        if self.dimension > u32::MAX as usize {
            return Err(StudentError::InvalidConfig("dimension exceeds u32 range".into()));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(StudentError::InvalidConfig(
                "ngram_orders must be a non-empty set of positive lengths".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(StudentError::InvalidConfig("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Sparse count vector, sorted by index with no repeated indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFeatures {
    entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self, dimension: usize) -> Vec<f64> {
        let mut v = vec![0.0; dimension];
        for &(i, x) in &self.entries {
            v[i as usize] += x;
        }
        v
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

// FNV-1a; stable across platforms and toolchains, unlike std's SipHash keys.
fn fnv1a(seed: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    };
    for b in seed.to_le_bytes() {
        feed(b);
    }
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            feed(b' ');
        }
        for &b in p.as_bytes() {
            feed(b);
        }
    }
    h
}

/// Lowercases, splits on whitespace, truncates to `max_tokens` and hashes
/// every n-gram of each configured order into `[0, dimension)`. Repeated
/// indices accumulate counts.
pub fn featurize(text: &str, config: &FeaturizerConfig) -> SparseFeatures {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().take(config.max_tokens).collect();
    let mask = (config.dimension as u64).wrapping_sub(1);
    let mut idx: Vec<u32> = Vec::new();
    for &n in &config.ngram_orders {
        if n == 0 || n > tokens.len() {
            continue;
        }
        for gram in tokens.windows(n) {
            idx.push((fnv1a(config.hash_seed, gram) & mask) as u32);
        }
    }
    idx.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for i in idx {
        match entries.last_mut() {
            Some(last) if last.0 == i => last.1 += 1.0,
            _ => entries.push((i, 1.0)),
        }
    }
    SparseFeatures { entries }
}
