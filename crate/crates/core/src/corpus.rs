//! Dataset representation, line-delimited file I/O, seeded sampling and
//! train/validation splitting.
//!
//! Datasets are stored one JSON object per line with a `text` field and a
//! `label` field holding the class *name*. The taxonomy lives in its own file
//! (one class per line, order = class id) so ids stay stable even when a
//! sampled subset misses a class.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ClassId = usize;
pub type SampleId = u64;

/// Default number of annotated samples drawn for the seed set.
pub const DEFAULT_SEED_SET_SIZE: usize = 1000;
/// Default fraction of the seed set used for training (rest is validation).
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("taxonomy class {index} is blank")]
    BlankClassName { index: usize },
    #[error("taxonomy class {index} contains a control character")]
    InvalidClassName { index: usize },
    #[error("duplicate taxonomy class {name:?}")]
    DuplicateClass { name: String },
    #[error("record {record}: unknown label {name:?}")]
    UnknownLabel { record: usize, name: String },
    #[error("record {record}: empty text")]
    EmptyText { record: usize },
    #[error("record {record}: malformed record ({reason})")]
    MalformedRecord { record: usize, reason: String },
    #[error("requested {requested} samples from a pool of {available}")]
    InsufficientPool { requested: usize, available: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("split of {total} samples leaves train={train}, val={val}")]
    DegenerateSplit { total: usize, train: usize, val: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered list of class names; the position of a name is its class id.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Taxonomy {
    classes: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, ClassId>,
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes
    }
}

impl Eq for Taxonomy {}

impl Taxonomy {
    pub fn new<I, S>(names: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut classes = Vec::new();
        let mut index = HashMap::new();
        for (i, raw) in names.into_iter().enumerate() {
            let name = raw.as_ref().trim();
            if name.is_empty() {
                return Err(CorpusError::BlankClassName { index: i });
            }
            if name.chars().any(char::is_control) {
                return Err(CorpusError::InvalidClassName { index: i });
            }
            if index.insert(name.to_string(), i).is_some() {
                return Err(CorpusError::DuplicateClass {
                    name: name.to_string(),
                });
            }
            classes.push(name.to_string());
        }
        if classes.is_empty() {
            return Err(CorpusError::EmptyTaxonomy);
        }
        Ok(Self { classes, index })
    }

    /// Parses the taxonomy file format: one class per line, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        Self::new(text.lines().filter(|l| !l.trim().is_empty()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut out = String::new();
        for name in &self.classes {
            out.push_str(name);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.classes.get(id).map(String::as_str)
    }

    /// Exact match after trimming; no case folding.
    pub fn index_of(&self, name: &str) -> Option<ClassId> {
        self.index.get(name.trim()).copied()
    }
}

impl TryFrom<Vec<String>> for Taxonomy {
    type Error = CorpusError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Taxonomy> for Vec<String> {
    fn from(value: Taxonomy) -> Self {
        value.classes
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Generated { kd_step: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: SampleId,
    pub text: String,
    pub label: ClassId,
    pub origin: Origin,
}

impl LabeledSample {
    pub fn seed(id: SampleId, text: impl Into<String>, label: ClassId) -> Self {
        Self {
            id,
            text: text.into(),
            label,
            origin: Origin::Seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
}

impl DatasetSplit {
    /// Checks the split invariants: both sides non-empty, disjoint by id and
    /// by exact text, validation made of seed samples only.
    pub fn check(&self) -> Result<(), String> {
        if self.train.is_empty() || self.val.is_empty() {
            return Err("train and validation must both be non-empty".into());
        }
        let train_ids: HashSet<SampleId> = self.train.iter().map(|s| s.id).collect();
        let train_texts: HashSet<&str> = self.train.iter().map(|s| s.text.as_str()).collect();
        for s in &self.val {
            if s.origin != Origin::Seed {
                return Err(format!("validation sample {} is not a seed sample", s.id));
            }
            if train_ids.contains(&s.id) {
                return Err(format!("sample id {} is on both sides", s.id));
            }
            if train_texts.contains(s.text.as_str()) {
                return Err(format!("text of validation sample {} also in train", s.id));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    text: Option<serde_json::Value>,
    label: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    text: &'a str,
    label: &'a str,
}

/// Parses line-delimited records. Blank lines are skipped and do not count as
/// records; ids are assigned sequentially in file order.
pub fn parse_dataset(
    reader: impl BufRead,
    taxonomy: &Taxonomy,
) -> Result<Vec<LabeledSample>, CorpusError> {
    let mut samples = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = samples.len();
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                record,
                reason: e.to_string(),
            })?;
        let text = match raw.text {
            Some(serde_json::Value::String(t)) => t,
            Some(_) => {
                return Err(CorpusError::MalformedRecord {
                    record,
                    reason: "`text` is not a string".into(),
                })
            }
            None => {
                return Err(CorpusError::MalformedRecord {
                    record,
                    reason: "missing `text`".into(),
                })
            }
        };
        let name = match raw.label {
            Some(serde_json::Value::String(l)) => l,
            Some(_) => {
                return Err(CorpusError::MalformedRecord {
                    record,
                    reason: "`label` is not a string".into(),
                })
            }
            None => {
                return Err(CorpusError::MalformedRecord {
                    record,
                    reason: "missing `label`".into(),
                })
            }
        };
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { record });
        }
        let label = taxonomy
            .index_of(&name)
            .ok_or(CorpusError::UnknownLabel { record, name })?;
        samples.push(LabeledSample::seed(record as SampleId, text, label));
    }
    Ok(samples)
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    taxonomy: &Taxonomy,
) -> Result<Vec<LabeledSample>, CorpusError> {
    let file = fs::File::open(path)?;
    parse_dataset(BufReader::new(file), taxonomy)
}

/// Writes samples in the dataset format. Labels must be valid for `taxonomy`.
pub fn write_dataset(
    mut writer: impl Write,
    samples: &[LabeledSample],
    taxonomy: &Taxonomy,
) -> Result<(), CorpusError> {
    for s in samples {
        let label = taxonomy
            .name(s.label)
            .ok_or_else(|| CorpusError::UnknownLabel {
                record: s.id as usize,
                name: s.label.to_string(),
            })?;
        let line = serde_json::to_string(&OutRecord {
            text: &s.text,
            label,
        })
        .expect("string record serializes");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn save_dataset(
    path: impl AsRef<Path>,
    samples: &[LabeledSample],
    taxonomy: &Taxonomy,
) -> Result<(), CorpusError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_dataset(&mut file, samples, taxonomy)?;
    file.flush()?;
    Ok(())
}

/// Uniform sample of `n` items without replacement. The result keeps the
/// pool's order, so `n == pool.len()` returns the pool unchanged.
pub fn sample_seed_set(
    pool: &[LabeledSample],
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>, CorpusError> {
    if n > pool.len() {
        return Err(CorpusError::InsufficientPool {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

/// Shuffles deterministically and cuts at `floor(train_fraction * N)`.
///
/// If the input contains repeated texts, validation samples whose text also
/// landed in train are moved to train so the two sides stay text-disjoint.
pub fn split(
    samples: &[LabeledSample],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(train_fraction));
    }
    let total = samples.len();
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let cut = (train_fraction * total as f64).floor() as usize;
    let mut train: Vec<LabeledSample> = order[..cut].iter().map(|&i| samples[i].clone()).collect();
    let train_texts: HashSet<String> = train.iter().map(|s| s.text.clone()).collect();
    let mut val = Vec::with_capacity(total - cut);
    for &i in &order[cut..] {
        let s = &samples[i];
        if train_texts.contains(&s.text) {
            train.push(s.clone());
        } else {
            val.push(s.clone());
        }
    }
    if train.is_empty() || val.is_empty() {
        return Err(CorpusError::DegenerateSplit {
            total,
            train: train.len(),
            val: val.len(),
        });
    }
    Ok(DatasetSplit { train, val })
}

/// Samples from `pool` whose id is not in `taken`, in pool order.
pub fn exclude(pool: &[LabeledSample], taken: &[LabeledSample]) -> Vec<LabeledSample> {
    let ids: HashSet<SampleId> = taken.iter().map(|s| s.id).collect();
    pool.iter().filter(|s| !ids.contains(&s.id)).cloned().collect()
}

/// Picks up to `k` items spreading picks across classes: classes are visited
/// round-robin in a seeded order, each class contributing its members in a
/// seeded order. Returns everything when `k >= items.len()`. Output is sorted
/// by the `id` key.
pub fn stratified_pick<T, L, I>(items: &[T], k: usize, seed: u64, label: L, id: I) -> Vec<T>
where
    T: Clone,
    L: Fn(&T) -> ClassId,
    I: Fn(&T) -> SampleId,
{
    let mut picked: Vec<T> = if k >= items.len() {
        items.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            by_class.entry(label(item)).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = by_class.into_values().collect();
        for g in &mut groups {
            g.shuffle(&mut rng);
        }
        groups.shuffle(&mut rng);
        let mut out = Vec::with_capacity(k);
        let mut round = 0;
        while out.len() < k {
            for g in &groups {
                if let Some(&i) = g.get(round) {
                    out.push(items[i].clone());
                    if out.len() == k {
                        break;
                    }
                }
            }
            round += 1;
        }
        out
    };
    picked.sort_by_key(|t| id(t));
    picked
}
