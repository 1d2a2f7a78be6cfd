//! Oracles and fixtures shared by the integration tests and the acceptance
//! runner. Nothing here calls into the code under test to compute an
//! expected value.

#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use pgkd_core::corpus::{split, ClassId, DatasetSplit, LabeledSample, SampleId, Taxonomy};
use pgkd_core::evaluation::{ClassificationReport, ScoredSample};
use pgkd_core::student::{FeaturizerConfig, StudentConfig};
use pgkd_core::synthetic::{SyntheticConfig, SyntheticCorpus};
use pgkd_core::teacher::PromptContext;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn news_taxonomy() -> Taxonomy {
    Taxonomy::new(["World", "Sports", "Business", "Sci/Tech"]).unwrap()
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// (precision, recall, f1, support) per class.
    pub per_class: Vec<(f64, f64, f64, usize)>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

/// Counts confusion cells one pair at a time and uses the 2tp/(2tp+fp+fn)
/// form of F1, so it shares no arithmetic path with the library.
pub fn brute_force_report(num_classes: usize, pairs: &[(ClassId, ClassId)]) -> OracleReport {
    let mut per_class = Vec::new();
    for c in 0..num_classes {
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for &(t, p) in pairs {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        per_class.push((div(tp, tp + fp), div(tp, tp + fneg), div(2 * tp, 2 * tp + fp + fneg), (tp + fneg) as usize));
    }
    let hits = pairs.iter().filter(|(t, p)| t == p).count();
    let n = pairs.len();
    let accuracy = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let macro_f1 = if num_classes == 0 { 0.0 } else { per_class.iter().map(|m| m.2).sum::<f64>() / num_classes as f64 };
    let weighted_f1 = if n == 0 { 0.0 } else { per_class.iter().map(|m| m.2 * m.3 as f64).sum::<f64>() / n as f64 };
    OracleReport { per_class, accuracy, macro_f1, weighted_f1 }
}

/// Largest absolute difference between a report and the oracle, or `None`
/// when supports or shapes differ.
pub fn report_gap(r: &ClassificationReport, o: &OracleReport) -> Option<f64> {
    if r.per_class.len() != o.per_class.len() || r.total != o.per_class.iter().map(|m| m.3).sum::<usize>() {
        return None;
    }
    let mut gap: f64 = 0.0;
    for (m, e) in r.per_class.iter().zip(&o.per_class) {
        if m.support != e.3 {
            return None;
        }
        gap = gap.max((m.precision - e.0).abs()).max((m.recall - e.1).abs()).max((m.f1 - e.2).abs());
    }
    Some(gap.max((r.accuracy - o.accuracy).abs()).max((r.macro_f1 - o.macro_f1).abs()).max((r.weighted_f1 - o.weighted_f1).abs()))
}

/// A random labelled/predicted sample over up to 12 classes. Every third case
/// draws true labels from a strict subset so some classes have no support.
pub fn random_pairs(rng: &mut ChaCha8Rng, case: usize) -> (usize, Vec<(ClassId, ClassId)>) {
    let k = rng.random_range(1..=12);
    let n = rng.random_range(0..300);
    let true_classes: Vec<ClassId> = if case.is_multiple_of(3) && k > 1 {
        let keep = rng.random_range(1..k);
        (0..keep).collect()
    } else {
        (0..k).collect()
    };
    let pairs = (0..n)
        .map(|_| {
            let t = *true_classes.choose(rng).unwrap();
            let p = if rng.random_bool(0.5) { t } else { rng.random_range(0..k) };
            (t, p)
        })
        .collect();
    (k, pairs)
}

// ---------------------------------------------------------------- gradient

/// `||a - b|| / max(||a|| + ||b||, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

/// Central differences of `f` around `x`, one coordinate at a time.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_words(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> String {
    (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------- prompts

/// Fixed context the golden prompt files were rendered from.
pub fn golden_context(report_text: &str) -> PromptContext {
    let s = |id, text: &str, label| LabeledSample::seed(id, text, label);
    let scored = |id, text: &str, label, predicted, confidence| ScoredSample {
        sample: s(id, text, label),
        predicted,
        confidence,
    };
    PromptContext {
        taxonomy: news_taxonomy(),
        few_shot: vec![
            s(0, "Ceasefire talks resume in Geneva", 0),
            s(1, "Striker signs three-year deal", 1),
            s(2, "Retail sales beat forecasts", 2),
            s(3, "New chip doubles battery life", 3),
        ],
        gen_batch_size: 32,
        report_text: Some(report_text.to_string()),
        correct: vec![
            scored(0, "Ceasefire talks resume in Geneva", 0, 0, 0.91),
            scored(3, "New chip doubles battery life", 3, 3, 0.84),
        ],
        incorrect: vec![
            scored(4, "Stadium \"naming rights\" sold to bank", 1, 2, 0.77),
            scored(5, "Satellite firm lists on exchange", 3, 2, 0.58),
        ],
        hard_negatives: Some(vec![scored(4, "Stadium \"naming rights\" sold to bank", 1, 2, 0.77)]),
    }
}

/// Confusion pairs behind the golden report: Sci/Tech leaks into Business.
pub fn golden_report_pairs() -> Vec<(ClassId, ClassId)> {
    vec![(0, 0), (0, 0), (1, 1), (1, 2), (2, 2), (2, 2), (3, 3), (3, 2)]
}

/// Every contiguous span whose deletion turns `full` into `reduced`. Empty
/// when the two differ by anything other than a single deletion; more than
/// one entry only when the span can slide along repeated characters.
pub fn single_deletions(full: &str, reduced: &str) -> Vec<String> {
    let (f, r) = (full.as_bytes(), reduced.as_bytes());
    if r.len() >= f.len() {
        return Vec::new();
    }
    let removed = f.len() - r.len();
    let prefix = f.iter().zip(r).take_while(|(a, b)| a == b).count();
    let suffix = f.iter().rev().zip(r.iter().rev()).take_while(|(a, b)| a == b).count();
    let lo = r.len().saturating_sub(suffix);
    let hi = prefix.min(r.len());
    (lo..=hi)
        .filter(|&i| full.is_char_boundary(i) && full.is_char_boundary(i + removed))
        .map(|i| full[i..i + removed].to_string())
        .collect()
}

// ---------------------------------------------------------------- parser corpus

pub const HISTORY_TEXT: &str = "Markets slide after rate decision";

#[derive(Debug, Clone)]
pub enum Rec {
    Valid(String, &'static str),
    UnknownLabel(String),
    EmptyText,
    MissingText,
    MissingLabel(String),
    WrongTypeText,
    DuplicateHistory,
    DuplicateBatch(String, &'static str),
    NotObject,
}

impl Rec {
    pub fn value(&self) -> Value {
        match self {
            Rec::Valid(t, l) | Rec::DuplicateBatch(t, l) => json!({"text": t, "label": l}),
            Rec::UnknownLabel(t) => json!({"text": t, "label": "Finance"}),
            Rec::EmptyText => json!({"text": "   ", "label": "World"}),
            Rec::MissingText => json!({"label": "Sports"}),
            Rec::MissingLabel(t) => json!({"text": t}),
            Rec::WrongTypeText => json!({"text": 42, "label": "Business"}),
            Rec::DuplicateHistory => json!({"text": HISTORY_TEXT, "label": "Business"}),
            Rec::NotObject => json!("stray string"),
        }
    }

    /// Expected outcome: the accepted (text, label) or the rejection kind.
    pub fn expected(&self) -> Result<(String, &'static str), &'static str> {
        match self {
            Rec::Valid(t, l) => Ok((t.clone(), l)),
            Rec::UnknownLabel(_) => Err("unknown_label"),
            Rec::EmptyText => Err("empty_text"),
            Rec::MissingText | Rec::MissingLabel(_) => Err("missing_field"),
            Rec::WrongTypeText => Err("wrong_type"),
            Rec::DuplicateHistory | Rec::DuplicateBatch(..) => Err("duplicate_text"),
            Rec::NotObject => Err("not_an_object"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub name: String,
    pub raw: String,
    /// Records the payload still carries intact, in order; `None` when the
    /// response holds no payload at all.
    pub embedded: Option<Vec<Rec>>,
}

const LABELS: [&str; 4] = ["World", "Sports", "Business", "Sci/Tech"];
const PLAIN_TEXTS: [&str; 6] = [
    "Parliament approves budget",
    "Keeper saves late penalty",
    "Quarterly profit doubles",
    "Telescope spots distant comet",
    "Caf\u{e9} owners \"cautiously\" optimistic",
    "Back\\slash in headline",
];
const BRACKET_TEXTS: [&str; 4] = ["[draft] summit agenda", "Score {2-1} after extra time", "Index ] falls [ again", "Release notes {v2]"];

fn build_records(rng: &mut ChaCha8Rng, case: usize, objects_only: bool, brackets: bool, min: usize) -> Vec<Rec> {
    let n = rng.random_range(min.max(3)..=8);
    let mut out: Vec<Rec> = Vec::new();
    let mut valid: Vec<(String, &'static str)> = Vec::new();
    for i in 0..n {
        let base = if brackets { BRACKET_TEXTS.choose(rng).unwrap() } else { PLAIN_TEXTS.choose(rng).unwrap() };
        let text = format!("{base} #{case}-{i}");
        let kind = if i == 0 { 0 } else { rng.random_range(0..12) };
        let rec = match kind {
            0..=3 => {
                let label = *LABELS.choose(rng).unwrap();
                valid.push((text.clone(), label));
                Rec::Valid(text, label)
            }
            4 => Rec::UnknownLabel(text),
            5 => Rec::EmptyText,
            6 => Rec::MissingText,
            7 => Rec::MissingLabel(text),
            8 => Rec::WrongTypeText,
            9 => Rec::DuplicateHistory,
            10 => {
                let (t, l) = valid.choose(rng).cloned().unwrap();
                Rec::DuplicateBatch(t, l)
            }
            _ if objects_only => Rec::Valid(text.clone(), "Sports"),
            _ => Rec::NotObject,
        };
        if let Rec::Valid(t, l) = &rec {
            if !valid.iter().any(|(vt, _)| vt == t) {
                valid.push((t.clone(), l));
            }
        }
        out.push(rec);
    }
    out
}

fn array(records: &[Rec]) -> Value {
    Value::Array(records.iter().map(Rec::value).collect())
}

fn compact(v: &Value) -> String {
    serde_json::to_string(v).unwrap()
}

/// 50 deterministic mangled teacher responses: nine mangling styles with
/// five cases each, plus five responses that carry no payload.
pub fn fuzz_corpus() -> Vec<FuzzCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    let mut cases = Vec::new();
    for style in 0..9 {
        for rep in 0..5 {
            let id = style * 5 + rep;
            let case = |name: &str, raw: String, recs: Vec<Rec>| FuzzCase {
                name: format!("{name}-{rep}"),
                raw,
                embedded: Some(recs),
            };
            cases.push(match style {
                0 => {
                    let r = build_records(&mut rng, id, false, false, 3);
                    case("plain", compact(&array(&r)), r)
                }
                1 => {
                    let r = build_records(&mut rng, id, false, false, 3);
                    let raw = format!("```json\n{}\n```", serde_json::to_string_pretty(&array(&r)).unwrap());
                    case("fenced", raw, r)
                }
                2 => {
                    let r = build_records(&mut rng, id, false, false, 3);
                    let raw = format!("Sure, here are the samples [as requested]:\n{}\nLet me know if you need more.", compact(&array(&r)));
                    case("prose", raw, r)
                }
                3 => {
                    let r = build_records(&mut rng, id, false, false, 3);
                    let items: Vec<String> = r
                        .iter()
                        .map(|x| {
                            let s = compact(&x.value());
                            match s.strip_suffix('}') {
                                Some(body) => format!("{body}, }}"),
                                None => s,
                            }
                        })
                        .collect();
                    case("trailing-commas", format!("[{},\n]", items.join(", ")), r)
                }
                4 => {
                    let mut r = build_records(&mut rng, id, true, false, 3);
                    let items: Vec<String> = r.iter().map(|x| compact(&x.value())).collect();
                    let last = items.last().unwrap();
                    let cut = rng.random_range(1..last.len() - 1);
                    let cut = (1..=cut).rev().find(|&c| last.is_char_boundary(c)).unwrap();
                    let head = items[..items.len() - 1].join(", ");
                    let raw = format!("[{head}, {}", &last[..cut]);
                    r.pop();
                    case("truncated", raw, r)
                }
                5 => {
                    let r = build_records(&mut rng, id, true, false, 3);
                    let one = vec![r[rng.random_range(0..r.len())].clone()];
                    let one = match &one[0] {
                        Rec::DuplicateBatch(t, l) => vec![Rec::Valid(t.clone(), l)],
                        _ => one,
                    };
                    case("single-object", format!("Here is one sample: {}", compact(&one[0].value())), one)
                }
                6 => {
                    let r = build_records(&mut rng, id, false, false, 3);
                    let raw = serde_json::to_string_pretty(&json!({"samples": array(&r)})).unwrap();
                    case("nested", raw, r)
                }
                7 => {
                    let r = build_records(&mut rng, id, true, false, 3);
                    let raw: Vec<String> = r.iter().map(|x| compact(&x.value())).collect();
                    case("json-lines", raw.join("\n"), r)
                }
                _ => {
                    let r = build_records(&mut rng, id, false, true, 3);
                    let raw = serde_json::to_string_pretty(&array(&r)).unwrap().replace('\n', "\r\n");
                    case("brackets-crlf", raw, r)
                }
            });
        }
    }
    for (i, raw) in [
        "",
        "I'm sorry, I can't help with that.",
        "[1, 2, 3]",
        "```json\n[\"just\", \"strings\"]\n```",
        "{\"note\": \"no records here\"}",
    ]
    .into_iter()
    .enumerate()
    {
        cases.push(FuzzCase { name: format!("no-payload-{i}"), raw: raw.to_string(), embedded: None });
    }
    cases
}

pub fn fuzz_known_texts() -> HashSet<String> {
    [HISTORY_TEXT.to_string()].into()
}

/// Strict per-record validation of an already extracted payload: field
/// presence and types exactly as specified, exact label names, exact-text
/// dedup against history and earlier records of the batch.
pub fn strict_reference(
    payload: &[Value],
    taxonomy: &Taxonomy,
    known: &HashSet<String>,
) -> Vec<Result<(String, ClassId), &'static str>> {
    let mut seen: HashSet<String> = HashSet::new();
    payload
        .iter()
        .map(|v| {
            let Value::Object(o) = v else { return Err("not_an_object") };
            let text = match o.get("text") {
                None => return Err("missing_field"),
                Some(Value::String(t)) => t.trim().to_string(),
                Some(_) => return Err("wrong_type"),
            };
            let label = match o.get("label") {
                None => return Err("missing_field"),
                Some(Value::String(l)) => l.as_str(),
                Some(_) => return Err("wrong_type"),
            };
            if text.is_empty() {
                return Err("empty_text");
            }
            let Some(id) = taxonomy.names().iter().position(|n| n == label) else {
                return Err("unknown_label");
            };
            if known.contains(&text) || !seen.insert(text.clone()) {
                return Err("duplicate_text");
            }
            Ok((text, id))
        })
        .collect()
}

// ---------------------------------------------------------------- loop runs

/// Seed split, oracle reserve and taxonomy of a small synthetic task.
pub struct LoopFixture {
    pub taxonomy: Taxonomy,
    pub split: DatasetSplit,
    pub reserve: Vec<LabeledSample>,
}

pub fn loop_fixture(num_classes: usize, seed_size: usize, seed: u64) -> LoopFixture {
    let corpus = SyntheticCorpus::new(SyntheticConfig { num_classes, seed, ..Default::default() }).unwrap();
    let all = corpus.generate(seed_size + 1500, 0);
    let (seed_set, reserve) = all.split_at(seed_size);
    LoopFixture {
        taxonomy: corpus.taxonomy.clone(),
        split: split(seed_set, 0.8, seed).unwrap(),
        reserve: reserve.to_vec(),
    }
}

pub fn small_student(seed: u64) -> StudentConfig {
    StudentConfig {
        epochs: 8,
        seed,
        featurizer: FeaturizerConfig { dimension: 1 << 12, ..Default::default() },
        ..Default::default()
    }
}

/// Validation texts that occur inside any prompt.
pub fn leaked_texts<'a>(prompts: &[String], val: &'a [LabeledSample]) -> Vec<&'a str> {
    val.iter()
        .map(|s| s.text.as_str())
        .filter(|t| prompts.iter().any(|p| p.contains(t)))
        .collect()
}

/// Replays the stopping rule over a loss column: returns per-step
/// (improved, counter) for steps 1.., the step at which the run must stop
/// (if any) and the index of the minimum loss, ties going to the later step.
pub fn replay_patience(losses: &[f64], patience_limit: usize) -> (Vec<(bool, usize)>, Option<usize>, usize) {
    let mut best = losses[0];
    let mut best_at = 0;
    let mut run = 0;
    let mut out = Vec::new();
    for (i, &l) in losses.iter().enumerate().skip(1) {
        if l > best {
            run += 1;
        } else {
            run = 0;
            best = l;
            best_at = i;
        }
        out.push((l <= losses[..i].iter().copied().fold(f64::INFINITY, f64::min), run));
        if run == patience_limit + 1 {
            return (out, Some(i), best_at);
        }
    }
    (out, None, best_at)
}

pub fn sample_ids(samples: &[LabeledSample]) -> Vec<SampleId> {
    samples.iter().map(|s| s.id).collect()
}
