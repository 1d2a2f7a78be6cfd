use serde_json::Value;

use crate::corpus::{ClassId, Taxonomy};

use super::parse::{extract_payload, parse_generation, ParseContext, RejectReason, RejectedRecord};
use super::prompt::{build_pgkd_prompt, build_zero_shot_prompt, PromptContext};
use super::{GenerationBatch, TeacherBackend, TokenUsage};

/// Builds the prompt, queries the backend and parses the answer, retrying up
/// to `retries` times on transport errors or unparsable output. Never fails:
/// when all attempts are used up the batch comes back empty with `failure`
/// set. Accepted samples beyond `ctx.gen_batch_size` are rejected as
/// overflow.
pub fn generate(
    backend: &mut dyn TeacherBackend,
    ctx: &PromptContext,
    retries: usize,
    parse: &ParseContext<'_>,
) -> GenerationBatch {
    let prompt = match build_pgkd_prompt(ctx) {
        Ok(p) => p,
        Err(e) => {
            return GenerationBatch {
                failure: Some(e.to_string()),
                ..Default::default()
            }
        }
    };
    let mut usage = TokenUsage::default();
    let mut last_error = String::new();
    let mut last_raw = String::new();
    for attempt in 1..=retries + 1 {
        let completion = match backend.complete(&prompt) {
            Ok(c) => c,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        usage += completion
            .usage
            .unwrap_or_else(|| TokenUsage::estimate(&prompt, &completion.text));
        match parse_generation(&completion.text, parse) {
            Ok(mut batch) => {
                if batch.accepted.len() > ctx.gen_batch_size {
                    let extra = batch.accepted.split_off(ctx.gen_batch_size);
                    batch.rejected.extend(extra.into_iter().map(|s| RejectedRecord {
                        record: serde_json::json!({
                            "text": s.text,
                            "label": ctx.taxonomy.name(s.label),
                        }),
                        reason: RejectReason::Overflow,
                    }));
                }
                batch.prompt = prompt;
                batch.attempts = attempt;
                batch.usage = usage;
                return batch;
            }
            Err(e) => {
                last_error = e.to_string();
                last_raw = completion.text;
            }
        }
    }
    GenerationBatch {
        prompt,
        raw_response: last_raw,
        attempts: retries + 1,
        failure: Some(last_error),
        usage,
        ..Default::default()
    }
}

/// Reads the category out of a zero-shot answer.
///
/// The category name wins when present and must match the taxonomy exactly;
/// otherwise a valid numeric `class_label` is used. Also copes with the bare
/// `"class_label": .., "class_names": ".."` form the template shows.
pub fn parse_zero_shot_response(raw: &str, taxonomy: &Taxonomy) -> Option<ClassId> {
    let obj = first_object(raw).or_else(|| {
        let at = raw.find("\"class_")?;
        let line = raw[at..].lines().next()?;
        serde_json::from_str::<Value>(&format!("{{{}}}", line.trim().trim_end_matches(','))).ok()
    })?;
    let obj = obj.as_object()?;
    let name = ["class_names", "class_name"]
        .iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_str))
        .filter(|n| !n.trim().is_empty());
    if let Some(name) = name {
        return taxonomy.index_of(name);
    }
    let id = obj.get("class_label")?;
    let id = id
        .as_u64()
        .or_else(|| id.as_str().and_then(|s| s.trim().parse().ok()))? as usize;
    (id < taxonomy.len()).then_some(id)
}

fn first_object(raw: &str) -> Option<Value> {
    if let Some(items) = extract_payload(raw) {
        if let Some(v) = items.into_iter().find(Value::is_object) {
            return Some(v);
        }
    }
    for (i, _) in raw.match_indices('{') {
        let tail = &raw[i..];
        let mut de = serde_json::Deserializer::from_str(tail).into_iter::<Value>();
        if let Some(Ok(v @ Value::Object(_))) = de.next() {
            return Some(v);
        }
    }
    None
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZeroShotOutcome {
    /// One entry per input text, `None` where the answer could not be used.
    pub predictions: Vec<Option<ClassId>>,
    pub failures: usize,
    pub calls: usize,
    pub usage: TokenUsage,
}

/// Classifies each text with one zero-shot prompt. Transport errors, empty
/// texts and unusable answers count as failures.
pub fn zero_shot_classify(
    backend: &mut dyn TeacherBackend,
    taxonomy: &Taxonomy,
    texts: &[String],
) -> ZeroShotOutcome {
    let mut out = ZeroShotOutcome::default();
    for text in texts {
        let prediction = build_zero_shot_prompt(taxonomy, text).ok().and_then(|prompt| {
            out.calls += 1;
            let c = backend.complete(&prompt).ok()?;
            out.usage += c.usage.unwrap_or_else(|| TokenUsage::estimate(&prompt, &c.text));
            parse_zero_shot_response(&c.text, taxonomy)
        });
        if prediction.is_none() {
            out.failures += 1;
        }
        out.predictions.push(prediction);
    }
    out
}
