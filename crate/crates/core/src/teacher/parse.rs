//! Extraction of generated samples from free-form LLM output.
//!
//! Responses routinely wrap the JSON in prose or code fences, leave trailing
//! commas, get cut off mid-list, or return a single object instead of a list.
//! [`extract_payload`] recovers the first usable list of objects; every
//! element is then validated on its own and either accepted or rejected with a
//! typed reason.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{LabeledSample, Origin, SampleId, Taxonomy};

use super::{GenerationBatch, TeacherError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum RejectReason {
    NotAnObject,
    MissingField(String),
    WrongType(String),
    EmptyText,
    UnknownLabel(String),
    DuplicateText,
    Overflow,
}

impl RejectReason {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NotAnObject => "not_an_object",
            Self::MissingField(_) => "missing_field",
            Self::WrongType(_) => "wrong_type",
            Self::EmptyText => "empty_text",
            Self::UnknownLabel(_) => "unknown_label",
            Self::DuplicateText => "duplicate_text",
            Self::Overflow => "overflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub record: Value,
    pub reason: RejectReason,
}

pub struct ParseContext<'a> {
    pub taxonomy: &'a Taxonomy,
    /// KD step stamped on accepted samples.
    pub step: u32,
    /// Texts that may not be accepted again (history, and anything else the
    /// caller wants to keep out).
    pub known_texts: &'a HashSet<String>,
    /// Id given to the first accepted sample; later ones count up from it.
    pub first_id: SampleId,
}

/// Index one past the bracket that closes the one at `start`, skipping
/// brackets inside JSON strings.
fn balanced_end(s: &str, start: usize) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut stack: Vec<u8> = Vec::new();
    let mut in_str = false;
    let mut esc = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            if esc {
                esc = false;
            } else if b == b'\\' {
                esc = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'[' | b'{' => stack.push(b),
            b']' | b'}' => {
                let open = stack.pop()?;
                if (open == b'[') != (b == b']') {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops commas that directly precede a closing bracket.
fn strip_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut esc = false;
    let chars: Vec<char> = s.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            if esc {
                esc = false;
            } else if c == '\\' {
                esc = true;
            } else if c == '"' {
                in_str = false;
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some(']') | Some('}')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn parse_lenient(s: &str) -> Option<Value> {
    serde_json::from_str(s)
        .ok()
        .or_else(|| serde_json::from_str(&strip_trailing_commas(s)).ok())
}

fn is_list_of_objects(v: &Value) -> bool {
    match v {
        Value::Array(items) => items.is_empty() || items.iter().any(Value::is_object),
        _ => false,
    }
}

fn looks_like_record(v: &Value) -> bool {
    v.as_object()
        .is_some_and(|o| o.contains_key("text") || o.contains_key("label"))
}

/// Complete objects directly inside a list that never closes.
fn salvage_truncated(s: &str, open: usize) -> Vec<Value> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = open + 1;
    loop {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b',') {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] != b'{' {
            break;
        }
        let Some(end) = balanced_end(s, i) else { break };
        match parse_lenient(&s[i..end]) {
            Some(v @ Value::Object(_)) => out.push(v),
            _ => break,
        }
        i = end;
    }
    out
}

/// Finds the first list-of-objects payload in `raw`.
///
/// In order of preference: the first complete JSON array containing objects
/// (or an empty array); the complete objects of a truncated array; the
/// record-like objects found at top level, as in JSON lines output.
pub fn extract_payload(raw: &str) -> Option<Vec<Value>> {
    let opens: Vec<usize> = raw.match_indices('[').map(|(i, _)| i).collect();
    for &i in &opens {
        if let Some(end) = balanced_end(raw, i) {
            if let Some(v) = parse_lenient(&raw[i..end]) {
                if is_list_of_objects(&v) {
                    let Value::Array(items) = v else { unreachable!() };
                    return Some(items);
                }
            }
        }
    }
    for &i in &opens {
        if balanced_end(raw, i).is_none() {
            let items = salvage_truncated(raw, i);
            if !items.is_empty() {
                return Some(items);
            }
        }
    }
    let mut records = Vec::new();
    let mut from = 0;
    while let Some(off) = raw[from..].find('{') {
        let i = from + off;
        match balanced_end(raw, i).and_then(|end| parse_lenient(&raw[i..end]).map(|v| (end, v))) {
            Some((end, v)) if looks_like_record(&v) => {
                records.push(v);
                from = end;
            }
            _ => from = i + 1,
        }
    }
    (!records.is_empty()).then_some(records)
}

fn check_record(
    v: &Value,
    ctx: &ParseContext<'_>,
    seen: &HashSet<String>,
) -> Result<(String, usize), RejectReason> {
    let obj = v.as_object().ok_or(RejectReason::NotAnObject)?;
    let text = match obj.get("text") {
        None => return Err(RejectReason::MissingField("text".into())),
        Some(Value::String(t)) => t.trim(),
        Some(_) => return Err(RejectReason::WrongType("text".into())),
    };
    let label = match obj.get("label") {
        None => return Err(RejectReason::MissingField("label".into())),
        Some(Value::String(l)) => l,
        Some(_) => return Err(RejectReason::WrongType("label".into())),
    };
    if text.is_empty() {
        return Err(RejectReason::EmptyText);
    }
    let label = ctx
        .taxonomy
        .index_of(label)
        .ok_or_else(|| RejectReason::UnknownLabel(label.clone()))?;
    if ctx.known_texts.contains(text) || seen.contains(text) {
        return Err(RejectReason::DuplicateText);
    }
    Ok((text.to_string(), label))
}

pub fn parse_generation(raw: &str, ctx: &ParseContext<'_>) -> Result<GenerationBatch, TeacherError> {
    let items = extract_payload(raw).ok_or(TeacherError::UnparsableResponse)?;
    let mut batch = GenerationBatch {
        raw_response: raw.to_string(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    for item in items {
        match check_record(&item, ctx, &seen) {
            Ok((text, label)) => {
                seen.insert(text.clone());
                batch.accepted.push(LabeledSample {
                    id: ctx.first_id + batch.accepted.len() as SampleId,
                    text,
                    label,
                    origin: Origin::Generated { kd_step: ctx.step },
                });
            }
            Err(reason) => batch.rejected.push(RejectedRecord { record: item, reason }),
        }
    }
    Ok(batch)
}
