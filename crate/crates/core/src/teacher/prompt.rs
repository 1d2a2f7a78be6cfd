//! Prompt templates for generation and zero-shot classification.
//!
//! Sample blocks render one JSON object per line using class names, so the
//! teacher sees the same shape it is asked to produce.

use serde::Serialize;

use crate::corpus::{LabeledSample, Taxonomy};
use crate::evaluation::ScoredSample;

use super::TeacherError;

pub const DEFAULT_GEN_BATCH_SIZE: usize = 32;
pub const DEFAULT_FEW_SHOT: usize = 16;
pub const DEFAULT_CORRECT: usize = 16;
pub const DEFAULT_INCORRECT: usize = 16;

/// Opening of the validation-report block (omitted when no report is given).
pub const REPORT_LEAD: &str =
    ", generate new samples knowing that the classification report over validation set is:";
/// Opening of the hard-negative block (omitted when hard negatives are off).
pub const HARD_NEGATIVE_LEAD: &str =
    "The model has a high confidence in classifying the following misclassified examples:";
pub const ZERO_SHOT_TEXT_LEAD: &str = "Text-to-classifiy: ";

const PGKD_OPENING: &str =
    "Human:\nYou are a Teacher model for a Student LM to perform topic detection on the following taxonomy: \n";
const FEW_SHOT_LEAD: &str = "Here are a few labeled examples that show the correct label for this task:\n";
const REQUEST_LEAD: &str = "Given the current model performance, please generate ";
const REQUEST_TAIL: &str = " training samples for the model to improve its performance. \
The response should be a list of dictionaries in JSON format, the response needs to be parsable \
so do not output anything else rather than the response itself. \
The objective is to maximize the model accuracy";
const CORRECT_LEAD: &str = "Please consider a few samples that the model was able to classify correctly:\n";
const INCORRECT_LEAD: &str = "And samples the model was not able to classify correctly: \n";
const CLOSING: &str = "Assistant:";

const ZERO_SHOT_OPENING: &str = "Human:\nYou are an AI assistant, and you are tasked to perform topic \
classification starting from text. You are asked to classify text in topics categories. You are only \
allowed to choose one of the following categories:\n";
const ZERO_SHOT_FORMAT: &str = "Please provide only one category for each text in JSON format. For example: \n\
\"class_label\": , \"class_names\": \"\"\n\
Please do not repeat or return the content back again, just provide the category in the defined format.\n";

const EMPTY_BLOCK: &str = "(none)";

/// Everything the generation prompt is assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub taxonomy: Taxonomy,
    pub few_shot: Vec<LabeledSample>,
    pub gen_batch_size: usize,
    /// Rendered validation report; `None` drops the report block.
    pub report_text: Option<String>,
    pub correct: Vec<ScoredSample>,
    pub incorrect: Vec<ScoredSample>,
    /// `None` drops the hard-negative block.
    pub hard_negatives: Option<Vec<ScoredSample>>,
}

#[derive(Serialize)]
struct ShotLine<'a> {
    text: &'a str,
    label: &'a str,
}

#[derive(Serialize)]
struct JudgedLine<'a> {
    text: &'a str,
    label: &'a str,
    predicted_label: &'a str,
}

fn class_name(taxonomy: &Taxonomy, id: usize) -> &str {
    taxonomy.name(id).unwrap_or("?")
}

fn block(lines: Vec<String>) -> String {
    if lines.is_empty() {
        EMPTY_BLOCK.to_string()
    } else {
        lines.join("\n")
    }
}

fn shots(taxonomy: &Taxonomy, samples: &[LabeledSample]) -> String {
    block(
        samples
            .iter()
            .map(|s| {
                serde_json::to_string(&ShotLine {
                    text: &s.text,
                    label: class_name(taxonomy, s.label),
                })
                .expect("serializable")
            })
            .collect(),
    )
}

fn judged(taxonomy: &Taxonomy, samples: &[ScoredSample]) -> String {
    block(
        samples
            .iter()
            .map(|s| {
                serde_json::to_string(&JudgedLine {
                    text: &s.sample.text,
                    label: class_name(taxonomy, s.sample.label),
                    predicted_label: class_name(taxonomy, s.predicted),
                })
                .expect("serializable")
            })
            .collect(),
    )
}

pub fn build_pgkd_prompt(ctx: &PromptContext) -> Result<String, TeacherError> {
    if ctx.few_shot.is_empty() {
        return Err(TeacherError::EmptyFewShot);
    }
    let tax = &ctx.taxonomy;
    let mut p = String::new();
    p.push_str(PGKD_OPENING);
    p.push_str(&tax.names().join("\n"));
    p.push('\n');
    p.push_str(FEW_SHOT_LEAD);
    p.push_str(&shots(tax, &ctx.few_shot));
    p.push('\n');
    p.push_str(REQUEST_LEAD);
    p.push_str(&ctx.gen_batch_size.to_string());
    p.push_str(REQUEST_TAIL);
    if let Some(report) = &ctx.report_text {
        p.push_str(REPORT_LEAD);
        p.push('\n');
        p.push_str(report.trim_end_matches('\n'));
    }
    p.push('\n');
    p.push_str(CORRECT_LEAD);
    p.push_str(&judged(tax, &ctx.correct));
    p.push('\n');
    p.push_str(INCORRECT_LEAD);
    p.push_str(&judged(tax, &ctx.incorrect));
    p.push('\n');
    if let Some(hard) = &ctx.hard_negatives {
        p.push_str(HARD_NEGATIVE_LEAD);
        p.push('\n');
        p.push_str(&judged(tax, hard));
        p.push('\n');
    }
    p.push_str(CLOSING);
    Ok(p)
}

pub fn build_zero_shot_prompt(taxonomy: &Taxonomy, text: &str) -> Result<String, TeacherError> {
    if text.trim().is_empty() {
        return Err(TeacherError::EmptyText);
    }
    let mut p = String::from(ZERO_SHOT_OPENING);
    for (i, name) in taxonomy.names().iter().enumerate() {
        p.push_str(&format!("{i}: {name}\n"));
    }
    p.push_str(ZERO_SHOT_FORMAT);
    p.push_str(ZERO_SHOT_TEXT_LEAD);
    p.push('\n');
    p.push_str(text);
    p.push('\n');
    p.push_str(CLOSING);
    Ok(p)
}
