//! Performance-guided knowledge distillation: a hashed-n-gram student text
//! classifier improved by an LLM teacher that sees the student's validation
//! report and its mistakes.

pub mod corpus;
pub mod cost;
pub mod distill;
pub mod evaluation;
pub mod experiment;
pub mod student;
pub mod synthetic;
pub mod teacher;
