//! Weak labeling of span-annotation corpora with a prompted language model.
//!
//! The pipeline renders chat prompts with few-shot examples, sends each
//! sentence to a completion backend, distills the generated text into typed
//! spans, and exports two-stage (weak, then gold) token-classification
//! training files. Evaluation and inference cost modeling sit alongside.

pub mod corpus;
pub mod cost;
pub mod distill;
pub mod eval;
pub mod export;
pub mod gateway;
pub mod pipeline;
pub mod prompt;
pub mod select;
pub mod text;

/// Label attached to every report produced from user-supplied corpora.
pub const DATA_LABEL: &str = "non-paper data";
