//! Behavioral testing of machine translation systems.
//!
//! A parallel corpus with word alignments and linguistic annotations is turned
//! into capability-targeted test cases by masking solely-aligned segments and
//! asking an infill model to refill both sides. Each MT system under test is
//! then judged by comparing the quality of its translation of the original
//! source with the quality of its translation of the test case.
//!
//! The pipeline stages map onto modules:
//!
//! - [`corpus`]: pairs, Pharaoh alignments and annotation records.
//! - [`segmentation`]: editable segment extraction and per-capability selection.
//! - [`casegen`]: masking, prompt rendering, reply parsing and filtering.
//! - [`backends`]: infill, translator and scorer clients with a replay cache.
//! - [`judge`]: the two-threshold pass/fail rule, pass rates and sweeps.
//! - [`report`]: capability tables, precision/recall and error positions.

pub mod backends;
pub mod casegen;
pub mod corpus;
pub mod judge;
pub mod report;
pub mod score;
pub mod segmentation;

pub use score::{Percentage, QualityScore};

/// Judge configuration over `f64` scores.
pub type JudgeConfigF64 = judge::JudgeConfig<f64>;
/// Judge configuration over `f32` scores.
pub type JudgeConfigF32 = judge::JudgeConfig<f32>;
pub type TranslationRecordF64 = judge::TranslationRecord<f64>;
pub type TranslationRecordF32 = judge::TranslationRecord<f32>;
pub type VerdictF64 = judge::Verdict<f64>;
pub type VerdictF32 = judge::Verdict<f32>;
pub type QualityScoreF64 = QualityScore<f64>;
pub type QualityScoreF32 = QualityScore<f32>;
