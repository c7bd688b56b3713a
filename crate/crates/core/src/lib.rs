//! Morphology-enriched prompt building, curation, sampling plans, generative
//! quality metrics and reader-study statistics for histology image synthesis.

pub mod curation;
pub mod data;
pub mod jsonl;
pub mod metrics;
pub mod morphology;
pub mod sampling;
pub mod seeding;
pub mod stats;
