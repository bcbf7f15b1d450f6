//! Staged multiple-choice item generation with human review gates,
//! nine-criteria quality checks, feature-model similarity, rater agreement
//! and open/secret item banks.

pub mod agreement;
pub mod bank;
pub mod item_model;
pub mod prompts;
pub mod pipeline;
pub mod providers;
pub mod quality;
pub mod samples;
pub mod similarity;
