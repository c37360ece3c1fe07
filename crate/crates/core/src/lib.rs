//! Theory-driven synthetic training data for text classifiers.
//!
//! The crate builds generation prompts from measurement instruments, talks to
//! chat-completion backends (or an offline mock), mixes synthetic and labeled
//! examples at controlled ratios, trains a linear text classifier, and reports
//! macro-F1 across seeds.

pub mod classifier;
pub mod corpus;
pub mod evaluator;
pub mod instruments;
pub mod llmgateway;
pub mod orchestrator;
pub mod promptgen;
pub mod util;
