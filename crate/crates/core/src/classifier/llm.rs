//! Direct classification by prompting a chat model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::llmgateway::{Gateway, GenerationConfig};
use crate::promptgen::{build_classification_prompt, parse_classification_response};

/// What to do with a response that names no known label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "label")]
pub enum UnparseablePolicy {
    #[default]
    Fail,
    /// Record an abstention. With a label, that label is predicted instead of nothing.
    Abstain(Option<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LlmPredictions {
    /// `None` marks an abstention with no fallback label.
    pub predictions: Vec<Option<String>>,
    /// Indices whose responses could not be parsed.
    pub abstentions: Vec<usize>,
    pub cached: usize,
}

/// Sends one classification prompt per text. Calls run concurrently; the
/// gateway bounds how many are in flight. Errors report the lowest failing index.
pub fn llm_classify(
    gateway: &Gateway,
    config: &GenerationConfig,
    labels: &[String],
    texts: &[&str],
    policy: &UnparseablePolicy,
    nonce_prefix: &str,
) -> Result<LlmPredictions, ClassifierError> {
    if let UnparseablePolicy::Abstain(Some(label)) = policy {
        if !labels.contains(label) {
            return Err(ClassifierError::Config(format!("fallback label {label:?} is not a class")));
        }
    }
    let outcomes: Vec<Result<(Option<String>, bool, bool), ClassifierError>> = texts
        .par_iter()
        .enumerate()
        .map(|(index, text)| {
            let prompt = build_classification_prompt(labels, text)
                .map_err(|e| ClassifierError::Prompt { index, message: e.to_string() })?;
            let result = gateway
                .complete(&prompt, config, &format!("{nonce_prefix}/{index}"))
                .map_err(|source| ClassifierError::Gateway { index, source })?;
            match parse_classification_response(&result.raw_text, labels) {
                Ok(label) => Ok((Some(label), false, result.cached)),
                Err(source) => match policy {
                    UnparseablePolicy::Fail => Err(ClassifierError::Unparseable { index, source }),
                    UnparseablePolicy::Abstain(fallback) => {
                        tracing::warn!(index, error = %source, "abstaining on unparseable classification");
                        Ok((fallback.clone(), true, result.cached))
                    }
                },
            }
        })
        .collect();
    let mut out = LlmPredictions::default();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let (pred, abstained, cached) = outcome?;
        out.predictions.push(pred);
        if abstained {
            out.abstentions.push(index);
        }
        out.cached += cached as usize;
    }
    Ok(out)
}
