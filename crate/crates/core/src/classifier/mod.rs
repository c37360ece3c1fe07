//! Text classifiers: a hashed n-gram linear model trained in-process, direct
//! classification by a chat model, and file handoff to an external trainer.

mod features;
mod handoff;
mod linear;
mod llm;

use thiserror::Error;

use crate::llmgateway::GatewayError;
use crate::promptgen::ParseError;

pub use features::{tokenize, vectorize, FeatureConfig, IdfTable, NgramRange, SparseVec, TfWeighting};
pub use handoff::{
    align_predictions, external_trainer_handoff, read_manifest, read_predictions, write_predictions, HandoffManifest,
    PredictionRow, MANIFEST_FILE,
};
pub use linear::{argmax, corpus_fingerprint, predict, train, Loss, ModelArtifact, Prediction, TrainConfig, ARTIFACT_VERSION};
pub use llm::{llm_classify, LlmPredictions, UnparseablePolicy};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid classifier configuration: {0}")]
    Config(String),
    #[error("training needs at least two classes with examples")]
    SingleClass,
    #[error("class {class:?} has {count} example(s); at least 2 are needed")]
    TooFewExamples { class: String, count: usize },
    #[error("objective became non-finite in epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("prediction for {id:?} has unknown label {label:?}")]
    UnknownLabel { id: String, label: String },
    #[error("text {index}: {message}")]
    Prompt { index: usize, message: String },
    #[error("text {index}: {source}")]
    Gateway {
        index: usize,
        #[source]
        source: GatewayError,
    },
    #[error("text {index}: {source}")]
    Unparseable {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
