//! Experiment runner: expands a config into runs, generates synthetic pools,
//! trains and evaluates each run, and writes results files.

mod config;
mod execute;
mod plan;
mod pools;
mod report;

use thiserror::Error;

pub use config::{
    BackendKind, ClassifierKind, DataConfig, ExperimentConfig, GenerationSettings, LinearSettings,
    LlmClassifierSettings, MockSettings, OodSet,
};
pub use execute::{
    mix_for_run, mock_backend, prepare_data, ExecuteOptions, ExecutionSummary, Executor, LinearTrainer, PreparedData,
    Trainer, HELDOUT, RESULTS_FILE, SUBSET_RESULTS_FILE,
};
pub use plan::{path_safe, plan_runs, ratio_label, RunKind, RunRecord, RunStatus};
pub use pools::{generate_pool, generation_budget, load_pool, pool_specs, Pool, PoolContext, PoolMeta, PoolSpec};
pub use report::{emit_report, BestRow, CurvePoint, DiffLine, Report};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error(transparent)]
    Eval(#[from] crate::evaluator::EvalError),
    #[error(transparent)]
    Gateway(#[from] crate::llmgateway::GatewayError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
