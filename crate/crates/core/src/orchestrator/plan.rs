//! Expansion of a config into the list of runs to execute.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{ClassifierKind, ExperimentConfig};
use super::OrchestratorError;
use crate::promptgen::StrategyCell;
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Generated,
    Trained,
    Evaluated,
    /// Nothing to train, e.g. a labeled subset left with fewer than two classes
    /// or with a single example of some class.
    Skipped,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    /// Ratio 0: labeled data only, shared by every strategy cell.
    LabeledOnly,
    /// Synthetic and labeled data at a positive ratio.
    Mixed,
    /// Only the labeled portion of the paired mixed run.
    LabeledSubset,
    /// Direct classification by a chat model; no training data.
    Prompting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Position in the plan; results are written in this order.
    pub index: usize,
    pub study: String,
    pub classifier: ClassifierKind,
    pub kind: RunKind,
    pub cell: Option<StrategyCell>,
    pub generator_model: Option<String>,
    pub ratio: f64,
    pub seed: u64,
    /// Seeds the synthetic and labeled draws; shared by a mixed run and its labeled subset.
    pub mix_seed: u64,
    pub train_seed: u64,
    /// Run directory relative to the study directory.
    pub dir: PathBuf,
    pub status: RunStatus,
    #[serde(default)]
    pub wall_clock_ms: u64,
    /// Backend requests issued by this run's own stages (classification calls).
    #[serde(default)]
    pub requests: u64,
}

/// Replaces characters that are awkward in file names.
pub fn path_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

pub fn ratio_label(ratio: f64) -> String {
    format!("{ratio}")
}

impl RunRecord {
    pub fn cell_label(&self) -> String {
        self.cell.map(|c| c.to_string()).unwrap_or_else(|| "none".into())
    }

    pub fn generator_label(&self) -> String {
        self.generator_model.clone().unwrap_or_else(|| "none".into())
    }

    /// Human-readable id, unique within a plan.
    pub fn id(&self) -> String {
        self.dir.display().to_string()
    }
}

fn mix_seed(config: &ExperimentConfig, cell: &str, generator: &str, ratio: f64, seed: u64) -> u64 {
    derive_seed(
        config.master_seed,
        &[&config.study, "mix", cell, generator, &ratio_label(ratio), &seed.to_string()],
    )
}

fn train_seed(config: &ExperimentConfig, classifier: ClassifierKind, kind: RunKind, cell: &str, generator: &str, ratio: f64, seed: u64) -> u64 {
    let kind = serde_json::to_string(&kind).expect("kind serializes");
    derive_seed(
        config.master_seed,
        &[&config.study, "train", classifier.as_str(), &kind, cell, generator, &ratio_label(ratio), &seed.to_string()],
    )
}

/// Builds the run list: per trainable classifier one labeled-only run per seed,
/// one mixed run per (cell, generator, positive ratio, seed), and optionally a
/// labeled-subset run paired with each mixed run. Prompting classifiers get one
/// run per seed.
pub fn plan_runs(config: &ExperimentConfig) -> Result<Vec<RunRecord>, OrchestratorError> {
    config.validate()?;
    let mut runs = Vec::new();
    let mut push = |classifier: ClassifierKind,
                    kind: RunKind,
                    cell: Option<StrategyCell>,
                    generator: Option<&str>,
                    ratio: f64,
                    seed: u64| {
        let cell_s = cell.map(|c| c.to_string()).unwrap_or_else(|| "none".into());
        let gen_s = generator.unwrap_or("none");
        let group = match kind {
            RunKind::LabeledOnly => format!("labeled_only.{classifier}"),
            RunKind::Mixed => format!("{cell_s}.{}.{classifier}", path_safe(gen_s)),
            RunKind::LabeledSubset => format!("{cell_s}.{}.{classifier}.labeled_subset", path_safe(gen_s)),
            RunKind::Prompting => format!("{classifier}.{}", path_safe(&config.llm_classifier.model)),
        };
        let dir = PathBuf::from(group).join(ratio_label(ratio)).join(seed.to_string());
        runs.push(RunRecord {
            index: runs.len(),
            study: config.study.clone(),
            classifier,
            kind,
            cell,
            generator_model: generator.map(str::to_string),
            ratio,
            seed,
            mix_seed: mix_seed(config, &cell_s, gen_s, ratio, seed),
            train_seed: train_seed(config, classifier, kind, &cell_s, gen_s, ratio, seed),
            dir,
            status: RunStatus::Pending,
            wall_clock_ms: 0,
            requests: 0,
        });
    };

    let nonzero = config.nonzero_ratios();
    let has_zero = config.ratios.contains(&0.0);
    for &classifier in &config.classifiers {
        if classifier == ClassifierKind::LlmPrompting {
            for &seed in &config.seeds {
                push(classifier, RunKind::Prompting, None, None, 0.0, seed);
            }
            continue;
        }
        if has_zero {
            for &seed in &config.seeds {
                push(classifier, RunKind::LabeledOnly, None, None, 0.0, seed);
            }
        }
        let mut kinds = vec![RunKind::Mixed];
        if config.labeled_subset_baselines {
            kinds.push(RunKind::LabeledSubset);
        }
        for kind in kinds {
            for &cell in &config.cells {
                for generator in &config.generator_models {
                    for &ratio in &nonzero {
                        for &seed in &config.seeds {
                            push(classifier, kind, Some(cell), Some(generator), ratio, seed);
                        }
                    }
                }
            }
        }
    }
    Ok(runs)
}
