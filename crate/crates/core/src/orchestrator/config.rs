//! Experiment configuration file (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::classifier::{FeatureConfig, TrainConfig, UnparseablePolicy};
use crate::corpus::{MixScope, SchemaMapping};
use crate::evaluator::GenerationAggregation;
use crate::instruments::Instrument;
use crate::llmgateway::{GenerationConfig, MockFormat, MockMode};
use crate::promptgen::{StrategyCell, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Linear,
    LlmPrompting,
    ExternalHandoff,
}

impl ClassifierKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::LlmPrompting => "llm_prompting",
            Self::ExternalHandoff => "external_handoff",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSet {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled pool the training sets are drawn from.
    pub train: PathBuf,
    /// In-domain test file. When absent, a stratified `test_fraction` of `train` is held out.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub ood: Vec<OodSet>,
    #[serde(default = "default_text_field")]
    pub text_field: String,
    #[serde(default = "default_label_field")]
    pub label_field: String,
    #[serde(default)]
    pub id_field: Option<String>,
    /// JSON file mapping raw labels to classes.
    #[serde(default)]
    pub aliases_file: Option<PathBuf>,
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

fn default_text_field() -> String {
    "text".into()
}

fn default_label_field() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_secs: f64,
    pub batch_size: usize,
    /// Extra calls allowed per class when responses come back short, as a
    /// multiple of the planned call count.
    pub max_rerequest_factor: f64,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_output_tokens: None,
            timeout_secs: 60.0,
            max_retries: 5,
            max_in_flight: 4,
            backoff_secs: 1.0,
            batch_size: crate::promptgen::DEFAULT_BATCH_SIZE,
            max_rerequest_factor: 1.0,
        }
    }
}

impl GenerationSettings {
    pub fn config_for(&self, model: &str) -> GenerationConfig {
        GenerationConfig {
            model_name: model.to_string(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            request_timeout: Duration::from_secs_f64(self.timeout_secs.max(0.001)),
            max_retries: self.max_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub mode: MockMode,
    pub noise_rate: f64,
    pub refusal_rate: f64,
    pub format: MockFormat,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            mode: MockMode::KeywordFaithful,
            noise_rate: 0.0,
            refusal_rate: 0.0,
            format: MockFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmClassifierSettings {
    pub model: String,
    pub temperature: f64,
    pub policy: UnparseablePolicy,
}

impl Default for LlmClassifierSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            temperature: 1.0,
            policy: UnparseablePolicy::Abstain(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSettings {
    pub features: FeatureConfig,
    pub c: f64,
    pub epochs: usize,
}

impl Default for LinearSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            features: FeatureConfig::default(),
            c: t.c,
            epochs: t.epochs,
        }
    }
}

impl LinearSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            c: self.c,
            epochs: self.epochs,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: String,
    /// Path to an instrument file, or `bundled:sexism` / `bundled:topics`.
    pub instrument: String,
    /// Template set file; defaults to the built-in set for the instrument's genre.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_cells")]
    pub cells: Vec<StrategyCell>,
    #[serde(default = "default_generators")]
    pub generator_models: Vec<String>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Training examples per class. Defaults to the smallest class in the train pool.
    #[serde(default)]
    pub per_class_train: Option<usize>,
    /// Balance the in-domain test set to this many per class before splitting.
    #[serde(default)]
    pub per_class_test: Option<usize>,
    #[serde(default = "default_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub scope: MixScope,
    #[serde(default = "default_true")]
    pub labeled_subset_baselines: bool,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub diff_aggregation: GenerationAggregation,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default)]
    pub mock: MockSettings,
    #[serde(default)]
    pub llm_classifier: LlmClassifierSettings,
    #[serde(default)]
    pub linear: LinearSettings,
}

fn default_ratios() -> Vec<f64> {
    vec![0.0, 0.3, 0.5, 0.7, 0.9, 1.0]
}

fn default_cells() -> Vec<StrategyCell> {
    StrategyCell::all().to_vec()
}

fn default_generators() -> Vec<String> {
    vec!["gpt-3.5-turbo".into()]
}

fn default_classifiers() -> Vec<ClassifierKind> {
    vec![ClassifierKind::Linear]
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_fraction() -> f64 {
    0.3
}

fn default_true() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

impl ExperimentConfig {
    pub fn from_toml(raw: &str) -> Result<Self, OrchestratorError> {
        let config: Self = toml::from_str(raw).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, OrchestratorError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.train);
        if let Some(t) = self.data.test.as_mut() {
            fix(t);
        }
        for set in &mut self.data.ood {
            fix(&mut set.path);
        }
        if let Some(a) = self.data.aliases_file.as_mut() {
            fix(a);
        }
        if let Some(t) = self.templates.as_mut() {
            fix(t);
        }
        fix(&mut self.output_dir);
        if !self.instrument.starts_with("bundled:") && Path::new(&self.instrument).is_relative() {
            self.instrument = base.join(&self.instrument).display().to_string();
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let fail = |m: String| Err(OrchestratorError::Config(m));
        if self.study.trim().is_empty() || self.study.contains(['/', '\\']) || self.study.starts_with('.') {
            return fail(format!("study id {:?} must be a plain, non-blank name", self.study));
        }
        if self.ratios.is_empty() {
            return fail("ratios must be non-empty".into());
        }
        if let Some(r) = self.ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return fail(format!("ratio {r} is outside [0, 1]"));
        }
        if has_duplicates(&self.ratios) {
            return fail("ratios must be distinct".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds must be non-empty".into());
        }
        if has_duplicates(&self.seeds) {
            return fail("seeds must be distinct".into());
        }
        if self.cells.is_empty() && self.ratios.iter().any(|&r| r > 0.0) {
            return fail("cells must be non-empty when a ratio is positive".into());
        }
        if has_duplicates(&self.cells) {
            return fail("cells must be distinct".into());
        }
        if self.generator_models.is_empty() || self.generator_models.iter().any(|m| m.trim().is_empty()) {
            return fail("generator_models must be non-empty and non-blank".into());
        }
        if has_duplicates(&self.generator_models) {
            return fail("generator_models must be distinct".into());
        }
        if self.classifiers.is_empty() {
            return fail("classifiers must be non-empty".into());
        }
        if has_duplicates(&self.classifiers) {
            return fail("classifiers must be distinct".into());
        }
        for (name, f) in [("validation_fraction", self.validation_fraction), ("test_fraction", self.test_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return fail(format!("{name} must be in (0, 1), got {f}"));
            }
        }
        if self.per_class_train == Some(0) || self.per_class_test == Some(0) {
            return fail("per-class sizes must be positive".into());
        }
        if self.generation.batch_size == 0 {
            return fail("generation.batch_size must be positive".into());
        }
        if !(self.generation.temperature >= 0.0) {
            return fail("generation.temperature must be >= 0".into());
        }
        if !(self.generation.max_rerequest_factor >= 0.0) {
            return fail("generation.max_rerequest_factor must be >= 0".into());
        }
        for (name, p) in [("mock.noise_rate", self.mock.noise_rate), ("mock.refusal_rate", self.mock.refusal_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        let mut ood_names: Vec<&str> = self.data.ood.iter().map(|o| o.name.as_str()).collect();
        ood_names.push("heldout");
        if has_duplicates(&ood_names) || ood_names.iter().any(|n| n.trim().is_empty() || n.contains(['/', '\\'])) {
            return fail("OOD set names must be distinct, plain, and not \"heldout\"".into());
        }
        self.linear.features.validate().map_err(|e| OrchestratorError::Config(e.to_string()))?;
        self.linear
            .train_config(0)
            .validate()
            .map_err(|e| OrchestratorError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn load_instrument(&self) -> Result<Instrument, OrchestratorError> {
        let result = match self.instrument.as_str() {
            "bundled:sexism" => Ok(Instrument::bundled_sexism()),
            "bundled:topics" => Ok(Instrument::bundled_topics()),
            other if other.starts_with("bundled:") => {
                return Err(OrchestratorError::Config(format!("no bundled instrument {other:?}")))
            }
            path => Instrument::load(path),
        };
        result.map_err(|e| OrchestratorError::Config(format!("instrument: {e}")))
    }

    pub fn load_templates(&self, instrument: &Instrument) -> Result<TemplateSet, OrchestratorError> {
        match &self.templates {
            Some(path) => TemplateSet::load(path),
            None => TemplateSet::for_instrument(instrument),
        }
        .map_err(|e| OrchestratorError::Config(format!("templates: {e}")))
    }

    pub fn schema_mapping(&self, classes: &[String]) -> Result<SchemaMapping, OrchestratorError> {
        let mut aliases = match &self.data.aliases_file {
            Some(path) => SchemaMapping::load_aliases(path).map_err(|e| OrchestratorError::Config(e.to_string()))?,
            None => BTreeMap::new(),
        };
        aliases.extend(self.data.aliases.clone());
        Ok(SchemaMapping {
            text_field: self.data.text_field.clone(),
            label_field: self.data.label_field.clone(),
            id_field: self.data.id_field.clone(),
            classes: Some(classes.to_vec()),
            aliases,
        })
    }

    /// Directory holding everything for this study.
    pub fn study_dir(&self) -> PathBuf {
        self.output_dir.join(&self.study)
    }

    pub fn nonzero_ratios(&self) -> Vec<f64> {
        self.ratios.iter().copied().filter(|&r| r > 0.0).collect()
    }
}
