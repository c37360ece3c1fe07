//! Runs a plan: prepare data, build synthetic pools, then mix, train and
//! evaluate every run on a bounded worker pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BackendKind, ClassifierKind, ExperimentConfig};
use super::plan::{RunKind, RunRecord, RunStatus};
use super::pools::{generate_pool, load_pool, pool_specs, Pool, PoolContext, PoolSpec};
use super::OrchestratorError;
use crate::classifier::{
    external_trainer_handoff, llm_classify, predict, read_predictions, align_predictions, ClassifierError, FeatureConfig,
    HandoffManifest, ModelArtifact, PredictionRow, TrainConfig,
};
use crate::corpus::{
    balance, labeled_subset, load_corpus, materialize_mix, plan_mix, read_jsonl, split_validation, write_jsonl, Corpus,
    MixPlan,
};
use crate::evaluator::{evaluate, pack_per_class, write_results_csv, EvalResult, ModelDescriptor, ResultRow};
use crate::instruments::Instrument;
use crate::llmgateway::{
    ChatBackend, Gateway, GatewayOptions, HttpBackend, MockBackend, MockProfile, MockVocabulary,
};
use crate::promptgen::TemplateSet;
use crate::util::{derive_seed, rng_from_seed};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUBSET_RESULTS_FILE: &str = "labeled_subset_results.csv";
pub const HELDOUT: &str = "heldout";

/// Trains one model. Swappable so tests can plant failures.
pub trait Trainer: Send + Sync {
    fn train(
        &self,
        run: &RunRecord,
        corpus: &Corpus,
        features: &FeatureConfig,
        config: &TrainConfig,
    ) -> Result<ModelArtifact, ClassifierError>;
}

pub struct LinearTrainer;

impl Trainer for LinearTrainer {
    fn train(
        &self,
        _run: &RunRecord,
        corpus: &Corpus,
        features: &FeatureConfig,
        config: &TrainConfig,
    ) -> Result<ModelArtifact, ClassifierError> {
        crate::classifier::train(corpus, features, config)
    }
}

/// The fixed evaluation data shared by all runs.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub classes: Vec<String>,
    /// Balanced labeled training pool.
    pub labeled_pool: Corpus,
    pub per_class_n: usize,
    pub validation: Corpus,
    pub heldout: Corpus,
    pub ood: Vec<(String, Corpus)>,
}

impl PreparedData {
    /// (dataset name, split, corpus) for every evaluation set.
    pub fn eval_sets(&self) -> Vec<(&str, &str, &Corpus)> {
        let mut sets = vec![(HELDOUT, "in_domain", &self.heldout)];
        sets.extend(self.ood.iter().map(|(n, c)| (n.as_str(), "ood", c)));
        sets
    }
}

/// Loads, balances and splits the labeled data. All draws derive from the master seed.
pub fn prepare_data(config: &ExperimentConfig, instrument: &Instrument) -> Result<PreparedData, OrchestratorError> {
    let classes = instrument.classes.clone();
    let mapping = config.schema_mapping(&classes)?;
    let seed = |what: &str| rng_from_seed(derive_seed(config.master_seed, &[&config.study, what]));
    let train_all = load_corpus(&config.data.train, &config.study, &mapping)?;
    let (test, train_all) = match &config.data.test {
        Some(path) => (load_corpus(path, &config.study, &mapping)?, train_all),
        None => split_validation(&train_all, config.test_fraction, &mut seed("test-split"))?,
    };
    let per_class_n = match config.per_class_train {
        Some(n) => n,
        None => train_all.class_counts().iter().map(|(_, n)| *n).min().unwrap_or(0),
    };
    if per_class_n == 0 {
        return Err(OrchestratorError::Data("a class has no training examples".into()));
    }
    let labeled_pool = balance(&train_all, per_class_n, &mut seed("balance-train"))?;
    let test = match config.per_class_test {
        Some(n) => balance(&test, n, &mut seed("balance-test"))?,
        None => test,
    };
    let (validation, heldout) = split_validation(&test, config.validation_fraction, &mut seed("validation-split"))?;
    let mut ood = Vec::new();
    for set in &config.data.ood {
        ood.push((set.name.clone(), load_corpus(&set.path, &config.study, &mapping)?));
    }
    Ok(PreparedData {
        classes,
        labeled_pool,
        per_class_n,
        validation,
        heldout,
        ood,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ExecuteOptions {
    pub resume: bool,
    /// Worker threads for runs; 0 uses the rayon default.
    pub jobs: usize,
    /// Stop every run once it reaches this status (used to simulate an interrupted run).
    pub stop_after: Option<RunStatus>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSummary {
    pub runs: Vec<RunRecord>,
    pub results: Vec<ResultRow>,
    pub subset_results: Vec<ResultRow>,
    /// Planned generation calls for pools generated in this execution.
    pub planned_generation_calls: u64,
    pub rerequests: u64,
    /// Generation calls that reached the backend (cache misses).
    pub generation_requests: u64,
    pub classification_requests: u64,
    pub pools_generated: usize,
    pub pools_reused: usize,
    /// (run id, error) for every failed run or pool.
    pub failures: Vec<(String, String)>,
}

impl ExecutionSummary {
    pub fn count(&self, status: RunStatus) -> usize {
        self.runs.iter().filter(|r| r.status == status).count()
    }

    /// 0 when everything succeeded, 1 when any run failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StatusFile {
    status: RunStatus,
    #[serde(default)]
    error: Option<String>,
    wall_clock_ms: u64,
    requests: u64,
    run: RunRecord,
    #[serde(default)]
    notes: Vec<String>,
}

pub struct Executor {
    pub config: ExperimentConfig,
    pub instrument: Instrument,
    pub templates: TemplateSet,
    generation: Gateway,
    classification: Gateway,
    trainer: Box<dyn Trainer>,
}

/// Mock backend answering with the instrument's keyword vocabulary.
pub fn mock_backend(config: &ExperimentConfig, instrument: &Instrument, templates: &TemplateSet) -> MockBackend {
    let mut profile = MockProfile::new(
        config.mock.mode,
        config.mock.noise_rate,
        MockVocabulary::from_instrument(instrument, templates),
    );
    profile.refusal_rate = config.mock.refusal_rate;
    profile.format = config.mock.format;
    MockBackend::new(profile, config.master_seed)
}

impl Executor {
    pub fn new(
        config: ExperimentConfig,
        generation_backend: impl ChatBackend + 'static,
        classification_backend: impl ChatBackend + 'static,
    ) -> Result<Self, OrchestratorError> {
        config.validate()?;
        let instrument = config.load_instrument()?;
        let templates = config.load_templates(&instrument)?;
        let options = GatewayOptions {
            max_in_flight: config.generation.max_in_flight,
            backoff_base: std::time::Duration::from_secs_f64(config.generation.backoff_secs.max(0.0)),
            cache_dir: Some(config.study_dir().join("cache")),
        };
        Ok(Self {
            generation: Gateway::new(generation_backend, options.clone())?,
            classification: Gateway::new(classification_backend, options)?,
            config,
            instrument,
            templates,
            trainer: Box::new(LinearTrainer),
        })
    }

    /// Builds an executor with the backend named in the config (or `backend` when given).
    pub fn from_config(config: ExperimentConfig, backend: Option<BackendKind>) -> Result<Self, OrchestratorError> {
        match backend.unwrap_or(config.backend) {
            BackendKind::Mock => {
                let instrument = config.load_instrument()?;
                let templates = config.load_templates(&instrument)?;
                let mock = mock_backend(&config, &instrument, &templates);
                Self::new(config, mock.clone(), mock)
            }
            BackendKind::Http => {
                let http = HttpBackend::from_env()?;
                Self::new(config, http.clone(), http)
            }
        }
    }

    pub fn with_trainer(mut self, trainer: impl Trainer + 'static) -> Self {
        self.trainer = Box::new(trainer);
        self
    }

    pub fn generation_gateway(&self) -> &Gateway {
        &self.generation
    }

    pub fn prepare(&self) -> Result<PreparedData, OrchestratorError> {
        let data = prepare_data(&self.config, &self.instrument)?;
        let dir = self.config.study_dir().join("data");
        std::fs::create_dir_all(&dir)?;
        data.labeled_pool.write_jsonl(dir.join("train_pool.jsonl"))?;
        data.validation.write_jsonl(dir.join("validation.jsonl"))?;
        data.heldout.write_jsonl(dir.join("heldout.jsonl"))?;
        for (name, corpus) in &data.ood {
            corpus.write_jsonl(dir.join(format!("ood.{name}.jsonl")))?;
        }
        Ok(data)
    }

    pub fn pool_specs(&self, data: &PreparedData) -> Vec<PoolSpec> {
        pool_specs(&self.config, &self.instrument, data.per_class_n)
    }

    fn pool_context<'a>(&'a self, data: &'a PreparedData) -> PoolContext<'a> {
        PoolContext {
            config: &self.config,
            instrument: &self.instrument,
            templates: &self.templates,
            labeled_pool: &data.labeled_pool,
            dir: self.config.study_dir().join("pools"),
        }
    }

    /// Generates (or with `resume`, reloads) every synthetic pool the plan needs.
    pub fn build_pools(
        &self,
        data: &PreparedData,
        specs: &[PoolSpec],
        resume: bool,
        summary: &mut ExecutionSummary,
    ) -> BTreeMap<String, Result<Pool, String>> {
        let ctx = self.pool_context(data);
        let mut pools = BTreeMap::new();
        for spec in specs {
            let pool = match resume.then(|| load_pool(&ctx, spec)).flatten() {
                Some(pool) => {
                    summary.pools_reused += 1;
                    Ok(pool)
                }
                None => match generate_pool(&ctx, &self.generation, spec) {
                    Ok(pool) => {
                        summary.pools_generated += 1;
                        summary.planned_generation_calls += pool.meta.planned_calls;
                        summary.rerequests += pool.meta.rerequests;
                        Ok(pool)
                    }
                    Err(e) => {
                        summary.failures.push((format!("pool {}", spec.name()), e.to_string()));
                        Err(e.to_string())
                    }
                },
            };
            pools.insert(spec.name(), pool);
        }
        pools
    }

    pub fn execute(&self, runs: Vec<RunRecord>, options: &ExecuteOptions) -> Result<ExecutionSummary, OrchestratorError> {
        let study_dir = self.config.study_dir();
        std::fs::create_dir_all(&study_dir)?;
        let data = self.prepare()?;
        let needs_pools = runs
            .iter()
            .any(|r| matches!(r.kind, RunKind::Mixed | RunKind::LabeledSubset));
        let specs = if needs_pools { self.pool_specs(&data) } else { Vec::new() };
        let mut summary = ExecutionSummary::default();
        let pools = self.build_pools(&data, &specs, options.resume, &mut summary);

        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| OrchestratorError::Config(format!("worker pool: {e}")))?;
        let outcomes: Vec<RunOutcome> = workers.install(|| {
            runs.par_iter()
                .map(|run| self.run_one(run, &data, &pools, options))
                .collect()
        });

        for outcome in outcomes {
            if let Some(err) = &outcome.error {
                summary.failures.push((outcome.run.id(), err.clone()));
            }
            summary.classification_requests += outcome.requests;
            match outcome.run.kind {
                RunKind::LabeledSubset => summary.subset_results.extend(outcome.rows),
                _ => summary.results.extend(outcome.rows),
            }
            summary.runs.push(outcome.run);
        }
        summary.generation_requests = self.generation.stats().requests;
        if options.stop_after.is_some() {
            return Ok(summary);
        }

        write_results_csv(study_dir.join(RESULTS_FILE), &summary.results)?;
        write_results_csv(study_dir.join(SUBSET_RESULTS_FILE), &summary.subset_results)?;
        std::fs::write(
            study_dir.join("plan.json"),
            serde_json::to_string_pretty(&summary.runs).expect("runs serialize"),
        )?;
        Ok(summary)
    }

    fn run_one(
        &self,
        run: &RunRecord,
        data: &PreparedData,
        pools: &BTreeMap<String, Result<Pool, String>>,
        options: &ExecuteOptions,
    ) -> RunOutcome {
        let started = Instant::now();
        let dir = self.config.study_dir().join(&run.dir);
        let prior = if options.resume { read_status(&dir) } else { None };
        let mut state = RunState {
            run: run.clone(),
            dir,
            notes: Vec::new(),
            requests: 0,
        };
        let result = self.drive(&mut state, prior, data, pools, options);
        let (error, rows) = match result {
            Ok(rows) => (None, rows),
            Err(e) => {
                state.run.status = RunStatus::Failed;
                (Some(e.to_string()), Vec::new())
            }
        };
        state.run.wall_clock_ms = started.elapsed().as_millis() as u64;
        state.run.requests = state.requests;
        let status = StatusFile {
            status: state.run.status,
            error: error.clone(),
            wall_clock_ms: state.run.wall_clock_ms,
            requests: state.requests,
            run: state.run.clone(),
            notes: state.notes.clone(),
        };
        if let Err(e) = write_status(&state.dir, &status) {
            tracing::error!(run = %state.run.id(), error = %e, "could not write status file");
        }
        if let Some(e) = &error {
            tracing::warn!(run = %state.run.id(), error = %e, "run failed");
        }
        RunOutcome {
            run: state.run,
            rows,
            error,
            requests: state.requests,
        }
    }

    fn drive(
        &self,
        state: &mut RunState,
        prior: Option<StatusFile>,
        data: &PreparedData,
        pools: &BTreeMap<String, Result<Pool, String>>,
        options: &ExecuteOptions,
    ) -> Result<Vec<ResultRow>, OrchestratorError> {
        let reached = |s: RunStatus| {
            prior
                .as_ref()
                .is_some_and(|p| p.status <= RunStatus::Evaluated && p.status >= s)
        };
        let stop = |s: RunStatus| options.stop_after == Some(s);
        let rows_path = state.dir.join("eval").join("rows.json");

        if reached(RunStatus::Evaluated) {
            if let Ok(raw) = std::fs::read_to_string(&rows_path) {
                if let Ok(rows) = serde_json::from_str::<Vec<ResultRow>>(&raw) {
                    state.run.status = RunStatus::Evaluated;
                    return Ok(rows);
                }
            }
        }

        if state.run.kind == RunKind::Prompting {
            let rows = self.evaluate_prompting(state, data)?;
            save_rows(&rows_path, &rows)?;
            state.run.status = RunStatus::Evaluated;
            return Ok(rows);
        }

        // generate: materialize the training corpus
        let train_path = state.dir.join("data").join("train.jsonl");
        let train = match reached(RunStatus::Generated).then(|| read_jsonl(&train_path).ok()).flatten() {
            Some(examples) => Corpus::new(self.config.study.clone(), data.classes.clone(), examples)?,
            None => {
                let Some(train) = self.build_training_corpus(state, data, pools)? else {
                    state.run.status = RunStatus::Skipped;
                    return Ok(Vec::new());
                };
                write_jsonl(&train_path, &train.examples)?;
                train
            }
        };
        state.run.status = RunStatus::Generated;
        if stop(RunStatus::Generated) {
            return Ok(Vec::new());
        }

        match state.run.classifier {
            ClassifierKind::Linear => {
                let model_path = state.dir.join("model").join("model.json");
                let model = match reached(RunStatus::Trained).then(|| ModelArtifact::load(&model_path).ok()).flatten() {
                    Some(model) => model,
                    None => {
                        let tc = self.config.linear.train_config(state.run.train_seed);
                        let model = self.trainer.train(&state.run, &train, &self.config.linear.features, &tc)?;
                        std::fs::create_dir_all(model_path.parent().expect("model dir"))?;
                        model.save(&model_path)?;
                        model
                    }
                };
                state.run.status = RunStatus::Trained;
                if stop(RunStatus::Trained) {
                    return Ok(Vec::new());
                }
                let mut rows = Vec::new();
                for (name, split, corpus) in data.eval_sets() {
                    let preds: Vec<PredictionRow> = corpus
                        .examples
                        .iter()
                        .map(|e| PredictionRow {
                            id: e.id.clone(),
                            pred: predict(&model, &e.text).label,
                        })
                        .collect();
                    let aligned: Vec<Option<String>> = preds.iter().map(|p| Some(p.pred.clone())).collect();
                    rows.push(self.score(state, name, split, corpus, &aligned, Some(&preds))?);
                }
                save_rows(&rows_path, &rows)?;
                state.run.status = RunStatus::Evaluated;
                Ok(rows)
            }
            ClassifierKind::ExternalHandoff => {
                let handoff_dir = state.dir.join("data").join("handoff");
                let manifest = HandoffManifest {
                    study: self.config.study.clone(),
                    seed: state.run.seed,
                    ratio: state.run.ratio,
                    strategy: state.run.cell.map(|c| c.to_string()),
                    generator_model: state.run.generator_model.clone(),
                    labels: data.classes.clone(),
                    files: BTreeMap::new(),
                };
                external_trainer_handoff(&handoff_dir, &train, &data.validation, &data.heldout, &manifest)?;
                for (name, corpus) in &data.ood {
                    corpus.write_jsonl(handoff_dir.join(format!("ood.{name}.jsonl")))?;
                }
                state.run.status = RunStatus::Trained;
                let preds_dir = state.dir.join("preds");
                if !preds_dir.join(format!("{HELDOUT}.jsonl")).exists() {
                    state
                        .notes
                        .push(format!("waiting for predictions in {}", preds_dir.display()));
                    return Ok(Vec::new());
                }
                let mut rows = Vec::new();
                for (name, split, corpus) in data.eval_sets() {
                    let path = preds_dir.join(format!("{name}.jsonl"));
                    if !path.exists() {
                        continue;
                    }
                    let imported = read_predictions(&path, &data.classes)?;
                    let aligned = align_predictions(corpus, &imported);
                    rows.push(self.score(state, name, split, corpus, &aligned, None)?);
                }
                save_rows(&rows_path, &rows)?;
                state.run.status = RunStatus::Evaluated;
                Ok(rows)
            }
            ClassifierKind::LlmPrompting => unreachable!("prompting runs return earlier"),
        }
    }

    /// Returns `None` when the run has nothing trainable: a labeled subset with
    /// fewer than two classes, or with a class reduced to a single example.
    fn build_training_corpus(
        &self,
        state: &mut RunState,
        data: &PreparedData,
        pools: &BTreeMap<String, Result<Pool, String>>,
    ) -> Result<Option<Corpus>, OrchestratorError> {
        let run = &state.run;
        let empty = Corpus::new(self.config.study.clone(), data.classes.clone(), Vec::new())?;
        let synthetic = match (run.cell, &run.generator_model) {
            (Some(cell), Some(generator)) => {
                let name = PoolSpec {
                    cell,
                    generator_model: generator.clone(),
                    targets: Vec::new(),
                }
                .name();
                match pools.get(&name) {
                    Some(Ok(pool)) => &pool.corpus,
                    Some(Err(e)) => return Err(OrchestratorError::Generation(format!("pool {name} failed: {e}"))),
                    None => return Err(OrchestratorError::Generation(format!("pool {name} was not built"))),
                }
            }
            _ => &empty,
        };
        let plan = plan_mix(&data.labeled_pool, synthetic, data.per_class_n, run.ratio, self.config.scope)?;
        if plan.asymmetric {
            state.notes.push("synthetic data covers only some classes; see mix_plan.json".into());
        }
        save_json(&state.dir.join("data").join("mix_plan.json"), &plan)?;
        let mut rng = rng_from_seed(run.mix_seed);
        let corpus = match run.kind {
            RunKind::LabeledSubset => {
                let subset = labeled_subset(&plan, &data.labeled_pool, &mut rng)?;
                let counts = subset.class_counts();
                let present = counts.iter().filter(|(_, n)| *n > 0).count();
                if present < 2 {
                    state.notes.push(format!("labeled subset has {present} class(es); nothing to train"));
                    return Ok(None);
                }
                if let Some((class, n)) = counts.iter().find(|(_, n)| *n == 1) {
                    state.notes.push(format!("labeled subset keeps {n} example of {class:?}; training needs 2"));
                    return Ok(None);
                }
                subset
            }
            _ => materialize_mix(&plan, &data.labeled_pool, synthetic, &mut rng)?,
        };
        Ok(Some(corpus))
    }

    fn evaluate_prompting(&self, state: &mut RunState, data: &PreparedData) -> Result<Vec<ResultRow>, OrchestratorError> {
        let settings = &self.config.llm_classifier;
        let mut gen_cfg = self.config.generation.config_for(&settings.model);
        gen_cfg.temperature = settings.temperature;
        let mut rows = Vec::new();
        for (name, split, corpus) in data.eval_sets() {
            let texts = corpus.texts();
            let nonce = format!("{}/classify/{}/{name}", self.config.study, state.run.seed);
            let out = llm_classify(&self.classification, &gen_cfg, &data.classes, &texts, &settings.policy, &nonce)?;
            state.requests += (texts.len() - out.cached) as u64;
            if !out.abstentions.is_empty() {
                state.notes.push(format!("{name}: {} abstentions", out.abstentions.len()));
            }
            let preds: Vec<PredictionRow> = corpus
                .examples
                .iter()
                .zip(&out.predictions)
                .filter_map(|(e, p)| p.as_ref().map(|p| PredictionRow { id: e.id.clone(), pred: p.clone() }))
                .collect();
            rows.push(self.score(state, name, split, corpus, &out.predictions, Some(&preds))?);
        }
        Ok(rows)
    }

    fn score(
        &self,
        state: &RunState,
        dataset: &str,
        split: &str,
        corpus: &Corpus,
        preds: &[Option<String>],
        write_preds: Option<&[PredictionRow]>,
    ) -> Result<ResultRow, OrchestratorError> {
        let run = &state.run;
        let golds = corpus.labels();
        let descriptor = ModelDescriptor {
            classifier: run.classifier.to_string(),
            ratio: run.ratio,
            instruction: run.cell.map(|c| c.instruction),
            generation: run.cell.map(|c| c.generation),
            generator_model: run.generator_model.clone(),
        };
        let result: EvalResult = evaluate(&golds, preds, &corpus.classes, dataset, run.seed, descriptor)?;
        if let Some(rows) = write_preds {
            let path = state.dir.join("preds").join(format!("{dataset}.jsonl"));
            std::fs::create_dir_all(path.parent().expect("preds dir"))?;
            crate::classifier::write_predictions(&path, rows)?;
        }
        save_json(&state.dir.join("eval").join(format!("{dataset}.json")), &result)?;
        Ok(ResultRow {
            study: self.config.study.clone(),
            classifier: run.classifier.to_string(),
            generator_model: run.generator_model.clone().unwrap_or_default(),
            instruction: run.cell.map(|c| c.instruction.to_string()).unwrap_or_default(),
            generation: run.cell.map(|c| c.generation.to_string()).unwrap_or_default(),
            ratio: run.ratio,
            seed: run.seed,
            dataset: dataset.to_string(),
            split: split.to_string(),
            macro_f1: result.macro_f1,
            per_class_f1: pack_per_class(&result.per_class),
            abstentions: result.abstentions,
        })
    }
}

struct RunState {
    run: RunRecord,
    dir: PathBuf,
    notes: Vec<String>,
    requests: u64,
}

struct RunOutcome {
    run: RunRecord,
    rows: Vec<ResultRow>,
    error: Option<String>,
    requests: u64,
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OrchestratorError> {
    std::fs::create_dir_all(path.parent().expect("file has a parent"))?;
    std::fs::write(path, serde_json::to_string_pretty(value).expect("value serializes"))?;
    Ok(())
}

fn save_rows(path: &Path, rows: &[ResultRow]) -> Result<(), OrchestratorError> {
    save_json(path, &rows)
}

fn read_status(dir: &Path) -> Option<StatusFile> {
    serde_json::from_str(&std::fs::read_to_string(dir.join("status.json")).ok()?).ok()
}

fn write_status(dir: &Path, status: &StatusFile) -> Result<(), OrchestratorError> {
    save_json(&dir.join("status.json"), status)
}

/// Plan-shaped view of a mixed training set, for the `mix` subcommand.
pub fn mix_for_run(
    executor: &Executor,
    data: &PreparedData,
    pool: Option<&Corpus>,
    run: &RunRecord,
) -> Result<(MixPlan, Corpus), OrchestratorError> {
    let empty = Corpus::new(executor.config.study.clone(), data.classes.clone(), Vec::new())?;
    let synthetic = pool.unwrap_or(&empty);
    let plan = plan_mix(&data.labeled_pool, synthetic, data.per_class_n, run.ratio, executor.config.scope)?;
    let mut rng = rng_from_seed(run.mix_seed);
    let corpus = match run.kind {
        RunKind::LabeledSubset => labeled_subset(&plan, &data.labeled_pool, &mut rng)?,
        _ => materialize_mix(&plan, &data.labeled_pool, synthetic, &mut rng)?,
    };
    Ok((plan, corpus))
}
