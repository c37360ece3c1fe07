//! Synthetic pools: one per (strategy cell, generator model), generated once at
//! the largest size any ratio needs and subsampled by every run.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plan::path_safe;
use super::OrchestratorError;
use crate::corpus::{read_jsonl, synthetic_demand, write_jsonl, Corpus, Example};
use crate::instruments::Instrument;
use crate::llmgateway::Gateway;
use crate::promptgen::{build_generation_prompt, parse_generation_response, StrategyCell, TemplateSet};
use crate::util::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub cell: StrategyCell,
    pub generator_model: String,
    /// (class, synthetic examples needed), in class order; classes without
    /// instrument items are absent.
    pub targets: Vec<(String, usize)>,
}

impl PoolSpec {
    pub fn name(&self) -> String {
        format!("{}.{}", self.cell, path_safe(&self.generator_model))
    }

    pub fn planned_calls(&self, batch_size: usize) -> u64 {
        self.targets.iter().map(|(_, n)| n.div_ceil(batch_size) as u64).sum()
    }
}

/// Pool specs for every (cell, generator) used by a positive ratio.
pub fn pool_specs(config: &ExperimentConfig, instrument: &Instrument, per_class_n: usize) -> Vec<PoolSpec> {
    let supplied_classes = instrument.classes_with_items();
    let has_supply: Vec<bool> = instrument.classes.iter().map(|c| supplied_classes.contains(c)).collect();
    let mut targets: Vec<usize> = vec![0; instrument.classes.len()];
    for r in config.nonzero_ratios() {
        let (demand, _) = synthetic_demand(&instrument.classes, &has_supply, per_class_n, r, config.scope);
        for (t, d) in targets.iter_mut().zip(demand) {
            *t = (*t).max(d);
        }
    }
    let targets: Vec<(String, usize)> = instrument
        .classes
        .iter()
        .zip(&targets)
        .filter(|(_, &n)| n > 0)
        .map(|(c, &n)| (c.clone(), n))
        .collect();
    if targets.is_empty() {
        return Vec::new();
    }
    let mut specs = Vec::new();
    for &cell in &config.cells {
        for generator in &config.generator_models {
            specs.push(PoolSpec {
                cell,
                generator_model: generator.clone(),
                targets: targets.clone(),
            });
        }
    }
    specs
}

/// Gateway calls needed when every call returns a full batch.
pub fn generation_budget(specs: &[PoolSpec], batch_size: usize) -> u64 {
    specs.iter().map(|s| s.planned_calls(batch_size)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMeta {
    pub spec: PoolSpec,
    pub batch_size: usize,
    pub planned_calls: u64,
    pub rerequests: u64,
    pub generated: usize,
}

#[derive(Debug, Clone)]
pub struct Pool {
    pub corpus: Corpus,
    pub meta: PoolMeta,
    /// True when read back from disk rather than generated in this process.
    pub reused: bool,
}

/// Everything pool generation reads.
pub struct PoolContext<'a> {
    pub config: &'a ExperimentConfig,
    pub instrument: &'a Instrument,
    pub templates: &'a TemplateSet,
    /// Real texts alternation prompts draw their examples from.
    pub labeled_pool: &'a Corpus,
    pub dir: PathBuf,
}

fn pool_paths(dir: &Path, spec: &PoolSpec) -> (PathBuf, PathBuf) {
    let name = spec.name();
    (dir.join(format!("{name}.jsonl")), dir.join(format!("{name}.meta.json")))
}

/// Loads a previously completed pool with the same spec, if present.
pub fn load_pool(ctx: &PoolContext<'_>, spec: &PoolSpec) -> Option<Pool> {
    let (data, meta) = pool_paths(&ctx.dir, spec);
    let meta: PoolMeta = serde_json::from_str(&std::fs::read_to_string(meta).ok()?).ok()?;
    if meta.spec != *spec || meta.batch_size != ctx.config.generation.batch_size {
        return None;
    }
    let examples = read_jsonl(data).ok()?;
    let corpus = Corpus::new(ctx.config.study.clone(), ctx.instrument.classes.clone(), examples).ok()?;
    Some(Pool {
        corpus,
        meta,
        reused: true,
    })
}

struct CallOutcome {
    examples: Vec<Example>,
}

fn one_call(
    ctx: &PoolContext<'_>,
    gateway: &Gateway,
    spec: &PoolSpec,
    class_index: usize,
    class: &str,
    call: usize,
) -> Result<CallOutcome, OrchestratorError> {
    let cfg = ctx.config;
    let cell = spec.cell.to_string();
    let call_s = call.to_string();
    let coords = [cfg.study.as_str(), "pool", &cell, &spec.generator_model, class, &call_s];
    let mut rng = rng_from_seed(derive_seed(cfg.master_seed, &coords));
    let seeds: Vec<(String, String)> = match spec.cell.generation {
        crate::promptgen::GenerationType::Alternation => {
            let n = ctx.templates.alternation_examples.min(ctx.labeled_pool.len());
            sample(&mut rng, ctx.labeled_pool.len(), n)
                .into_iter()
                .map(|i| {
                    let e = &ctx.labeled_pool.examples[i];
                    (e.id.clone(), e.text.clone())
                })
                .collect()
        }
        crate::promptgen::GenerationType::New => Vec::new(),
    };
    let batch = build_generation_prompt(
        ctx.templates,
        spec.cell,
        ctx.instrument,
        class,
        &seeds,
        cfg.generation.batch_size,
        &mut rng,
    )
    .map_err(|e| OrchestratorError::Generation(format!("{}: {e}", spec.name())))?;
    let nonce = coords.join("/");
    let result = gateway
        .complete(&batch.prompt, &cfg.generation.config_for(&spec.generator_model), &nonce)
        .map_err(|e| OrchestratorError::Generation(format!("{} {class} call {call}: {e}", spec.name())))?;
    let prefix = format!(
        "S.{}{}.{}.{class_index}.{call:05}",
        spec.cell.codes().0,
        spec.cell.codes().1,
        path_safe(&spec.generator_model)
    );
    let examples = match parse_generation_response(&result.raw_text, &batch, &spec.generator_model, &result.request_fingerprint, &prefix) {
        Ok((examples, _)) => examples,
        Err(e) => {
            tracing::warn!(pool = %spec.name(), class, call, error = %e, "unusable generation response");
            Vec::new()
        }
    };
    Ok(CallOutcome { examples })
}

/// Generates a pool: the planned calls per class run concurrently, then
/// re-requests fill any shortfall one call at a time.
pub fn generate_pool(ctx: &PoolContext<'_>, gateway: &Gateway, spec: &PoolSpec) -> Result<Pool, OrchestratorError> {
    let batch = ctx.config.generation.batch_size;
    let mut all = Vec::new();
    let mut planned_total = 0u64;
    let mut rerequests = 0u64;
    for (class, target) in &spec.targets {
        let class_index = ctx
            .instrument
            .classes
            .iter()
            .position(|c| c == class)
            .expect("target classes come from the instrument");
        let planned = target.div_ceil(batch);
        planned_total += planned as u64;
        let outcomes: Vec<Result<CallOutcome, OrchestratorError>> = (0..planned)
            .into_par_iter()
            .map(|call| one_call(ctx, gateway, spec, class_index, class, call))
            .collect();
        let mut got = Vec::with_capacity(*target);
        for o in outcomes {
            got.extend(o?.examples);
        }
        let allowed = (planned as f64 * ctx.config.generation.max_rerequest_factor).ceil() as usize;
        let mut call = planned;
        while got.len() < *target {
            if call - planned >= allowed {
                return Err(OrchestratorError::Generation(format!(
                    "{}: class {class:?} has {} of {target} texts after {allowed} re-requests",
                    spec.name(),
                    got.len()
                )));
            }
            got.extend(one_call(ctx, gateway, spec, class_index, class, call)?.examples);
            rerequests += 1;
            call += 1;
        }
        got.truncate(*target);
        all.extend(got);
    }
    let corpus = Corpus::new(ctx.config.study.clone(), ctx.instrument.classes.clone(), all)?;
    let meta = PoolMeta {
        spec: spec.clone(),
        batch_size: batch,
        planned_calls: planned_total,
        rerequests,
        generated: corpus.len(),
    };
    std::fs::create_dir_all(&ctx.dir)?;
    let (data_path, meta_path) = pool_paths(&ctx.dir, spec);
    write_jsonl(&data_path, &corpus.examples)?;
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
    Ok(Pool {
        corpus,
        meta,
        reused: false,
    })
}
