//! Labeled and synthetic corpora: ingestion, class balancing, stratified
//! validation splits, and construction of mixed training sets at a given
//! synthetic ratio.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::promptgen::StrategyCell;
use crate::util::{is_blank, rng_from_seed, round_half_up, sha256_hex, SeededRng};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{0} contains no examples")]
    Empty(String),
    #[error("unknown label values: {}", format_counts(.0))]
    UnknownLabels(BTreeMap<String, usize>),
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("class {class:?} short by {deficit}")]
    InsufficientClass { class: String, deficit: usize },
    #[error("class {0:?} has fewer than 2 examples and cannot be split")]
    TooSmallToSplit(String),
    #[error("ratio {0} is outside [0, 1]")]
    BadRatio(f64),
    #[error("fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("class {class:?} needs {needed} synthetic examples but only {available} exist")]
    SyntheticShort { class: String, needed: usize, available: usize },
    #[error("class {class:?} needs {needed} labeled examples but only {available} exist")]
    LabeledShort { class: String, needed: usize, available: usize },
}

fn format_counts(counts: &BTreeMap<String, usize>) -> String {
    counts
        .iter()
        .map(|(k, v)| format!("{k:?} ({v} rows)"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Labeled,
    Synthetic,
}

/// Where a synthetic example came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: StrategyCell,
    pub generator_model: String,
    pub prompt_fingerprint: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_example_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Example {
    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            origin: Origin::Labeled,
            provenance: None,
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.origin == Origin::Synthetic
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub study: String,
    pub classes: Vec<String>,
    pub examples: Vec<Example>,
}

impl Corpus {
    /// Builds a corpus and checks its invariants.
    pub fn new(study: impl Into<String>, classes: Vec<String>, examples: Vec<Example>) -> Result<Self, CorpusError> {
        let corpus = Self {
            study: study.into(),
            classes,
            examples,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut ids = HashSet::with_capacity(self.examples.len());
        for ex in &self.examples {
            if !ids.insert(ex.id.as_str()) {
                return Err(CorpusError::Invalid(format!("duplicate example id {:?}", ex.id)));
            }
            if is_blank(&ex.text) {
                return Err(CorpusError::Invalid(format!("example {:?} has blank text", ex.id)));
            }
            if !self.classes.contains(&ex.label) {
                return Err(CorpusError::Invalid(format!(
                    "example {:?} has label {:?} outside the class set",
                    ex.id, ex.label
                )));
            }
            if ex.is_synthetic() && ex.provenance.is_none() {
                return Err(CorpusError::Invalid(format!("synthetic example {:?} lacks provenance", ex.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Per-class example counts in class order.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        self.classes
            .iter()
            .map(|c| (c.clone(), self.examples.iter().filter(|e| &e.label == c).count()))
            .collect()
    }

    pub fn count(&self, class: &str, origin: Origin) -> usize {
        self.examples
            .iter()
            .filter(|e| e.label == class && e.origin == origin)
            .count()
    }

    fn with_examples(&self, examples: Vec<Example>) -> Corpus {
        Corpus {
            study: self.study.clone(),
            classes: self.classes.clone(),
            examples,
        }
    }

    /// Drops every synthetic example, keeping order.
    pub fn labeled_only(&self) -> Corpus {
        self.with_examples(self.examples.iter().filter(|e| !e.is_synthetic()).cloned().collect())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.label.as_str()).collect()
    }

    /// Writes the interchange JSONL form (one example per line).
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        write_jsonl(path, &self.examples)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("example serializes");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads interchange JSONL written by [`write_jsonl`].
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>, CorpusError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| CorpusError::Format {
            path: path.display().to_string(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(ex);
    }
    Ok(out)
}

/// How the columns of a user-supplied file map onto examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMapping {
    pub text_field: String,
    pub label_field: String,
    pub id_field: Option<String>,
    /// Closed class set. When absent, classes are taken from the file in order of first appearance.
    pub classes: Option<Vec<String>>,
    /// Raw label (compared trimmed and case-insensitively) to class.
    pub aliases: BTreeMap<String, String>,
}

impl Default for SchemaMapping {
    fn default() -> Self {
        Self {
            text_field: "text".into(),
            label_field: "label".into(),
            id_field: None,
            classes: None,
            aliases: BTreeMap::new(),
        }
    }
}

impl SchemaMapping {
    /// Loads an alias map file: a JSON object from raw label to class.
    pub fn load_aliases(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, CorpusError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&raw).map_err(|e| CorpusError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn resolve_label(&self, raw: &str) -> Option<String> {
        let trimmed = raw.trim();
        let key = trimmed.to_lowercase();
        let alias = self
            .aliases
            .iter()
            .find(|(k, _)| k.trim().to_lowercase() == key)
            .map(|(_, v)| v.clone());
        match &self.classes {
            Some(classes) => {
                if classes.iter().any(|c| c == trimmed) {
                    Some(trimmed.to_string())
                } else {
                    alias.filter(|a| classes.contains(a))
                }
            }
            None => Some(alias.unwrap_or_else(|| trimmed.to_string())),
        }
    }
}

struct RawRow {
    id: Option<String>,
    text: String,
    label: String,
}

fn read_raw_rows(path: &Path, mapping: &SchemaMapping) -> Result<Vec<RawRow>, CorpusError> {
    let fmt_err = |message: String| CorpusError::Format {
        path: path.display().to_string(),
        message,
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let mut rows = Vec::new();
    if ext == "csv" || ext == "tsv" {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(if ext == "tsv" { b'\t' } else { b',' })
            .from_path(path)
            .map_err(|e| fmt_err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| fmt_err(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| fmt_err(format!("missing column {name:?}")))
        };
        let text_col = col(&mapping.text_field)?;
        let label_col = col(&mapping.label_field)?;
        let id_col = mapping.id_field.as_deref().map(col).transpose()?;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| fmt_err(format!("row {}: {e}", i + 1)))?;
            rows.push(RawRow {
                id: id_col.and_then(|c| record.get(c)).map(str::to_string),
                text: record.get(text_col).unwrap_or_default().to_string(),
                label: record.get(label_col).unwrap_or_default().to_string(),
            });
        }
    } else {
        let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| fmt_err(format!("line {}: {e}", i + 1)))?;
            let field = |name: &str| -> Option<String> {
                match value.get(name)? {
                    serde_json::Value::String(s) => Some(s.clone()),
                    serde_json::Value::Null => None,
                    other => Some(other.to_string()),
                }
            };
            let text = field(&mapping.text_field)
                .ok_or_else(|| fmt_err(format!("line {}: missing field {:?}", i + 1, mapping.text_field)))?;
            let label = field(&mapping.label_field)
                .ok_or_else(|| fmt_err(format!("line {}: missing field {:?}", i + 1, mapping.label_field)))?;
            let id = mapping.id_field.as_deref().and_then(field);
            rows.push(RawRow { id, text, label });
        }
    }
    Ok(rows)
}

/// Loads a human-labeled corpus from JSONL or CSV.
///
/// Ids come from `mapping.id_field` when set, otherwise from the row index and
/// a hash of the text.
pub fn load_corpus(path: impl AsRef<Path>, study: &str, mapping: &SchemaMapping) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let rows = read_raw_rows(path, mapping)?;
    if rows.is_empty() {
        return Err(CorpusError::Empty(path.display().to_string()));
    }
    let mut classes: Vec<String> = mapping.classes.clone().unwrap_or_default();
    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();
    let mut examples = Vec::with_capacity(rows.len());
    for (row, raw) in rows.into_iter().enumerate() {
        let text: String = raw.text.nfc().collect();
        if is_blank(&text) {
            return Err(CorpusError::Invalid(format!("row {} has blank text", row + 1)));
        }
        let Some(label) = mapping.resolve_label(&raw.label) else {
            *unknown.entry(raw.label.clone()).or_default() += 1;
            continue;
        };
        if mapping.classes.is_none() && !classes.contains(&label) {
            classes.push(label.clone());
        }
        let id = raw
            .id
            .filter(|s| !is_blank(s))
            .unwrap_or_else(|| format!("L{row:06}-{}", &sha256_hex(text.as_bytes())[..8]));
        examples.push(Example::labeled(id, text, label));
    }
    if !unknown.is_empty() {
        return Err(CorpusError::UnknownLabels(unknown));
    }
    Corpus::new(study, classes, examples)
}

fn indices_by_class(corpus: &Corpus, origin: Option<Origin>) -> HashMap<&str, Vec<usize>> {
    let mut map: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, ex) in corpus.examples.iter().enumerate() {
        if origin.map_or(true, |o| ex.origin == o) {
            map.entry(ex.label.as_str()).or_default().push(i);
        }
    }
    map
}

/// Picks `n` of `indices` without replacement.
fn sample_indices(indices: &[usize], n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut pool = indices.to_vec();
    let (picked, _) = pool.partial_shuffle(rng, n);
    picked.to_vec()
}

/// Samples exactly `per_class_n` examples of every class without replacement.
/// The returned corpus keeps the input order.
pub fn balance(corpus: &Corpus, per_class_n: usize, rng: &mut SeededRng) -> Result<Corpus, CorpusError> {
    let by_class = indices_by_class(corpus, None);
    let mut keep = Vec::with_capacity(per_class_n * corpus.classes.len());
    for class in &corpus.classes {
        let indices = by_class.get(class.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if indices.len() < per_class_n {
            return Err(CorpusError::InsufficientClass {
                class: class.clone(),
                deficit: per_class_n - indices.len(),
            });
        }
        keep.extend(sample_indices(indices, per_class_n, rng));
    }
    keep.sort_unstable();
    Ok(corpus.with_examples(keep.into_iter().map(|i| corpus.examples[i].clone()).collect()))
}

/// Stratified split into `(validation, heldout)`. Each class contributes
/// `round_half_up(fraction * size)` examples to validation.
pub fn split_validation(corpus: &Corpus, fraction: f64, rng: &mut SeededRng) -> Result<(Corpus, Corpus), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let by_class = indices_by_class(corpus, None);
    let mut in_validation = vec![false; corpus.len()];
    for class in &corpus.classes {
        let indices = by_class.get(class.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if indices.len() < 2 {
            return Err(CorpusError::TooSmallToSplit(class.clone()));
        }
        let n = round_half_up(fraction * indices.len() as f64);
        for i in sample_indices(indices, n, rng) {
            in_validation[i] = true;
        }
    }
    let (validation, heldout): (Vec<_>, Vec<_>) = corpus
        .examples
        .iter()
        .cloned()
        .zip(in_validation)
        .partition(|(_, v)| *v);
    Ok((
        corpus.with_examples(validation.into_iter().map(|(e, _)| e).collect()),
        corpus.with_examples(heldout.into_iter().map(|(e, _)| e).collect()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixScope {
    /// Every class with synthetic supply gets `round_half_up(r * n)` synthetic examples.
    #[default]
    PerClass,
    /// The overall synthetic share is `r`, spread evenly over classes with supply.
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMix {
    pub class: String,
    pub total: usize,
    pub synthetic: usize,
    pub labeled: usize,
    pub has_supply: bool,
}

/// Per-class synthetic and labeled counts for one substitution ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub ratio: f64,
    pub per_class_total: usize,
    pub scope: MixScope,
    pub classes: Vec<ClassMix>,
    /// Some classes received no synthetic data even though the ratio is positive.
    pub asymmetric: bool,
    /// Synthetic examples the ratio asked for but no supply could provide, per class.
    pub shortfall: BTreeMap<String, usize>,
}

impl MixPlan {
    pub fn class(&self, class: &str) -> Option<&ClassMix> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn total_synthetic(&self) -> usize {
        self.classes.iter().map(|c| c.synthetic).sum()
    }

    pub fn total_labeled(&self) -> usize {
        self.classes.iter().map(|c| c.labeled).sum()
    }
}

/// Synthetic count per class implied by a ratio, given which classes have any
/// synthetic supply, plus the demand that unsupplied classes could not meet.
pub fn synthetic_demand(
    classes: &[String],
    has_supply: &[bool],
    per_class_n: usize,
    ratio: f64,
    scope: MixScope,
) -> (Vec<usize>, BTreeMap<String, usize>) {
    let k = classes.len();
    let mut synthetic = vec![0usize; k];
    let mut shortfall = BTreeMap::new();
    match scope {
        MixScope::PerClass => {
            let wanted = round_half_up(ratio * per_class_n as f64);
            for (i, class) in classes.iter().enumerate() {
                if has_supply[i] {
                    synthetic[i] = wanted;
                } else if wanted > 0 {
                    shortfall.insert(class.clone(), wanted);
                }
            }
        }
        MixScope::Global => {
            let target = round_half_up(ratio * (per_class_n * k) as f64);
            let supplied: Vec<usize> = (0..k).filter(|&i| has_supply[i]).collect();
            let m = supplied.len();
            if m > 0 {
                let capacity = m * per_class_n;
                let assigned = target.min(capacity);
                for (j, &i) in supplied.iter().enumerate() {
                    synthetic[i] = assigned / m + usize::from(j < assigned % m);
                }
                if target > capacity {
                    let missing = target - capacity;
                    for (i, class) in classes.iter().enumerate() {
                        if !has_supply[i] {
                            shortfall.insert(class.clone(), missing / (k - m));
                        }
                    }
                }
            } else if target > 0 {
                for class in classes {
                    shortfall.insert(class.clone(), target / k);
                }
            }
        }
    }
    (synthetic, shortfall)
}

/// Computes how many synthetic and labeled examples each class receives.
pub fn plan_mix(
    labeled_pool: &Corpus,
    synthetic_pool: &Corpus,
    per_class_n: usize,
    ratio: f64,
    scope: MixScope,
) -> Result<MixPlan, CorpusError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CorpusError::BadRatio(ratio));
    }
    let supply: Vec<usize> = labeled_pool
        .classes
        .iter()
        .map(|c| synthetic_pool.count(c, Origin::Synthetic))
        .collect();
    let has_supply: Vec<bool> = supply.iter().map(|&n| n > 0).collect();
    let (synthetic, shortfall) = synthetic_demand(&labeled_pool.classes, &has_supply, per_class_n, ratio, scope);

    let mut classes = Vec::with_capacity(labeled_pool.classes.len());
    for (i, class) in labeled_pool.classes.iter().enumerate() {
        let s = synthetic[i];
        if s > supply[i] {
            return Err(CorpusError::SyntheticShort {
                class: class.clone(),
                needed: s,
                available: supply[i],
            });
        }
        let l = per_class_n - s;
        let available = labeled_pool.count(class, Origin::Labeled);
        if l > available {
            return Err(CorpusError::LabeledShort {
                class: class.clone(),
                needed: l,
                available,
            });
        }
        classes.push(ClassMix {
            class: class.clone(),
            total: per_class_n,
            synthetic: s,
            labeled: l,
            has_supply: supply[i] > 0,
        });
    }
    let asymmetric = ratio > 0.0 && classes.iter().any(|c| !c.has_supply);
    Ok(MixPlan {
        ratio,
        per_class_total: per_class_n,
        scope,
        classes,
        asymmetric,
        shortfall,
    })
}

struct MixSeeds {
    labeled: u64,
    synthetic: u64,
    shuffle: u64,
}

impl MixSeeds {
    fn draw(rng: &mut SeededRng) -> Self {
        Self {
            labeled: rng.next_u64(),
            synthetic: rng.next_u64(),
            shuffle: rng.next_u64(),
        }
    }
}

fn sample_portion(
    plan: &MixPlan,
    pool: &Corpus,
    origin: Origin,
    seed: u64,
) -> Result<Vec<Example>, CorpusError> {
    let by_class = indices_by_class(pool, Some(origin));
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for mix in &plan.classes {
        let need = match origin {
            Origin::Labeled => mix.labeled,
            Origin::Synthetic => mix.synthetic,
        };
        if need == 0 {
            continue;
        }
        let indices = by_class.get(mix.class.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if indices.len() < need {
            return Err(match origin {
                Origin::Labeled => CorpusError::LabeledShort {
                    class: mix.class.clone(),
                    needed: need,
                    available: indices.len(),
                },
                Origin::Synthetic => CorpusError::SyntheticShort {
                    class: mix.class.clone(),
                    needed: need,
                    available: indices.len(),
                },
            });
        }
        out.extend(sample_indices(indices, need, &mut rng).into_iter().map(|i| pool.examples[i].clone()));
    }
    Ok(out)
}

/// Draws the planned counts from both pools and shuffles the result.
///
/// The labeled draw uses its own stream, so [`labeled_subset`] with an
/// identically seeded rng reproduces exactly the labeled part of this mix.
pub fn materialize_mix(
    plan: &MixPlan,
    labeled_pool: &Corpus,
    synthetic_pool: &Corpus,
    rng: &mut SeededRng,
) -> Result<Corpus, CorpusError> {
    let seeds = MixSeeds::draw(rng);
    let mut examples = sample_portion(plan, labeled_pool, Origin::Labeled, seeds.labeled)?;
    examples.extend(sample_portion(plan, synthetic_pool, Origin::Synthetic, seeds.synthetic)?);
    examples.shuffle(&mut rng_from_seed(seeds.shuffle));
    Corpus::new(labeled_pool.study.clone(), labeled_pool.classes.clone(), examples)
}

/// The labeled portion that [`materialize_mix`] would draw for the same plan and rng state.
pub fn labeled_subset(plan: &MixPlan, labeled_pool: &Corpus, rng: &mut SeededRng) -> Result<Corpus, CorpusError> {
    let seeds = MixSeeds::draw(rng);
    let mut examples = sample_portion(plan, labeled_pool, Origin::Labeled, seeds.labeled)?;
    examples.shuffle(&mut rng_from_seed(seeds.shuffle));
    Corpus::new(labeled_pool.study.clone(), labeled_pool.classes.clone(), examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgen::{GenerationType, InstructionStrategy};

    fn synthetic(id: &str, label: &str) -> Example {
        Example {
            id: id.into(),
            text: format!("synthetic text {id}"),
            label: label.into(),
            origin: Origin::Synthetic,
            provenance: Some(Provenance {
                strategy: StrategyCell::new(InstructionStrategy::TheoryDriven, GenerationType::New),
                generator_model: "mock".into(),
                prompt_fingerprint: "fp".into(),
                seed_example_ids: vec![],
            }),
        }
    }

    fn pools(classes: &[&str], labeled_per: usize, synth_per: &[usize]) -> (Corpus, Corpus) {
        let classes: Vec<String> = classes.iter().map(|s| s.to_string()).collect();
        let mut labeled = Vec::new();
        let mut synth = Vec::new();
        for (ci, c) in classes.iter().enumerate() {
            for i in 0..labeled_per {
                labeled.push(Example::labeled(format!("l{ci}-{i}"), format!("text {c} {i}"), c.clone()));
            }
            for i in 0..synth_per[ci] {
                synth.push(synthetic(&format!("s{ci}-{i}"), c));
            }
        }
        (
            Corpus::new("t", classes.clone(), labeled).unwrap(),
            Corpus::new("t", classes, synth).unwrap(),
        )
    }

    fn write_tmp(name: &str, body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_jsonl() {
        let (_d, p) = write_tmp(
            "a.jsonl",
            "{\"text\":\"one\",\"label\":\"a\"}\n{\"text\":\"two\",\"label\":\"b\"}\n\n{\"text\":\"three\",\"label\":\"a\"}\n",
        );
        let c = load_corpus(&p, "s", &SchemaMapping::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.classes, vec!["a", "b"]);
        assert!(c.examples.iter().all(|e| e.origin == Origin::Labeled));
        assert!(c.examples[0].id.starts_with("L000000-"));
    }

    #[test]
    fn csv_with_column_mapping_matches_jsonl() {
        let (_d1, j) = write_tmp(
            "a.jsonl",
            "{\"text\":\"one, with comma\",\"label\":\"a\"}\n{\"text\":\"two\",\"label\":\"b\"}\n",
        );
        let (_d2, c) = write_tmp("a.csv", "sentence,cat\n\"one, with comma\",a\ntwo,b\n");
        let from_jsonl = load_corpus(&j, "s", &SchemaMapping::default()).unwrap();
        let mapping = SchemaMapping {
            text_field: "sentence".into(),
            label_field: "cat".into(),
            ..Default::default()
        };
        let from_csv = load_corpus(&c, "s", &mapping).unwrap();
        assert_eq!(from_jsonl, from_csv);
    }

    #[test]
    fn label_alias_map_normalizes_or_errors() {
        let (_d, p) = write_tmp(
            "a.jsonl",
            "{\"text\":\"one\",\"label\":\"Sexist \"}\n{\"text\":\"two\",\"label\":\"non-sexist\"}\n",
        );
        let mut mapping = SchemaMapping {
            classes: Some(vec!["sexist".into(), "non-sexist".into()]),
            ..Default::default()
        };
        let err = load_corpus(&p, "s", &mapping).unwrap_err();
        match &err {
            CorpusError::UnknownLabels(counts) => assert_eq!(counts.get("Sexist "), Some(&1)),
            other => panic!("unexpected {other}"),
        }
        mapping.aliases.insert("sexist".into(), "sexist".into());
        let c = load_corpus(&p, "s", &mapping).unwrap();
        assert_eq!(c.examples[0].label, "sexist");
    }

    #[test]
    fn empty_file_rejected() {
        let (_d, p) = write_tmp("a.jsonl", "\n");
        assert!(matches!(load_corpus(&p, "s", &SchemaMapping::default()), Err(CorpusError::Empty(_))));
    }

    #[test]
    fn balance_sizes_and_determinism() {
        let (labeled, _) = pools(&["a", "b"], 20, &[0, 0]);
        let b1 = balance(&labeled, 7, &mut rng_from_seed(3)).unwrap();
        let b2 = balance(&labeled, 7, &mut rng_from_seed(3)).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(b1.class_counts(), vec![("a".into(), 7), ("b".into(), 7)]);
    }

    #[test]
    fn balance_reports_deficit() {
        let (labeled, _) = pools(&["a", "b"], 3, &[0, 0]);
        let err = balance(&labeled, 5, &mut rng_from_seed(1)).unwrap_err();
        assert_eq!(err.to_string(), "class \"a\" short by 2");
    }

    #[test]
    fn validation_split_is_stratified() {
        let (test, _) = pools(&["s", "ns"], 300, &[0, 0]);
        let (val, held) = split_validation(&test, 0.3, &mut rng_from_seed(9)).unwrap();
        assert_eq!(val.len(), 180);
        assert_eq!(held.len(), 420);
        assert_eq!(val.class_counts(), vec![("s".into(), 90), ("ns".into(), 90)]);

        let (small, _) = pools(&["a", "b"], 10, &[0, 0]);
        let (v, h) = split_validation(&small, 0.5, &mut rng_from_seed(1)).unwrap();
        assert_eq!(v.class_counts(), vec![("a".into(), 5), ("b".into(), 5)]);
        assert_eq!(h.class_counts(), vec![("a".into(), 5), ("b".into(), 5)]);

        let again = split_validation(&small, 0.5, &mut rng_from_seed(1)).unwrap();
        assert_eq!(again.0, v);
    }

    #[test]
    fn validation_split_rejects_tiny_class_and_bad_fraction() {
        let (c, _) = pools(&["a", "b"], 1, &[0, 0]);
        assert!(matches!(split_validation(&c, 0.3, &mut rng_from_seed(1)), Err(CorpusError::TooSmallToSplit(_))));
        let (c, _) = pools(&["a"], 4, &[0]);
        assert!(matches!(split_validation(&c, 1.0, &mut rng_from_seed(1)), Err(CorpusError::BadFraction(_))));
    }

    #[test]
    fn plan_topics_ratio_07() {
        let classes = ["ER", "FD", "PS", "EC", "WQ", "FS", "SG"];
        let (labeled, synth) = pools(&classes, 500, &[500; 7]);
        let plan = plan_mix(&labeled, &synth, 500, 0.7, MixScope::PerClass).unwrap();
        for c in &plan.classes {
            assert_eq!((c.synthetic, c.labeled), (350, 150));
        }
        assert!(!plan.asymmetric);
        let zero = plan_mix(&labeled, &synth, 500, 0.0, MixScope::PerClass).unwrap();
        assert!(zero.classes.iter().all(|c| c.synthetic == 0 && c.labeled == 500));
    }

    #[test]
    fn plan_sexism_flags_asymmetry() {
        let (labeled, synth) = pools(&["sexist", "non-sexist"], 969, &[969, 0]);
        let plan = plan_mix(&labeled, &synth, 969, 0.9, MixScope::PerClass).unwrap();
        let s = plan.class("sexist").unwrap();
        let ns = plan.class("non-sexist").unwrap();
        assert_eq!((s.synthetic, s.labeled), (872, 97));
        assert_eq!((ns.synthetic, ns.labeled), (0, 969));
        assert!(plan.asymmetric);
        assert_eq!(plan.shortfall.get("non-sexist"), Some(&872));
    }

    #[test]
    fn plan_errors_on_short_pools() {
        let (labeled, synth) = pools(&["a", "b"], 10, &[3, 3]);
        assert!(matches!(
            plan_mix(&labeled, &synth, 10, 0.5, MixScope::PerClass),
            Err(CorpusError::SyntheticShort { .. })
        ));
        assert!(matches!(
            plan_mix(&labeled, &synth, 20, 0.1, MixScope::PerClass),
            Err(CorpusError::LabeledShort { .. })
        ));
        assert!(matches!(plan_mix(&labeled, &synth, 10, 1.5, MixScope::PerClass), Err(CorpusError::BadRatio(_))));
    }

    #[test]
    fn global_scope_spreads_over_supplied_classes() {
        let (labeled, synth) = pools(&["a", "b", "c"], 10, &[10, 10, 0]);
        let plan = plan_mix(&labeled, &synth, 10, 0.5, MixScope::Global).unwrap();
        // 15 synthetic overall, split 8/7 over the two supplied classes
        let s: Vec<usize> = plan.classes.iter().map(|c| c.synthetic).collect();
        assert_eq!(s, vec![8, 7, 0]);
        assert!(plan.classes.iter().all(|c| c.synthetic + c.labeled == c.total));
        assert!(plan.asymmetric);
    }

    #[test]
    fn materialize_counts_and_determinism() {
        let (labeled, synth) = pools(&["a", "b"], 10, &[10, 10]);
        let plan = plan_mix(&labeled, &synth, 10, 0.5, MixScope::PerClass).unwrap();
        let m1 = materialize_mix(&plan, &labeled, &synth, &mut rng_from_seed(5)).unwrap();
        let m2 = materialize_mix(&plan, &labeled, &synth, &mut rng_from_seed(5)).unwrap();
        let ids = |c: &Corpus| c.examples.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&m1), ids(&m2));
        for class in ["a", "b"] {
            assert_eq!(m1.count(class, Origin::Synthetic), 5);
            assert_eq!(m1.count(class, Origin::Labeled), 5);
        }
        let full = plan_mix(&labeled, &synth, 10, 1.0, MixScope::PerClass).unwrap();
        let all_synth = materialize_mix(&full, &labeled, &synth, &mut rng_from_seed(5)).unwrap();
        assert!(all_synth.examples.iter().all(Example::is_synthetic));
        assert_eq!(all_synth.len(), 20);
    }

    #[test]
    fn jsonl_interchange_roundtrip() {
        let (_, synth) = pools(&["a"], 0, &[3]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        synth.write_jsonl(&path).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), synth.examples);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn materialized_counts_match_plan(
                k in 1usize..5,
                n in 1usize..40,
                ratio_idx in 0usize..6,
                supplied_mask in 1u8..16,
                seed in any::<u64>(),
            ) {
                let ratio = [0.0, 0.3, 0.5, 0.7, 0.9, 1.0][ratio_idx];
                let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                let supply: Vec<usize> = (0..k).map(|i| if supplied_mask & (1 << i) != 0 { n } else { 0 }).collect();
                let (labeled, synth) = pools(&refs, n, &supply);
                let plan = plan_mix(&labeled, &synth, n, ratio, MixScope::PerClass).unwrap();
                let mixed = materialize_mix(&plan, &labeled, &synth, &mut rng_from_seed(seed)).unwrap();
                for c in &plan.classes {
                    prop_assert_eq!(c.synthetic + c.labeled, n);
                    let expect = if supply[names.iter().position(|x| x == &c.class).unwrap()] > 0 {
                        round_half_up(ratio * n as f64)
                    } else { 0 };
                    prop_assert_eq!(c.synthetic, expect);
                    prop_assert_eq!(mixed.count(&c.class, Origin::Synthetic), c.synthetic);
                    prop_assert_eq!(mixed.count(&c.class, Origin::Labeled), c.labeled);
                }
                // labeled-only extraction equals the direct labeled-subset draw
                let direct = labeled_subset(&plan, &labeled, &mut rng_from_seed(seed)).unwrap();
                let mut a: Vec<_> = mixed.labeled_only().examples.into_iter().map(|e| e.id).collect();
                let mut b: Vec<_> = direct.examples.into_iter().map(|e| e.id).collect();
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn split_partitions_input(per in 2usize..30, frac in 0.05f64..0.95, seed in any::<u64>()) {
                let (c, _) = pools(&["a", "b", "c"], per, &[0, 0, 0]);
                let (v, h) = split_validation(&c, frac, &mut rng_from_seed(seed)).unwrap();
                let vid: HashSet<_> = v.examples.iter().map(|e| e.id.clone()).collect();
                let hid: HashSet<_> = h.examples.iter().map(|e| e.id.clone()).collect();
                prop_assert!(vid.is_disjoint(&hid));
                let all: HashSet<_> = c.examples.iter().map(|e| e.id.clone()).collect();
                prop_assert_eq!(vid.union(&hid).cloned().collect::<HashSet<_>>(), all);
            }
        }
    }
}
