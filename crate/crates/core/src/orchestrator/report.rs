//! Summary tables built from the results files of a finished study.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::execute::{HELDOUT, RESULTS_FILE, SUBSET_RESULTS_FILE};
use super::OrchestratorError;
use crate::evaluator::{
    aggregate_seeds, read_results_csv, strategy_diff, AggregateResult, ArmScore, GenerationAggregation, ResultRow,
};
use crate::promptgen::{GenerationType, InstructionStrategy};

/// Best strategy cell per (classifier, generator, series, ratio), selected on in-domain mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub classifier: String,
    pub model: String,
    pub ratio: f64,
    pub labeled_subset: bool,
    pub instruction: String,
    pub generation: String,
    pub generator_model: String,
    pub in_domain: f64,
    pub in_domain_ci: Option<f64>,
    pub ood: Option<f64>,
    pub ood_ci: Option<f64>,
    pub n_seeds: usize,
}

/// Theory-driven minus naive mean macro-F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffLine {
    pub classifier: String,
    pub generator_model: String,
    pub model: String,
    pub ratio: f64,
    pub in_domain: f64,
    /// Mean of the per-dataset differences over out-of-domain sets.
    pub ood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub classifier: String,
    pub generator_model: String,
    pub instruction: String,
    pub generation: String,
    /// `mixed` or `labeled_subset`.
    pub series: String,
    pub split: String,
    pub ratio: f64,
    pub mean: f64,
    pub ci_half_width: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub best: Vec<BestRow>,
    pub diffs: Vec<DiffLine>,
    pub curves: Vec<CurvePoint>,
    /// Tables that could not be built, with the reason.
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ArmKey {
    classifier: String,
    generator_model: String,
    subset: bool,
    instruction: String,
    generation: String,
}

/// Per-seed in-domain score and per-seed mean over OOD sets.
#[derive(Debug, Default)]
struct SeedScores {
    in_domain: BTreeMap<u64, f64>,
    ood: BTreeMap<u64, Vec<f64>>,
}

impl SeedScores {
    fn add(&mut self, row: &ResultRow) {
        if row.dataset == HELDOUT {
            self.in_domain.insert(row.seed, row.macro_f1);
        } else {
            self.ood.entry(row.seed).or_default().push(row.macro_f1);
        }
    }

    fn in_domain(&self) -> Option<AggregateResult> {
        let v: Vec<f64> = self.in_domain.values().copied().collect();
        aggregate_seeds(&v).ok()
    }

    fn ood(&self) -> Option<AggregateResult> {
        let v: Vec<f64> = self.ood.values().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
        aggregate_seeds(&v).ok()
    }
}

type Arms = BTreeMap<ArmKey, BTreeMap<RatioKey, SeedScores>>;

/// f64 ratio usable as an ordered map key.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RatioKey(f64);
impl Eq for RatioKey {}
impl PartialOrd for RatioKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for RatioKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn group(rows: &[ResultRow], subset: bool, arms: &mut Arms) {
    for row in rows {
        let key = ArmKey {
            classifier: row.classifier.clone(),
            generator_model: row.generator_model.clone(),
            subset,
            instruction: row.instruction.clone(),
            generation: row.generation.clone(),
        };
        arms.entry(key).or_default().entry(RatioKey(row.ratio)).or_default().add(row);
    }
}

fn model_name(classifier: &str, generator: &str, subset: bool) -> String {
    let mut s = classifier.to_string();
    if !generator.is_empty() {
        s.push_str(&format!(" / {generator}"));
    }
    if subset {
        s.push_str(" (labeled subset)");
    }
    s
}

fn best_rows(arms: &Arms) -> Vec<BestRow> {
    let mut best: BTreeMap<(String, String, bool, RatioKey), BestRow> = BTreeMap::new();
    for (key, by_ratio) in arms {
        for (ratio, scores) in by_ratio {
            let Some(id) = scores.in_domain() else { continue };
            let ood = scores.ood();
            let row = BestRow {
                classifier: key.classifier.clone(),
                model: model_name(&key.classifier, &key.generator_model, key.subset),
                ratio: ratio.0,
                labeled_subset: key.subset,
                instruction: code(&key.instruction),
                generation: code(&key.generation),
                generator_model: key.generator_model.clone(),
                in_domain: id.mean,
                in_domain_ci: id.ci_half_width,
                ood: ood.map(|o| o.mean),
                ood_ci: ood.and_then(|o| o.ci_half_width),
                n_seeds: id.n,
            };
            let slot = (key.classifier.clone(), key.generator_model.clone(), key.subset, *ratio);
            match best.get(&slot) {
                Some(prev) if prev.in_domain >= row.in_domain => {}
                _ => {
                    best.insert(slot, row);
                }
            }
        }
    }
    best.into_values().collect()
}

/// One-letter strategy codes used in the tables.
fn code(value: &str) -> String {
    if let Ok(i) = value.parse::<InstructionStrategy>() {
        return match i {
            InstructionStrategy::TheoryDriven => "T",
            InstructionStrategy::Naive => "N",
        }
        .into();
    }
    if let Ok(g) = value.parse::<GenerationType>() {
        return match g {
            GenerationType::New => "N",
            GenerationType::Alternation => "A",
        }
        .into();
    }
    value.to_string()
}

fn curves(arms: &Arms) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    let baselines: BTreeMap<&str, &SeedScores> = arms
        .iter()
        .filter(|(k, _)| k.instruction.is_empty() && !k.subset)
        .filter_map(|(k, r)| r.get(&RatioKey(0.0)).map(|s| (k.classifier.as_str(), s)))
        .collect();
    for (key, by_ratio) in arms.iter().filter(|(k, _)| !k.instruction.is_empty()) {
        let baseline = baselines.get(key.classifier.as_str()).map(|s| (RatioKey(0.0), *s));
        let points = baseline.into_iter().chain(by_ratio.iter().map(|(r, s)| (*r, s)));
        for (ratio, scores) in points {
            for (split, agg) in [("in_domain", scores.in_domain()), ("ood", scores.ood())] {
                let Some(agg) = agg else { continue };
                out.push(CurvePoint {
                    classifier: key.classifier.clone(),
                    generator_model: key.generator_model.clone(),
                    instruction: key.instruction.clone(),
                    generation: key.generation.clone(),
                    series: if key.subset { "labeled_subset" } else { "mixed" }.into(),
                    split: split.into(),
                    ratio: ratio.0,
                    mean: agg.mean,
                    ci_half_width: agg.ci_half_width,
                    n: agg.n,
                });
            }
        }
    }
    out
}

fn diffs(rows: &[ResultRow], how: GenerationAggregation, notes: &mut Vec<String>) -> Vec<DiffLine> {
    let mut by_model: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.ratio > 0.0 && !r.instruction.is_empty()) {
        by_model
            .entry((row.classifier.clone(), row.generator_model.clone()))
            .or_default()
            .push(row);
    }
    let mut out = Vec::new();
    for ((classifier, generator), rows) in by_model {
        let mut means: BTreeMap<(RatioKey, String, String, String), Vec<f64>> = BTreeMap::new();
        let mut datasets: Vec<String> = Vec::new();
        for r in &rows {
            if !datasets.contains(&r.dataset) {
                datasets.push(r.dataset.clone());
            }
            means
                .entry((RatioKey(r.ratio), r.dataset.clone(), r.instruction.clone(), r.generation.clone()))
                .or_default()
                .push(r.macro_f1);
        }
        let mut scores = Vec::new();
        for ((ratio, dataset, instruction, generation), v) in means {
            let (Ok(instruction), Ok(generation)) = (instruction.parse(), generation.parse()) else { continue };
            scores.push(ArmScore {
                ratio: ratio.0,
                dataset,
                instruction,
                generation,
                macro_f1: v.iter().sum::<f64>() / v.len() as f64,
            });
        }
        let model = model_name(&classifier, &generator, false);
        let table = match strategy_diff(&scores, how) {
            Ok(t) => t,
            Err(e) => {
                notes.push(format!("strategy difference for {model} not computed: {e}"));
                continue;
            }
        };
        for row in table.rows {
            let mut in_domain = None;
            let mut ood = Vec::new();
            for (dataset, d) in table.datasets.iter().zip(&row.diffs) {
                if dataset == HELDOUT {
                    in_domain = Some(*d);
                } else {
                    ood.push(*d);
                }
            }
            let Some(in_domain) = in_domain else { continue };
            out.push(DiffLine {
                classifier: classifier.clone(),
                generator_model: generator.clone(),
                model: model.clone(),
                ratio: row.ratio,
                in_domain,
                ood: (!ood.is_empty()).then(|| ood.iter().sum::<f64>() / ood.len() as f64),
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), OrchestratorError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| OrchestratorError::Data(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| OrchestratorError::Data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn markdown(report: &Report) -> String {
    let mut s = String::from("# Results\n\n## Best strategy per ratio\n\n");
    s.push_str("| model | ratio | strategy | in-domain | ± | OOD | ± | seeds |\n|---|---|---|---|---|---|---|---|\n");
    for b in &report.best {
        let strategy = if b.instruction.is_empty() { "-".to_string() } else { format!("{}/{}", b.instruction, b.generation) };
        s.push_str(&format!(
            "| {} | {} | {} | {:.3} | {} | {} | {} | {} |\n",
            b.model,
            b.ratio,
            strategy,
            b.in_domain,
            fmt_opt(b.in_domain_ci),
            fmt_opt(b.ood),
            fmt_opt(b.ood_ci),
            b.n_seeds
        ));
    }
    if !report.diffs.is_empty() {
        s.push_str("\n## Theory-driven minus naive\n\n| model | ratio | in-domain | OOD |\n|---|---|---|---|\n");
        for d in &report.diffs {
            s.push_str(&format!("| {} | {} | {:+.3} | {} |\n", d.model, d.ratio, d.in_domain, fmt_opt(d.ood)));
        }
    }
    if !report.notes.is_empty() {
        s.push_str("\n## Notes\n\n");
        for n in &report.notes {
            s.push_str(&format!("- {n}\n"));
        }
    }
    s
}

/// Reads the study's results files and writes `best_per_ratio.csv`,
/// `strategy_diff.csv`, `curves.csv` and `report.md` next to them.
pub fn emit_report(study_dir: &Path, how: GenerationAggregation) -> Result<Report, OrchestratorError> {
    let results_path = study_dir.join(RESULTS_FILE);
    if !results_path.exists() {
        return Err(OrchestratorError::Data(format!("{} not found", results_path.display())));
    }
    let rows = read_results_csv(&results_path)?;
    let subset_path = study_dir.join(SUBSET_RESULTS_FILE);
    let subset_rows = if subset_path.exists() { read_results_csv(&subset_path)? } else { Vec::new() };

    let mut arms = Arms::new();
    group(&rows, false, &mut arms);
    group(&subset_rows, true, &mut arms);
    let mut report = Report {
        best: best_rows(&arms),
        curves: curves(&arms),
        ..Report::default()
    };
    report.diffs = diffs(&rows, how, &mut report.notes);

    let out = |name: &str| study_dir.join(name);
    write_csv(&out("best_per_ratio.csv"), &report.best)?;
    write_csv(&out("strategy_diff.csv"), &report.diffs)?;
    write_csv(&out("curves.csv"), &report.curves)?;
    std::fs::write(out("report.md"), markdown(&report))?;
    report.files = ["best_per_ratio.csv", "strategy_diff.csv", "curves.csv", "report.md"]
        .iter()
        .map(|n| out(n))
        .collect();
    Ok(report)
}
