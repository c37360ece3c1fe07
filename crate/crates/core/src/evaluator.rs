//! Confusion matrices, macro-F1, seed aggregation with Student-t intervals,
//! theory-vs-naive difference tables, and the results CSV schema.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::promptgen::{GenerationType, InstructionStrategy};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("unknown gold label {0:?}")]
    UnknownGold(String),
    #[error("unknown predicted label {0:?}")]
    UnknownPrediction(String),
    #[error("cannot aggregate an empty list of scores")]
    Empty,
    #[error("ratio {ratio}, dataset {dataset:?}: no {arm} results")]
    MissingArm { ratio: f64, dataset: String, arm: String },
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[g][p]`: examples with gold `labels[g]` predicted as `labels[p]`.
    pub counts: Vec<Vec<u64>>,
    pub abstentions: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Counts (gold, prediction) pairs. `None` predictions are abstentions and are
/// kept out of the matrix.
pub fn confusion<G: AsRef<str>, P: AsRef<str>>(
    golds: &[G],
    preds: &[Option<P>],
    labels: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    if golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut abstentions = 0;
    for (g, p) in golds.iter().zip(preds) {
        let gi = *index
            .get(g.as_ref())
            .ok_or_else(|| EvalError::UnknownGold(g.as_ref().to_string()))?;
        match p {
            None => abstentions += 1,
            Some(p) => {
                let pi = *index
                    .get(p.as_ref())
                    .ok_or_else(|| EvalError::UnknownPrediction(p.as_ref().to_string()))?;
                counts[gi][pi] += 1;
            }
        }
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
        abstentions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class precision, recall and F1, and their unweighted mean F1 over every
/// label. Any zero denominator yields 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> (Vec<ClassScores>, f64) {
    let k = cm.labels.len();
    let per_class: Vec<ClassScores> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let predicted: u64 = (0..k).map(|g| cm.counts[g][c]).sum();
            let support: u64 = cm.counts[c].iter().sum();
            let precision = ratio_or_zero(tp, predicted as f64);
            let recall = ratio_or_zero(tp, support as f64);
            let f1 = ratio_or_zero(2.0 * precision * recall, precision + recall);
            ClassScores {
                label: cm.labels[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let macro_avg = if k == 0 {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64
    };
    (per_class, macro_avg)
}

/// Which trained model an evaluation belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub classifier: String,
    pub ratio: f64,
    pub instruction: Option<InstructionStrategy>,
    pub generation: Option<GenerationType>,
    pub generator_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub seed: u64,
    pub per_class: Vec<ClassScores>,
    pub macro_f1: f64,
    pub abstentions: u64,
    pub model: ModelDescriptor,
}

pub fn evaluate<G: AsRef<str>, P: AsRef<str>>(
    golds: &[G],
    preds: &[Option<P>],
    labels: &[String],
    dataset: &str,
    seed: u64,
    model: ModelDescriptor,
) -> Result<EvalResult, EvalError> {
    let cm = confusion(golds, preds, labels)?;
    let (per_class, macro_avg) = macro_f1(&cm);
    Ok(EvalResult {
        dataset: dataset.to_string(),
        seed,
        per_class,
        macro_f1: macro_avg,
        abstentions: cm.abstentions,
        model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean: f64,
    /// Half-width of the 95% interval; `None` for a single score.
    pub ci_half_width: Option<f64>,
    pub n: usize,
}

/// Two-sided 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Mean across seeds with a Student-t 95% interval (n − 1 degrees of freedom).
pub fn aggregate_seeds(scores: &[f64]) -> Result<AggregateResult, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let ci_half_width = (n >= 2).then(|| {
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if sd == 0.0 {
            0.0
        } else {
            t_quantile_975(n - 1) * sd / (n as f64).sqrt()
        }
    });
    Ok(AggregateResult { mean, ci_half_width, n })
}

/// Unweighted mean of per-set scores, used to summarize several OOD sets.
pub fn ood_mean(scores: &[f64]) -> Option<f64> {
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or the lengths differ.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

/// One score entering a difference table.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmScore {
    pub ratio: f64,
    pub dataset: String,
    pub instruction: InstructionStrategy,
    pub generation: GenerationType,
    pub macro_f1: f64,
}

/// How the two generation types are combined within an instruction arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationAggregation {
    /// Mean over generation types of the seed-mean.
    #[default]
    Mean,
    /// Best generation type's seed-mean.
    Best,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub ratio: f64,
    /// theory-driven minus naive, one value per dataset in table order.
    pub diffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffTable {
    pub datasets: Vec<String>,
    pub rows: Vec<DiffRow>,
}

fn arm_value(scores: &[&ArmScore], how: GenerationAggregation) -> Option<f64> {
    let mut by_gen: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in scores {
        by_gen.entry(s.generation.to_string()).or_default().push(s.macro_f1);
    }
    let means: Vec<f64> = by_gen.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    if means.is_empty() {
        return None;
    }
    Some(match how {
        GenerationAggregation::Mean => means.iter().sum::<f64>() / means.len() as f64,
        GenerationAggregation::Best => means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Mean macro-F1 of theory-driven runs minus that of naive runs, per ratio and dataset.
/// Datasets keep first-appearance order; ratios are ascending.
pub fn strategy_diff(scores: &[ArmScore], how: GenerationAggregation) -> Result<DiffTable, EvalError> {
    let mut datasets: Vec<String> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    for s in scores {
        if !datasets.contains(&s.dataset) {
            datasets.push(s.dataset.clone());
        }
        if !ratios.contains(&s.ratio) {
            ratios.push(s.ratio);
        }
    }
    ratios.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in &ratios {
        let mut diffs = Vec::with_capacity(datasets.len());
        for dataset in &datasets {
            let arm = |instruction: InstructionStrategy| -> Result<f64, EvalError> {
                let picked: Vec<&ArmScore> = scores
                    .iter()
                    .filter(|s| s.ratio == ratio && &s.dataset == dataset && s.instruction == instruction)
                    .collect();
                arm_value(&picked, how).ok_or_else(|| EvalError::MissingArm {
                    ratio,
                    dataset: dataset.clone(),
                    arm: instruction.to_string(),
                })
            };
            diffs.push(arm(InstructionStrategy::TheoryDriven)? - arm(InstructionStrategy::Naive)?);
        }
        rows.push(DiffRow { ratio, diffs });
    }
    Ok(DiffTable { datasets, rows })
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub study: String,
    pub classifier: String,
    pub generator_model: String,
    pub instruction: String,
    pub generation: String,
    pub ratio: f64,
    pub seed: u64,
    pub dataset: String,
    /// `in_domain` or `ood`.
    pub split: String,
    pub macro_f1: f64,
    /// `label=f1` pairs joined by `;`, in label order.
    pub per_class_f1: String,
    pub abstentions: u64,
}

pub fn pack_per_class(per_class: &[ClassScores]) -> String {
    per_class
        .iter()
        .map(|c| format!("{}={}", c.label, c.f1))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_results_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_counted_matrix_and_scores() {
        let golds = ["S", "S", "S", "nS", "nS"];
        let preds = [Some("S"), Some("S"), Some("nS"), Some("S"), Some("nS")];
        let cm = confusion(&golds, &preds, &labels(&["S", "nS"])).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 1], vec![1, 1]]);
        let (per, m) = macro_f1(&cm);
        assert!((per[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((per[1].f1 - 0.5).abs() < 1e-12);
        assert!((m - 0.583_333_333_333).abs() < 1e-9);
    }

    #[test]
    fn diagonal_and_abstentions() {
        let golds = ["a", "b", "c", "a", "b"];
        let preds: Vec<Option<&str>> = golds.iter().map(|g| Some(*g)).collect();
        let cm = confusion(&golds, &preds, &labels(&["a", "b", "c"])).unwrap();
        assert_eq!((0..3).map(|i| cm.counts[i][i]).sum::<u64>(), 5);
        assert_eq!(macro_f1(&cm).1, 1.0);

        let preds = [Some("a"), None, Some("c"), Some("a"), Some("b")];
        let cm = confusion(&golds, &preds, &labels(&["a", "b", "c"])).unwrap();
        assert_eq!((cm.total(), cm.abstentions), (4, 1));
    }

    #[test]
    fn zero_support_class_scores_zero() {
        let cm = confusion(&["a", "a"], &[Some("a"), Some("a")], &labels(&["a", "b"])).unwrap();
        let (per, m) = macro_f1(&cm);
        assert_eq!(per[1].f1, 0.0);
        assert_eq!(m, 0.5);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&["a"], &[Some("a"), Some("a")], &labels(&["a"])),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(confusion(&["z"], &[Some("a")], &labels(&["a"])), Err(EvalError::UnknownGold(_))));
    }

    #[test]
    fn t_interval_oracle() {
        assert!((t_quantile_975(2) - 4.302653).abs() < 1e-6);
        let agg = aggregate_seeds(&[0.5, 0.6, 0.7]).unwrap();
        assert!((agg.mean - 0.6).abs() < 1e-12);
        assert!((agg.ci_half_width.unwrap() - 0.24841).abs() < 1e-4);
        assert_eq!(aggregate_seeds(&[0.6, 0.6, 0.6]).unwrap().ci_half_width, Some(0.0));
        assert_eq!(aggregate_seeds(&[0.7]).unwrap().ci_half_width, None);
        assert!(aggregate_seeds(&[]).is_err());
    }

    #[test]
    fn interval_shrinks_with_root_n() {
        // alternating ±0.1 around 0.5 keeps the sample sd fixed up to the n-1 correction
        let width = |n: usize| {
            let xs: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.4 } else { 0.6 }).collect();
            let agg = aggregate_seeds(&xs).unwrap();
            let sd = (xs.iter().map(|x| (x - agg.mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            agg.ci_half_width.unwrap() / (t_quantile_975(n - 1) * sd)
        };
        for n in [3usize, 12, 48] {
            assert!((width(n) * (n as f64).sqrt() - 1.0).abs() < 1e-12);
        }
        assert!(width(48) < width(12));
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }

    fn arm(ratio: f64, dataset: &str, i: InstructionStrategy, g: GenerationType, f: f64) -> ArmScore {
        ArmScore {
            ratio,
            dataset: dataset.into(),
            instruction: i,
            generation: g,
            macro_f1: f,
        }
    }

    #[test]
    fn diff_table_shapes() {
        use GenerationType::*;
        use InstructionStrategy::*;
        let mut scores = Vec::new();
        for ratio in [0.5, 1.0] {
            for ds in ["in", "ood"] {
                for g in [New, Alternation] {
                    scores.push(arm(ratio, ds, Naive, g, 0.5));
                    let bump = if ratio == 1.0 { 0.12 } else { 0.0 };
                    scores.push(arm(ratio, ds, TheoryDriven, g, 0.5 + bump));
                }
            }
        }
        let t = strategy_diff(&scores, GenerationAggregation::Mean).unwrap();
        assert_eq!(t.datasets, vec!["in", "ood"]);
        assert_eq!(t.rows[0].diffs, vec![0.0, 0.0]);
        assert!((t.rows[1].diffs[0] - 0.12).abs() < 1e-12);

        scores.retain(|s| !(s.ratio == 1.0 && s.instruction == Naive));
        let err = strategy_diff(&scores, GenerationAggregation::Mean).unwrap_err();
        assert!(err.to_string().contains("ratio 1"), "{err}");
    }

    #[test]
    fn best_generation_aggregation() {
        use GenerationType::*;
        use InstructionStrategy::*;
        let scores = vec![
            arm(0.3, "in", TheoryDriven, New, 0.8),
            arm(0.3, "in", TheoryDriven, Alternation, 0.6),
            arm(0.3, "in", Naive, New, 0.5),
            arm(0.3, "in", Naive, Alternation, 0.7),
        ];
        let mean = strategy_diff(&scores, GenerationAggregation::Mean).unwrap();
        let best = strategy_diff(&scores, GenerationAggregation::Best).unwrap();
        assert!((mean.rows[0].diffs[0] - 0.1).abs() < 1e-12);
        assert!((best.rows[0].diffs[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let row = ResultRow {
            study: "topics".into(),
            classifier: "linear".into(),
            generator_model: "gpt-3.5-turbo".into(),
            instruction: "theory_driven".into(),
            generation: "new".into(),
            ratio: 0.3,
            seed: 1,
            dataset: "heldout".into(),
            split: "in_domain".into(),
            macro_f1: 0.1 + 0.2,
            per_class_f1: "a=0.5;b=1".into(),
            abstentions: 0,
        };
        write_results_csv(&path, &[row.clone(), row.clone()]).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with(
            "study,classifier,generator_model,instruction,generation,ratio,seed,dataset,split,macro_f1,per_class_f1,abstentions\n"
        ));
        assert_eq!(read_results_csv(&path).unwrap(), vec![row.clone(), row]);
    }

    /// Per-example recount, independent of the matrix.
    fn brute_macro_f1(golds: &[usize], preds: &[usize], k: usize) -> f64 {
        let mut total = 0.0;
        for c in 0..k {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fneg = 0.0;
            for (g, p) in golds.iter().zip(preds) {
                match (*g == c, *p == c) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fneg += 1.0,
                    _ => {}
                }
            }
            // F1 = 2TP / (2TP + FP + FN), 0 when undefined
            let den = 2.0 * tp + fp + fneg;
            total += if den == 0.0 || tp == 0.0 { 0.0 } else { 2.0 * tp / den };
        }
        total / k as f64
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_brute_force(k in 1usize..=7, pairs in proptest::collection::vec((0usize..7, 0usize..7), 1..500)) {
            let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
            let golds: Vec<usize> = pairs.iter().map(|(g, _)| g % k).collect();
            let preds: Vec<usize> = pairs.iter().map(|(_, p)| p % k).collect();
            let g: Vec<&str> = golds.iter().map(|&i| names[i].as_str()).collect();
            let p: Vec<Option<&str>> = preds.iter().map(|&i| Some(names[i].as_str())).collect();
            let (_, m) = macro_f1(&confusion(&g, &p, &names).unwrap());
            prop_assert!((m - brute_macro_f1(&golds, &preds, k)).abs() <= 1e-12);

            let mut permuted = names.clone();
            permuted.reverse();
            let (_, m2) = macro_f1(&confusion(&g, &p, &permuted).unwrap());
            prop_assert!((m - m2).abs() <= 1e-12);
        }
    }
}
