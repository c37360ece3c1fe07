//! Interchange files for training a model outside this crate, and re-import of
//! its predictions.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::corpus::Corpus;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffManifest {
    pub study: String,
    pub seed: u64,
    pub ratio: f64,
    /// Strategy cell name, absent for the labeled-only arm.
    pub strategy: Option<String>,
    pub generator_model: Option<String>,
    pub labels: Vec<String>,
    /// Row count per written file.
    #[serde(default)]
    pub files: BTreeMap<String, usize>,
}

/// Writes `train.jsonl`, `validation.jsonl`, `test.jsonl` and a manifest into `dir`.
pub fn external_trainer_handoff(
    dir: impl AsRef<Path>,
    train: &Corpus,
    validation: &Corpus,
    test: &Corpus,
    manifest: &HandoffManifest,
) -> Result<PathBuf, ClassifierError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut manifest = manifest.clone();
    for (name, corpus) in [("train.jsonl", train), ("validation.jsonl", validation), ("test.jsonl", test)] {
        corpus
            .write_jsonl(dir.join(name))
            .map_err(|e| ClassifierError::Format(e.to_string()))?;
        manifest.files.insert(name.to_string(), corpus.len());
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(path)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<HandoffManifest, ClassifierError> {
    let raw = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    serde_json::from_str(&raw).map_err(|e| ClassifierError::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub pred: String,
}

/// Reads a `{"id","pred"}` JSONL file, rejecting unknown labels and repeated ids.
pub fn read_predictions(path: impl AsRef<Path>, labels: &[String]) -> Result<Vec<PredictionRow>, ClassifierError> {
    let file = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PredictionRow =
            serde_json::from_str(&line).map_err(|e| ClassifierError::Format(format!("line {}: {e}", n + 1)))?;
        if !labels.contains(&row.pred) {
            return Err(ClassifierError::UnknownLabel {
                id: row.id,
                label: row.pred,
            });
        }
        if !seen.insert(row.id.clone()) {
            return Err(ClassifierError::Format(format!("line {}: duplicate id {}", n + 1, row.id)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<(), ClassifierError> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Lines predictions up with a corpus by id. Ids missing from the file become abstentions.
pub fn align_predictions(corpus: &Corpus, rows: &[PredictionRow]) -> Vec<Option<String>> {
    let by_id: BTreeMap<&str, &str> = rows.iter().map(|r| (r.id.as_str(), r.pred.as_str())).collect();
    corpus
        .examples
        .iter()
        .map(|e| by_id.get(e.id.as_str()).map(|p| p.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;

    fn corpus(n: usize) -> Corpus {
        let ex = (0..n)
            .map(|i| Example::labeled(format!("e{i}"), format!("text {i}"), if i % 2 == 0 { "a" } else { "b" }))
            .collect();
        Corpus::new("s", vec!["a".into(), "b".into()], ex).unwrap()
    }

    #[test]
    fn writes_files_and_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = HandoffManifest {
            study: "s".into(),
            seed: 2,
            ratio: 0.7,
            strategy: Some("theory_driven-new".into()),
            generator_model: Some("gpt-3.5-turbo".into()),
            labels: vec!["a".into(), "b".into()],
            files: BTreeMap::new(),
        };
        external_trainer_handoff(dir.path(), &corpus(10), &corpus(3), &corpus(4), &manifest).unwrap();
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back.ratio, 0.7);
        assert_eq!(back.files["train.jsonl"], 10);
        assert_eq!(back.files["test.jsonl"], 4);
        let text = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn prediction_import_rejects_unknown_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        std::fs::write(&path, "{\"id\":\"e0\",\"pred\":\"a\"}\n{\"id\":\"e1\",\"pred\":\"zzz\"}\n").unwrap();
        let err = read_predictions(&path, &["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, ClassifierError::UnknownLabel { ref label, .. } if label == "zzz"));
    }

    #[test]
    fn predictions_round_trip_and_align() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let rows = vec![
            PredictionRow { id: "e1".into(), pred: "b".into() },
            PredictionRow { id: "e0".into(), pred: "a".into() },
        ];
        write_predictions(&path, &rows).unwrap();
        let back = read_predictions(&path, &["a".into(), "b".into()]).unwrap();
        assert_eq!(back, rows);
        let aligned = align_predictions(&corpus(3), &back);
        assert_eq!(aligned, vec![Some("a".into()), Some("b".into()), None]);
    }
}
