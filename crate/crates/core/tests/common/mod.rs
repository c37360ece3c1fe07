//! Fixtures shared by the integration tests: keyword corpora whose labels are
//! recoverable from the mock vocabulary, and small study configs around them.
#![allow(dead_code)]

pub mod golden;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use synthmix::corpus::{write_jsonl, Example};
use synthmix::instruments::Instrument;
use synthmix::llmgateway::{MockVocabulary, FILLER_WORDS};
use synthmix::orchestrator::ExperimentConfig;
use synthmix::promptgen::TemplateSet;
use synthmix::util::rng_from_seed;

pub fn vocabulary(instrument: &Instrument) -> MockVocabulary {
    let templates = TemplateSet::for_instrument(instrument).unwrap();
    MockVocabulary::from_instrument(instrument, &templates)
}

/// Filler sentences with two of the class's keywords mixed in; classes
/// without keywords get filler only.
pub fn keyword_examples(vocab: &MockVocabulary, classes: &[String], per_class: usize, seed: u64, prefix: &str) -> Vec<Example> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        let keywords = vocab.keywords(class);
        for i in 0..per_class {
            let n = rng.gen_range(8..=14);
            let mut words: Vec<String> = (0..n)
                .map(|_| FILLER_WORDS.choose(&mut rng).unwrap().to_string())
                .collect();
            for _ in 0..2 {
                if let Some(k) = keywords.choose(&mut rng) {
                    let at = rng.gen_range(0..=words.len());
                    words.insert(at, k.clone());
                }
            }
            out.push(Example::labeled(format!("{prefix}-{ci}-{i}"), words.join(" "), class.clone()));
        }
    }
    out
}

pub struct Study {
    pub dir: PathBuf,
    pub config_path: PathBuf,
}

impl Study {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig::load(&self.config_path).unwrap()
    }

    pub fn study_dir(&self) -> PathBuf {
        self.config().study_dir()
    }
}

/// Writes train/test/OOD keyword corpora and an experiment config into `dir`.
/// `extra` is TOML placed before the `[data]` table.
pub fn keyword_study(dir: &Path, instrument: &str, per_class: usize, extra: &str) -> Study {
    let inst = match instrument {
        "sexism" => Instrument::bundled_sexism(),
        _ => Instrument::bundled_topics(),
    };
    let vocab = vocabulary(&inst);
    write_jsonl(dir.join("train.jsonl"), &keyword_examples(&vocab, &inst.classes, per_class, 11, "tr")).unwrap();
    write_jsonl(dir.join("test.jsonl"), &keyword_examples(&vocab, &inst.classes, per_class, 12, "te")).unwrap();
    write_jsonl(dir.join("ood.jsonl"), &keyword_examples(&vocab, &inst.classes, per_class / 2 + 1, 13, "od")).unwrap();
    let raw = format!(
        "study = \"{instrument}\"\ninstrument = \"bundled:{instrument}\"\noutput_dir = \"runs\"\n{extra}\n\
         [data]\ntrain = \"train.jsonl\"\ntest = \"test.jsonl\"\nood = [{{ name = \"ood\", path = \"ood.jsonl\" }}]\n"
    );
    let config_path = dir.join("experiment.toml");
    std::fs::write(&config_path, raw).unwrap();
    Study {
        dir: dir.to_path_buf(),
        config_path,
    }
}
