//! Hashed word and character n-gram features with tf-idf weighting.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use twox_hash::XxHash64;

use super::ClassifierError;

/// Fixed so feature indices agree across processes and platforms.
const HASH_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramRange {
    pub min: usize,
    pub max: usize,
}

impl NgramRange {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn valid(&self) -> bool {
        self.min >= 1 && self.min <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfWeighting {
    Binary,
    #[default]
    Sublinear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// `None` disables word n-grams.
    pub word_ngrams: Option<NgramRange>,
    /// Character n-grams taken inside each word. `None` disables them.
    pub char_ngrams: Option<NgramRange>,
    /// Number of hash buckets; a power of two.
    pub dimension: usize,
    pub tf: TfWeighting,
    pub idf: bool,
    pub l2_normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            word_ngrams: Some(NgramRange::new(1, 2)),
            char_ngrams: Some(NgramRange::new(3, 5)),
            dimension: 1 << 18,
            tf: TfWeighting::Sublinear,
            idf: true,
            l2_normalize: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !self.dimension.is_power_of_two() || self.dimension > u32::MAX as usize {
            return Err(ClassifierError::Config(format!(
                "hash dimension must be a power of two below 2^32, got {}",
                self.dimension
            )));
        }
        if self.word_ngrams.is_none() && self.char_ngrams.is_none() {
            return Err(ClassifierError::Config("both n-gram families are disabled".into()));
        }
        for (name, range) in [("word", self.word_ngrams), ("char", self.char_ngrams)] {
            if let Some(r) = range {
                if !r.valid() {
                    return Err(ClassifierError::Config(format!("{name} n-gram range {}..{} is empty", r.min, r.max)));
                }
            }
        }
        Ok(())
    }
}

/// Sparse vector as (bucket, value) pairs sorted by bucket, no explicit zeros.
pub type SparseVec = Vec<(u32, f64)>;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Raw n-gram counts before hashing. Word n-grams and char n-grams live in
/// separate namespaces so "abc" the word and "abc" the trigram differ.
fn ngram_counts(config: &FeatureConfig, text: &str) -> BTreeMap<String, u32> {
    let words = tokenize(text);
    let mut counts = BTreeMap::new();
    if let Some(r) = config.word_ngrams {
        for n in r.min..=r.max {
            for gram in words.windows(n) {
                *counts.entry(format!("w:{}", gram.join(" "))).or_insert(0) += 1;
            }
        }
    }
    if let Some(r) = config.char_ngrams {
        for word in &words {
            let chars: Vec<char> = word.chars().collect();
            for n in r.min..=r.max {
                for gram in chars.windows(n) {
                    let mut key = String::with_capacity(2 + n * 4);
                    key.push_str("c:");
                    key.extend(gram);
                    *counts.entry(key).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

fn bucket_and_sign(feature: &str, dimension: usize) -> (u32, f64) {
    let h = XxHash64::oneshot(HASH_SEED, feature.as_bytes());
    let bucket = (h & (dimension as u64 - 1)) as u32;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (bucket, sign)
}

/// Signed-hashed term frequencies, before idf and normalization.
fn hashed_tf(config: &FeatureConfig, text: &str) -> SparseVec {
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for (feature, count) in ngram_counts(config, text) {
        let tf = match config.tf {
            TfWeighting::Binary => 1.0,
            TfWeighting::Sublinear => 1.0 + (count as f64).ln(),
        };
        let (bucket, sign) = bucket_and_sign(&feature, config.dimension);
        *acc.entry(bucket).or_insert(0.0) += sign * tf;
    }
    let mut v: SparseVec = acc.into_iter().filter(|(_, x)| *x != 0.0).collect();
    v.sort_unstable_by_key(|(i, _)| *i);
    v
}

/// Smoothed inverse document frequencies over hash buckets:
/// `ln((1 + n) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub n_docs: usize,
    /// (bucket, idf) for every bucket seen in at least one document.
    pub values: Vec<(u32, f64)>,
}

impl IdfTable {
    pub fn fit<'a>(config: &FeatureConfig, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: BTreeMap<u32, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for text in texts {
            n_docs += 1;
            for (bucket, _) in hashed_tf(config, text) {
                *df.entry(bucket).or_insert(0) += 1;
            }
        }
        let values = df
            .into_iter()
            .map(|(b, d)| (b, Self::formula(n_docs, d)))
            .collect();
        Self { n_docs, values }
    }

    pub fn formula(n_docs: usize, df: usize) -> f64 {
        ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn get(&self, bucket: u32) -> f64 {
        match self.values.binary_search_by_key(&bucket, |(b, _)| *b) {
            Ok(i) => self.values[i].1,
            Err(_) => Self::formula(self.n_docs, 0),
        }
    }
}

/// Maps a text to its sparse feature vector.
pub fn vectorize(config: &FeatureConfig, idf: Option<&IdfTable>, text: &str) -> SparseVec {
    let mut v = hashed_tf(config, text);
    if let (true, Some(table)) = (config.idf, idf) {
        for (bucket, x) in v.iter_mut() {
            *x *= table.get(*bucket);
        }
    }
    if config.l2_normalize {
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, x) in v.iter_mut() {
                *x /= norm;
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars_only(min: usize, max: usize) -> FeatureConfig {
        FeatureConfig {
            word_ngrams: None,
            char_ngrams: Some(NgramRange::new(min, max)),
            ..Default::default()
        }
    }

    #[test]
    fn single_trigram_normalizes_to_unit_weight() {
        let v = vectorize(&chars_only(3, 3), None, "aaa");
        assert_eq!(v.len(), 1);
        assert!((v[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ngram_inventory() {
        let cfg = FeatureConfig {
            char_ngrams: Some(NgramRange::new(3, 4)),
            ..Default::default()
        };
        let counts = ngram_counts(&cfg, "The cat, the CAT");
        assert_eq!(counts["w:the"], 2);
        assert_eq!(counts["w:the cat"], 2);
        assert_eq!(counts["w:cat the"], 1);
        assert_eq!(counts["c:cat"], 2);
        assert!(!counts.contains_key("c:the "));
        // char grams stay inside words, no padding
        assert!(counts.keys().all(|k| !k.starts_with("c:") || !k.contains(' ')));
        assert_eq!(counts.len(), 6);
    }

    #[test]
    fn idf_matches_hand_formula() {
        let cfg = FeatureConfig {
            word_ngrams: Some(NgramRange::new(1, 1)),
            char_ngrams: None,
            ..Default::default()
        };
        let table = IdfTable::fit(&cfg, ["shared alpha", "shared beta"]);
        let (shared, _) = bucket_and_sign("w:shared", cfg.dimension);
        let (alpha, _) = bucket_and_sign("w:alpha", cfg.dimension);
        assert_eq!(table.get(shared), 1.0);
        let expected = (3.0f64 / 2.0).ln() + 1.0;
        assert!((table.get(alpha) - expected).abs() < 1e-15);
    }

    #[test]
    fn sublinear_tf_values() {
        let cfg = FeatureConfig {
            word_ngrams: Some(NgramRange::new(1, 1)),
            char_ngrams: None,
            l2_normalize: false,
            ..Default::default()
        };
        let v = vectorize(&cfg, None, "go go go stop");
        let (go, go_sign) = bucket_and_sign("w:go", cfg.dimension);
        let got = v.iter().find(|(b, _)| *b == go).unwrap().1;
        assert!((got - go_sign * (1.0 + 3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::default().validate().is_ok());
        let bad = FeatureConfig {
            dimension: 1000,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let empty = FeatureConfig {
            word_ngrams: Some(NgramRange::new(3, 2)),
            ..Default::default()
        };
        assert!(empty.validate().is_err());
    }

    proptest! {
        #[test]
        fn vectors_are_deterministic_sorted_and_unit(text in "[a-z ]{1,60}") {
            let cfg = FeatureConfig::default();
            let a = vectorize(&cfg, None, &text);
            let b = vectorize(&cfg, None, &text);
            prop_assert_eq!(&a, &b);
            prop_assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
            if !a.is_empty() {
                let norm: f64 = a.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
