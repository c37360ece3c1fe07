//! One-vs-rest linear classifier trained with the Pegasos primal subgradient method.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{vectorize, FeatureConfig, IdfTable, SparseVec};
use super::ClassifierError;
use crate::corpus::Corpus;
use crate::util::{rng_from_seed, sha256_hex};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Hinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Regularization strength; λ = 1 / (C · N).
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 10,
            seed: 0,
            loss: Loss::Hinge,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ClassifierError::Config(format!("C must be positive, got {}", self.c)));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained model. Weight rows are stored sparsely (non-zero buckets only)
/// but stand for dense vectors of length `features.dimension`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub labels: Vec<String>,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub idf: Option<IdfTable>,
    pub weights: Vec<SparseVec>,
    pub biases: Vec<f64>,
    pub corpus_fingerprint: String,
    /// Mean regularized hinge objective over classes, one value per epoch.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    /// One score per label, in label order.
    pub scores: Vec<f64>,
}

/// Hash of the (id, text, label) sequence a model was trained on.
pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    let rows: Vec<(&str, &str, &str)> = corpus
        .examples
        .iter()
        .map(|e| (e.id.as_str(), e.text.as_str(), e.label.as_str()))
        .collect();
    sha256_hex(serde_json::to_string(&rows).expect("rows serialize").as_bytes())
}

fn sparse_dot(w: &[f64], x: &SparseVec) -> f64 {
    x.iter().map(|&(i, v)| w[i as usize] * v).sum()
}

/// Pegasos state for one binary problem: w = scale · v, bias is the last
/// coordinate of v and is regularized like every other weight.
struct Binary {
    v: Vec<f64>,
    scale: f64,
    norm_sq: f64,
}

impl Binary {
    fn new(dim: usize) -> Self {
        Self {
            v: vec![0.0; dim + 1],
            scale: 1.0,
            norm_sq: 0.0,
        }
    }

    fn bias_index(&self) -> usize {
        self.v.len() - 1
    }

    fn raw_dot(&self, x: &SparseVec) -> f64 {
        sparse_dot(&self.v, x) + self.v[self.bias_index()]
    }

    fn margin(&self, x: &SparseVec) -> f64 {
        self.scale * self.raw_dot(x)
    }

    fn step(&mut self, x: &SparseVec, y: f64, lambda: f64, t: usize) {
        let eta = 1.0 / (lambda * t as f64);
        let violated = y * self.margin(x) < 1.0;
        let shrink = 1.0 - eta * lambda;
        if shrink <= 0.0 {
            self.v.iter_mut().for_each(|w| *w = 0.0);
            self.scale = 1.0;
            self.norm_sq = 0.0;
        } else {
            self.scale *= shrink;
            self.norm_sq *= shrink * shrink;
        }
        if violated {
            let a = eta * y / self.scale;
            let dot = self.raw_dot(x);
            let x_sq: f64 = x.iter().map(|(_, v)| v * v).sum::<f64>() + 1.0;
            for &(i, val) in x {
                self.v[i as usize] += a * val;
            }
            let b = self.bias_index();
            self.v[b] += a;
            self.norm_sq += self.scale * self.scale * (2.0 * a * dot + a * a * x_sq);
        }
        let radius_sq = 1.0 / lambda;
        if self.norm_sq > radius_sq {
            let f = (radius_sq / self.norm_sq).sqrt();
            self.scale *= f;
            self.norm_sq = radius_sq;
        }
        if self.scale < 1e-9 {
            self.fold();
        }
    }

    fn fold(&mut self) {
        let s = self.scale;
        self.v.iter_mut().for_each(|w| *w *= s);
        self.scale = 1.0;
        self.norm_sq = self.v.iter().map(|w| w * w).sum();
    }

    fn objective(&self, xs: &[SparseVec], ys: &[f64], lambda: f64) -> f64 {
        let hinge: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| (1.0 - y * self.margin(x)).max(0.0))
            .sum::<f64>()
            / xs.len() as f64;
        lambda / 2.0 * self.norm_sq + hinge
    }

    fn into_weights(mut self) -> (SparseVec, f64) {
        self.fold();
        let bias = self.v.pop().expect("bias slot");
        let row = self
            .v
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
            .map(|(i, w)| (i as u32, w))
            .collect();
        (row, bias)
    }
}

/// Trains a one-vs-rest hinge-loss model on `corpus` with the corpus's own class order.
pub fn train(corpus: &Corpus, features: &FeatureConfig, config: &TrainConfig) -> Result<ModelArtifact, ClassifierError> {
    features.validate()?;
    config.validate()?;
    let labels: Vec<String> = corpus.classes.clone();
    let present: Vec<&String> = labels.iter().filter(|c| corpus.examples.iter().any(|e| &e.label == *c)).collect();
    if present.len() < 2 {
        return Err(ClassifierError::SingleClass);
    }
    for (class, n) in corpus.class_counts() {
        if n == 1 {
            return Err(ClassifierError::TooFewExamples { class, count: n });
        }
    }

    let texts: Vec<&str> = corpus.texts();
    let idf = features.idf.then(|| IdfTable::fit(features, texts.iter().copied()));
    let xs: Vec<SparseVec> = texts.iter().map(|t| vectorize(features, idf.as_ref(), t)).collect();
    let class_of: Vec<usize> = corpus
        .examples
        .iter()
        .map(|e| labels.iter().position(|c| c == &e.label).expect("label in classes"))
        .collect();
    let n = xs.len();
    let lambda = 1.0 / (config.c * n as f64);

    let mut models: Vec<Binary> = labels.iter().map(|_| Binary::new(features.dimension)).collect();
    let targets: Vec<Vec<f64>> = (0..labels.len())
        .map(|c| class_of.iter().map(|&k| if k == c { 1.0 } else { -1.0 }).collect())
        .collect();
    let mut rng = rng_from_seed(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut t = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            for (model, ys) in models.iter_mut().zip(&targets) {
                model.step(&xs[i], ys[i], lambda, t);
            }
        }
        let objective = models
            .iter()
            .zip(&targets)
            .map(|(m, ys)| m.objective(&xs, ys, lambda))
            .sum::<f64>()
            / labels.len() as f64;
        if !objective.is_finite() {
            return Err(ClassifierError::NonFinite { epoch: epoch + 1 });
        }
        tracing::trace!(epoch = epoch + 1, objective, "pegasos epoch");
        trace.push(objective);
    }

    let (weights, biases): (Vec<SparseVec>, Vec<f64>) = models.into_iter().map(Binary::into_weights).unzip();
    if weights.iter().flatten().any(|(_, w)| !w.is_finite()) || biases.iter().any(|b| !b.is_finite()) {
        return Err(ClassifierError::NonFinite { epoch: config.epochs });
    }
    Ok(ModelArtifact {
        version: ARTIFACT_VERSION,
        labels,
        features: features.clone(),
        train: config.clone(),
        idf,
        weights,
        biases,
        corpus_fingerprint: corpus_fingerprint(corpus),
        objective_trace: trace,
    })
}

impl ModelArtifact {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.version != ARTIFACT_VERSION {
            return Err(ClassifierError::Format(format!("unsupported model version {}", self.version)));
        }
        if self.weights.len() != self.labels.len() || self.biases.len() != self.labels.len() {
            return Err(ClassifierError::Format("weight rows do not match label count".into()));
        }
        let dim = self.features.dimension as u32;
        for row in &self.weights {
            if row.iter().any(|(i, w)| *i >= dim || !w.is_finite()) {
                return Err(ClassifierError::Format("weight out of range or not finite".into()));
            }
        }
        self.features.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self, ClassifierError> {
        let model: Self = serde_json::from_str(raw).map_err(|e| ClassifierError::Format(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ClassifierError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn row_score(row: &SparseVec, bias: f64, x: &SparseVec) -> f64 {
        // row is sorted by bucket and usually far longer than x
        x.iter().fold(bias, |s, &(i, v)| match row.binary_search_by_key(&i, |e| e.0) {
            Ok(k) => s + row[k].1 * v,
            Err(_) => s,
        })
    }

    pub fn scores(&self, text: &str) -> Vec<f64> {
        let x = vectorize(&self.features, self.idf.as_ref(), text);
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, &b)| Self::row_score(row, b, &x))
            .collect()
    }
}

/// Index of the highest score; ties go to the earliest label.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ModelArtifact, text: &str) -> Prediction {
    let scores = model.scores(text);
    Prediction {
        label: model.labels[argmax(&scores)].clone(),
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;

    fn toy() -> Corpus {
        let mut ex = Vec::new();
        for i in 0..10 {
            ex.push(Example::labeled(format!("a{i}"), format!("apple banana cherry {i}"), "fruit"));
            ex.push(Example::labeled(format!("b{i}"), format!("hammer wrench drill {i}"), "tool"));
        }
        Corpus::new("toy", vec!["fruit".into(), "tool".into()], ex).unwrap()
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let corpus = toy();
        let model = train(&corpus, &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        for e in &corpus.examples {
            assert_eq!(predict(&model, &e.text).label, e.label);
        }
        assert!(model.objective_trace.last().unwrap() <= model.objective_trace.first().unwrap());
    }

    #[test]
    fn same_seed_same_bytes() {
        let corpus = toy();
        let a = train(&corpus, &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        let b = train(&corpus, &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let round = ModelArtifact::from_json(&a.to_json()).unwrap();
        assert_eq!(round, a);
    }

    #[test]
    fn zero_vector_goes_to_bias_argmax() {
        let model = train(&toy(), &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        let p = predict(&model, "!!! ???");
        assert_eq!(p.scores, model.biases);
        assert_eq!(p.label, model.labels[argmax(&model.biases)]);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
    }

    #[test]
    fn scaling_weights_keeps_labels() {
        let model = train(&toy(), &FeatureConfig::default(), &TrainConfig::default()).unwrap();
        let mut scaled = model.clone();
        scaled.weights.iter_mut().flatten().for_each(|(_, w)| *w *= 2.0);
        scaled.biases.iter_mut().for_each(|b| *b *= 2.0);
        for text in ["apple", "drill banana", "nothing at all", "hammer"] {
            assert_eq!(predict(&model, text).label, predict(&scaled, text).label);
        }
    }

    #[test]
    fn rejects_single_class_and_bad_config() {
        let ex = vec![Example::labeled("1", "x y", "a"), Example::labeled("2", "y z", "a")];
        let single = Corpus::new("s", vec!["a".into(), "b".into()], ex).unwrap();
        assert!(matches!(
            train(&single, &FeatureConfig::default(), &TrainConfig::default()),
            Err(ClassifierError::SingleClass)
        ));
        let cfg = TrainConfig {
            c: 0.0,
            ..Default::default()
        };
        assert!(matches!(train(&toy(), &FeatureConfig::default(), &cfg), Err(ClassifierError::Config(_))));
    }

    #[test]
    fn projection_matches_dense_reference() {
        // A naive dense Pegasos on the same stream must agree with the scaled form.
        let corpus = toy();
        let fc = FeatureConfig {
            dimension: 1 << 10,
            ..Default::default()
        };
        let xs: Vec<SparseVec> = corpus.texts().iter().map(|t| vectorize(&fc, None, t)).collect();
        let ys: Vec<f64> = corpus.labels().iter().map(|l| if *l == "fruit" { 1.0 } else { -1.0 }).collect();
        let lambda = 1.0 / xs.len() as f64;
        let mut fast = Binary::new(fc.dimension);
        let mut dense = vec![0.0; fc.dimension + 1];
        for t in 1..=200 {
            let i = (t * 7) % xs.len();
            let (x, y) = (&xs[i], ys[i]);
            fast.step(x, y, lambda, t);
            let eta = 1.0 / (lambda * t as f64);
            let m = sparse_dot(&dense, x) + dense[fc.dimension];
            let violated = y * m < 1.0;
            dense.iter_mut().for_each(|w| *w *= 1.0 - eta * lambda);
            if violated {
                for &(j, v) in x {
                    dense[j as usize] += eta * y * v;
                }
                dense[fc.dimension] += eta * y;
            }
            let norm = dense.iter().map(|w| w * w).sum::<f64>().sqrt();
            let cap = 1.0 / lambda.sqrt();
            if norm > cap {
                dense.iter_mut().for_each(|w| *w *= cap / norm);
            }
            let fast_w: Vec<f64> = fast.v.iter().map(|w| w * fast.scale).collect();
            let diff = fast_w.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-9, "step {t}: {diff}");
            let true_norm: f64 = fast_w.iter().map(|w| w * w).sum();
            assert!((true_norm - fast.norm_sq).abs() < 1e-6 * (1.0 + true_norm));
        }
    }
}
