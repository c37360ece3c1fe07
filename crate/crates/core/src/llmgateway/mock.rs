//! Deterministic offline backend.
//!
//! The mock reads the prompt the way a compliant model would: it finds the
//! instrument words that were interpolated into it, writes short texts around
//! them, and for rewrite prompts edits the embedded examples. Classification
//! prompts are answered by keyword vote.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, CompletionResult, GenerationConfig, RequestKey};
use crate::instruments::Instrument;
use crate::promptgen::{ChatPrompt, TemplateSet};
use crate::util::{derive_seed, rng_from_seed, SeededRng};

/// Class-neutral words used to pad every mock text.
pub const FILLER_WORDS: [&str; 40] = [
    "today", "really", "just", "thing", "people", "time", "week", "always", "maybe", "actually", "honestly",
    "here", "still", "again", "morning", "evening", "friends", "coffee", "weather", "story", "moment", "little",
    "pretty", "around", "every", "going", "back", "later", "seems", "quite", "simple", "whole", "thought", "feel",
    "look", "kind", "sure", "world", "town", "right",
];

const STOPWORDS: [&str; 48] = [
    "about", "above", "after", "against", "also", "among", "been", "before", "being", "between", "both", "cannot",
    "could", "does", "during", "each", "from", "further", "have", "having", "into", "itself", "more", "most",
    "much", "must", "only", "other", "over", "same", "should", "some", "such", "than", "that", "their", "them",
    "then", "there", "these", "they", "this", "those", "through", "under", "very", "which", "with",
];

const MIN_KEYWORD_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// Every text carries at least one keyword grounded in the prompt, subject
    /// to the profile's `noise_rate` (zero by default).
    #[default]
    KeywordFaithful,
    /// Texts carry no class signal at all.
    Generic,
    /// Like `KeywordFaithful`, but each text's class keywords are swapped for
    /// another class's keyword with probability `noise_rate`.
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFormat {
    #[default]
    Json,
    /// `1. "text"` lines, as a chat model following "put each tweet in quotation marks" might answer.
    NumberedQuotes,
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Per-class keyword lists plus a reverse index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MockVocabulary {
    classes: Vec<(String, Vec<String>)>,
    owner: BTreeMap<String, usize>,
}

impl MockVocabulary {
    /// Builds keyword lists from explicit per-class word lists. Words listed
    /// under more than one class are dropped.
    pub fn from_lists(lists: Vec<(String, Vec<String>)>) -> Self {
        let mut seen: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for (i, (_, words)) in lists.iter().enumerate() {
            for w in words {
                seen.entry(w.to_lowercase()).or_default().insert(i);
            }
        }
        let mut owner = BTreeMap::new();
        let classes = lists
            .into_iter()
            .enumerate()
            .map(|(i, (class, words))| {
                let mut kept: Vec<String> = words
                    .into_iter()
                    .map(|w| w.to_lowercase())
                    .filter(|w| seen[w].len() == 1)
                    .collect();
                kept.sort();
                kept.dedup();
                for w in &kept {
                    owner.insert(w.clone(), i);
                }
                (class, kept)
            })
            .collect();
        Self { classes, owner }
    }

    /// Content words of each class's instrument items and descriptions, minus
    /// short words, stopwords, filler, template wording and class-name tokens.
    pub fn from_instrument(instrument: &Instrument, templates: &TemplateSet) -> Self {
        let mut excluded: BTreeSet<String> = STOPWORDS.iter().chain(FILLER_WORDS.iter()).map(|w| w.to_string()).collect();
        excluded.extend(templates.words());
        for class in &instrument.classes {
            excluded.extend(tokens(class));
        }
        let lists = instrument
            .classes
            .iter()
            .map(|class| {
                let mut words = Vec::new();
                for (dim, item) in instrument.items_for(class) {
                    let texts = [Some(item.text.as_str()), item.description.as_deref(), dim.description.as_deref()];
                    for t in texts.into_iter().flatten() {
                        words.extend(tokens(t).filter(|w| {
                            w.chars().count() >= MIN_KEYWORD_LEN
                                && !w.chars().any(|c| c.is_ascii_digit())
                                && !excluded.contains(w)
                        }));
                    }
                }
                (class.clone(), words)
            })
            .collect();
        Self::from_lists(lists)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|(c, _)| c.as_str())
    }

    pub fn keywords(&self, class: &str) -> &[String] {
        self.classes
            .iter()
            .find(|(c, _)| c == class)
            .map(|(_, w)| w.as_slice())
            .unwrap_or(&[])
    }

    pub fn owner(&self, word: &str) -> Option<&str> {
        self.owner.get(word).map(|&i| self.classes[i].0.as_str())
    }

    /// Keyword hits per class in `text`, in class order.
    pub fn votes(&self, text: &str) -> Vec<usize> {
        let mut votes = vec![0; self.classes.len()];
        for w in tokens(text) {
            if let Some(&i) = self.owner.get(&w) {
                votes[i] += 1;
            }
        }
        votes
    }

    pub fn contains_keyword_of(&self, text: &str, class: &str) -> bool {
        tokens(text).any(|w| self.owner(&w) == Some(class))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockProfile {
    pub mode: MockMode,
    pub noise_rate: f64,
    pub vocabulary: MockVocabulary,
    /// Probability of answering a generation prompt with a refusal.
    pub refusal_rate: f64,
    pub format: MockFormat,
}

impl MockProfile {
    pub fn new(mode: MockMode, noise_rate: f64, vocabulary: MockVocabulary) -> Self {
        Self {
            mode,
            noise_rate: noise_rate.clamp(0.0, 1.0),
            vocabulary,
            refusal_rate: 0.0,
            format: MockFormat::Json,
        }
    }

    pub fn keyword_faithful(vocabulary: MockVocabulary) -> Self {
        Self::new(MockMode::KeywordFaithful, 0.0, vocabulary)
    }

    fn effective_noise(&self) -> f64 {
        match self.mode {
            MockMode::Noisy | MockMode::KeywordFaithful => self.noise_rate.clamp(0.0, 1.0),
            MockMode::Generic => 0.0,
        }
    }
}

const REWRITE_MARKERS: [&str; 2] = ["rewrite are: ", "rewrite is: "];

/// Splits an alternation prompt's embedded examples out of the user message.
/// Returns (prompt text without the examples, examples).
fn split_seed_examples(user: &str) -> (String, Vec<String>) {
    for marker in REWRITE_MARKERS {
        if let Some(pos) = user.find(marker) {
            let start = pos + marker.len();
            let mut stream = serde_json::Deserializer::from_str(&user[start..]).into_iter::<serde_json::Value>();
            if let Some(Ok(value)) = stream.next() {
                let end = start + stream.byte_offset();
                let seeds = match value {
                    serde_json::Value::String(s) => vec![s],
                    serde_json::Value::Array(items) => {
                        items.into_iter().filter_map(|v| v.as_str().map(str::to_string)).collect()
                    }
                    _ => Vec::new(),
                };
                let rest = format!("{}{}", &user[..start], &user[end..]);
                return (rest, seeds);
            }
        }
    }
    (user.to_string(), Vec::new())
}

/// Keywords of the single class the prompt is about, found in the prompt's own
/// wording (examples excluded). Returns the owning class index and its words.
fn grounded_keywords(vocab: &MockVocabulary, prompt_text: &str) -> Option<(String, Vec<String>)> {
    let mut by_class: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for w in tokens(prompt_text) {
        if let Some(class) = vocab.owner(&w) {
            let words = by_class.entry(class).or_default();
            if !words.contains(&w) {
                words.push(w);
            }
        }
    }
    let best = vocab
        .classes()
        .filter_map(|c| by_class.get(c).map(|w| (c, w)))
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(std::cmp::Ordering::Greater))?;
    Some((best.0.to_string(), best.1.clone()))
}

fn filler(rng: &mut SeededRng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| FILLER_WORDS.choose(rng).expect("filler non-empty").to_string())
        .collect()
}

fn fresh_text(rng: &mut SeededRng, keywords: &[String]) -> String {
    let n = rng.gen_range(8..=14);
    let mut words = filler(rng, n);
    if !keywords.is_empty() {
        let k = rng.gen_range(1..=2.min(keywords.len()));
        for kw in keywords.choose_multiple(rng, k) {
            let at = rng.gen_range(0..=words.len());
            words.insert(at, kw.clone());
        }
    }
    words.join(" ")
}

/// Replaces one word of `seed` with a grounded keyword, or with filler when
/// nothing is grounded.
fn edit_seed(rng: &mut SeededRng, seed: &str, keywords: &[String]) -> String {
    let mut words: Vec<String> = seed.split_whitespace().map(str::to_string).collect();
    let replacement = keywords
        .choose(rng)
        .cloned()
        .unwrap_or_else(|| filler(rng, 1).remove(0));
    if words.is_empty() {
        return replacement;
    }
    let at = rng.gen_range(0..words.len());
    words[at] = replacement;
    words.join(" ")
}

/// Swaps every word owned by `class` for a keyword of some other class, or for
/// filler when no other class has keywords.
fn corrupt(rng: &mut SeededRng, vocab: &MockVocabulary, class: &str, text: &str) -> String {
    let others: Vec<&str> = vocab
        .classes()
        .filter(|c| *c != class && !vocab.keywords(c).is_empty())
        .collect();
    let decoy = others.choose(rng).copied();
    text.split_whitespace()
        .map(|w| {
            let owned = tokens(w).any(|t| vocab.owner(&t) == Some(class));
            if !owned {
                return w.to_string();
            }
            match decoy {
                Some(other) => vocab.keywords(other).choose(rng).expect("non-empty").clone(),
                None => filler(rng, 1).remove(0),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn format_texts(texts: &[String], format: MockFormat) -> String {
    match format {
        MockFormat::Json => serde_json::to_string(texts).expect("strings serialize"),
        MockFormat::NumberedQuotes => texts
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}. \"{}\"", i + 1, t.replace('"', "'")))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn classification_labels(user: &str) -> Vec<String> {
    let Some(start) = user.find("categories:\n[") else {
        return Vec::new();
    };
    let body = &user[start + "categories:\n[".len()..];
    let Some(end) = body.find("].") else {
        return Vec::new();
    };
    body[..end].split(", ").map(|s| s.trim().to_string()).collect()
}

fn answer_classification(prompt: &ChatPrompt, vocab: &MockVocabulary) -> String {
    let labels = classification_labels(&prompt.user_message);
    let sentence = prompt
        .user_message
        .rfind("Sentence: ")
        .map(|i| &prompt.user_message[i + "Sentence: ".len()..])
        .unwrap_or("");
    let votes = vocab.votes(sentence);
    let vocab_classes: Vec<&str> = vocab.classes().collect();
    let mut best: Option<(&str, usize)> = None;
    for label in &labels {
        let v = vocab_classes
            .iter()
            .position(|c| c == label)
            .map(|i| votes[i])
            .unwrap_or(0);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((label, v));
        }
    }
    match best {
        Some((label, _)) => format!("Category: {label}\nExplanation: keyword match."),
        None => "I am not sure what to answer.".into(),
    }
}

/// The mock's raw answer to one prompt.
pub fn mock_respond(prompt: &ChatPrompt, profile: &MockProfile, rng: &mut SeededRng) -> String {
    if prompt.system_message.starts_with("You are a classifier") {
        return answer_classification(prompt, &profile.vocabulary);
    }
    if profile.refusal_rate > 0.0 && rng.gen_bool(profile.refusal_rate.clamp(0.0, 1.0)) {
        return "I cannot help with that.".into();
    }
    let (user_rest, seeds) = split_seed_examples(&prompt.user_message);
    let grounded = match profile.mode {
        MockMode::Generic => None,
        _ => grounded_keywords(&profile.vocabulary, &format!("{}\n{}", prompt.system_message, user_rest)),
    };
    let (owner, keywords) = match &grounded {
        Some((class, words)) => (Some(class.as_str()), words.as_slice()),
        None => (None, &[][..]),
    };
    let count = prompt.expected_count.max(1);
    let noise = profile.effective_noise();
    let texts: Vec<String> = (0..count)
        .map(|i| {
            let text = if seeds.is_empty() {
                fresh_text(rng, keywords)
            } else {
                edit_seed(rng, &seeds[i % seeds.len()], keywords)
            };
            match owner {
                Some(class) if noise > 0.0 && rng.gen_bool(noise) => corrupt(rng, &profile.vocabulary, class, &text),
                _ => text,
            }
        })
        .collect();
    format_texts(&texts, profile.format)
}

/// [`mock_respond`] wrapped as a completion result under the model name `mock`.
pub fn mock_complete(prompt: &ChatPrompt, profile: &MockProfile, rng: &mut SeededRng) -> CompletionResult {
    let config = GenerationConfig::for_model("mock");
    CompletionResult {
        raw_text: mock_respond(prompt, profile, rng),
        model_name: config.model_name.clone(),
        request_fingerprint: RequestKey::new(prompt, &config, "").fingerprint(),
        cached: false,
    }
}

/// Gateway backend around [`mock_respond`]. Each request draws from a stream
/// seeded by `seed` and the request fingerprint, so answers do not depend on
/// call order or thread scheduling.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub profile: MockProfile,
    pub seed: u64,
}

impl MockBackend {
    pub fn new(profile: MockProfile, seed: u64) -> Self {
        Self { profile, seed }
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let mut rng = rng_from_seed(derive_seed(self.seed, &[request.fingerprint]));
        Ok(mock_respond(request.prompt, &self.profile, &mut rng))
    }
}

/// Adapts a closure into a backend; handy for scripted fakes.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest<'_>) -> Result<String, BackendError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        (self.0)(request)
    }
}
