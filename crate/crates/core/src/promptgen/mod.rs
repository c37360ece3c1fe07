//! Chat prompts for the four generation strategy cells and for direct LLM
//! classification, plus parsing of the model responses.

mod parse;
mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::{Instrument, InstrumentError};
use crate::util::{is_blank, SeededRng};

pub use parse::{
    extract_generated_texts, parse_classification_response, parse_generation_response, ExtractedTexts,
};
pub use templates::{CellTemplate, TemplateSet, PLACEHOLDER_PREFIXES};

/// Texts requested per generation call.
pub const DEFAULT_BATCH_SIZE: usize = 5;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("alternation needs {needed} seed examples, got {got}")]
    MissingSeedExamples { needed: usize, got: usize },
    #[error("theory-driven prompt needs an instrument item: {0}")]
    MissingInstrumentItem(String),
    #[error("unknown target class {0:?}")]
    UnknownClass(String),
    #[error("no template for genre {genre:?} and cell {cell}")]
    MissingTemplate { genre: String, cell: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("classification prompt needs at least one label")]
    EmptyLabels,
    #[error("sentence to classify is blank")]
    BlankSentence,
    #[error("batch size must be positive")]
    ZeroBatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("response contained no usable texts: {raw:?}")]
    NoTexts { raw: String },
    #[error("response is empty")]
    EmptyResponse,
    #[error("no \"Category:\" marker in response: {raw:?}")]
    MissingCategory { raw: String },
    #[error("category {category:?} is not one of the labels")]
    UnknownCategory { category: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionStrategy {
    TheoryDriven,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationType {
    New,
    Alternation,
}

/// One cell of the instruction strategy by generation type grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrategyCell {
    pub instruction: InstructionStrategy,
    pub generation: GenerationType,
}

impl StrategyCell {
    pub const fn new(instruction: InstructionStrategy, generation: GenerationType) -> Self {
        Self { instruction, generation }
    }

    pub fn all() -> [StrategyCell; 4] {
        use GenerationType::*;
        use InstructionStrategy::*;
        [
            Self::new(TheoryDriven, New),
            Self::new(TheoryDriven, Alternation),
            Self::new(Naive, New),
            Self::new(Naive, Alternation),
        ]
    }

    /// Short code used in report tables: instruction T/N, generation N/A.
    pub fn codes(&self) -> (&'static str, &'static str) {
        let i = match self.instruction {
            InstructionStrategy::TheoryDriven => "T",
            InstructionStrategy::Naive => "N",
        };
        let g = match self.generation {
            GenerationType::New => "N",
            GenerationType::Alternation => "A",
        };
        (i, g)
    }
}

impl fmt::Display for InstructionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TheoryDriven => "theory_driven",
            Self::Naive => "naive",
        })
    }
}

impl fmt::Display for GenerationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::New => "new",
            Self::Alternation => "alternation",
        })
    }
}

impl fmt::Display for StrategyCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.instruction, self.generation)
    }
}

impl FromStr for InstructionStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "theory_driven" | "theory" | "T" => Ok(Self::TheoryDriven),
            "naive" | "N" => Ok(Self::Naive),
            other => Err(format!("unknown instruction strategy {other:?}")),
        }
    }
}

impl FromStr for GenerationType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "new" | "N" => Ok(Self::New),
            "alternation" | "A" => Ok(Self::Alternation),
            other => Err(format!("unknown generation type {other:?}")),
        }
    }
}

impl FromStr for StrategyCell {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (i, g) = s
            .split_once(['-', '/'])
            .ok_or_else(|| format!("strategy cell {s:?} is not of the form instruction-generation"))?;
        Ok(Self::new(i.parse()?, g.parse()?))
    }
}

impl Serialize for StrategyCell {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StrategyCell {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatPrompt {
    pub system_message: String,
    pub user_message: String,
    pub expected_count: usize,
}

/// A ready-to-send generation prompt and the context needed to label its output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationBatch {
    pub prompt: ChatPrompt,
    pub target_class: String,
    pub strategy: StrategyCell,
    /// (dimension name, item text) interpolated into theory-driven prompts.
    pub instrument_item: Option<(String, String)>,
    /// (example id, text) pairs embedded in alternation prompts.
    pub seed_examples: Vec<(String, String)>,
}

/// Builds the generation prompt for one call.
///
/// `seed_examples` must hold at least the template's alternation count for
/// alternation cells; only that many are used.
pub fn build_generation_prompt(
    templates: &TemplateSet,
    cell: StrategyCell,
    instrument: &Instrument,
    target_class: &str,
    seed_examples: &[(String, String)],
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<GenerationBatch, PromptError> {
    if batch_size == 0 {
        return Err(PromptError::ZeroBatch);
    }
    if !instrument.classes.iter().any(|c| c == target_class) {
        return Err(PromptError::UnknownClass(target_class.to_string()));
    }
    let template = templates.cell(cell)?;
    let seeds: Vec<(String, String)> = match cell.generation {
        GenerationType::Alternation => {
            let needed = templates.alternation_examples;
            if seed_examples.len() < needed {
                return Err(PromptError::MissingSeedExamples {
                    needed,
                    got: seed_examples.len(),
                });
            }
            seed_examples[..needed].to_vec()
        }
        GenerationType::New => Vec::new(),
    };
    let item = match cell.instruction {
        InstructionStrategy::TheoryDriven => {
            let (dim, item) = instrument
                .sample_item(target_class, rng)
                .map_err(|e: InstrumentError| PromptError::MissingInstrumentItem(e.to_string()))?;
            Some((dim, item))
        }
        InstructionStrategy::Naive => None,
    };

    let vars = templates::Vars {
        count: batch_size,
        target_class,
        item: item.map(|(_, i)| i),
        seed_texts: seeds.iter().map(|(_, t)| t.as_str()).collect(),
    };
    let system_message = templates::render(&template.system, &vars)?;
    let user_message = templates::render(&template.user, &vars)?;
    Ok(GenerationBatch {
        prompt: ChatPrompt {
            system_message,
            user_message,
            expected_count: batch_size,
        },
        target_class: target_class.to_string(),
        strategy: cell,
        instrument_item: item.map(|(d, i)| (d.name.clone(), i.text.clone())),
        seed_examples: seeds,
    })
}

/// The direct-classification prompt: a fixed role plus the label list and the
/// `Category:` / `Explanation:` response format.
pub fn build_classification_prompt(labels: &[String], sentence: &str) -> Result<ChatPrompt, PromptError> {
    if labels.is_empty() {
        return Err(PromptError::EmptyLabels);
    }
    if is_blank(sentence) {
        return Err(PromptError::BlankSentence);
    }
    let user_message = format!(
        "Classify the following sentence into one of these categories:\n[{}].\n\
         Provide your response in the following format:\n\
         Category: [category]\n\
         Explanation: [explanation]\n\
         Sentence: {}:",
        labels.join(", "),
        sentence.trim()
    );
    Ok(ChatPrompt {
        system_message: "You are a classifier.".into(),
        user_message,
        expected_count: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    fn seeds(n: usize) -> Vec<(String, String)> {
        (0..n).map(|i| (format!("id{i}"), format!("seed text number {i}"))).collect()
    }

    #[test]
    fn cell_string_roundtrip() {
        for cell in StrategyCell::all() {
            assert_eq!(cell.to_string().parse::<StrategyCell>().unwrap(), cell);
        }
        assert_eq!(
            "theory_driven-alternation".parse::<StrategyCell>().unwrap().codes(),
            ("T", "A")
        );
        assert!("sideways-new".parse::<StrategyCell>().is_err());
    }

    #[test]
    fn theory_new_sexism_interpolates_item() {
        let inst = Instrument::bundled_sexism();
        let templates = TemplateSet::for_instrument(&inst).unwrap();
        let cell = StrategyCell::new(InstructionStrategy::TheoryDriven, GenerationType::New);
        let batch = build_generation_prompt(&templates, cell, &inst, "sexist", &[], 5, &mut rng_from_seed(1)).unwrap();
        assert!(batch
            .prompt
            .system_message
            .starts_with("You are a social media user. Generate 5 exemplary tweets"));
        let (_, item) = batch.instrument_item.clone().unwrap();
        assert!(batch.prompt.user_message.contains(&item));
        assert_eq!(batch.prompt.expected_count, 5);
    }

    #[test]
    fn naive_new_topics_has_no_subtopic() {
        let inst = Instrument::bundled_topics();
        let templates = TemplateSet::for_instrument(&inst).unwrap();
        let cell = StrategyCell::new(InstructionStrategy::Naive, GenerationType::New);
        let batch = build_generation_prompt(&templates, cell, &inst, "Economy", &[], 5, &mut rng_from_seed(1)).unwrap();
        assert!(batch.prompt.system_message.ends_with(
            "Generate 5 exemplary sentences that could appear in a manifesto about the topic Economy."
        ));
        assert_eq!(
            batch.prompt.user_message,
            "Only display the list of the 5 new sentences and put each sentence in quotation marks."
        );
        assert!(!batch.prompt.user_message.contains("subtopic"));
        assert!(batch.instrument_item.is_none());
    }

    #[test]
    fn alternation_without_seeds_fails() {
        let inst = Instrument::bundled_topics();
        let templates = TemplateSet::for_instrument(&inst).unwrap();
        let cell = StrategyCell::new(InstructionStrategy::TheoryDriven, GenerationType::Alternation);
        let err = build_generation_prompt(&templates, cell, &inst, "Economy", &[], 5, &mut rng_from_seed(1)).unwrap_err();
        assert!(matches!(err, PromptError::MissingSeedExamples { needed: 1, got: 0 }));

        let inst = Instrument::bundled_sexism();
        let templates = TemplateSet::for_instrument(&inst).unwrap();
        let err = build_generation_prompt(&templates, cell, &inst, "sexist", &seeds(4), 5, &mut rng_from_seed(1)).unwrap_err();
        assert!(matches!(err, PromptError::MissingSeedExamples { needed: 5, got: 4 }));
    }

    #[test]
    fn unknown_class_and_missing_items_fail() {
        let inst = Instrument::bundled_sexism();
        let templates = TemplateSet::for_instrument(&inst).unwrap();
        let theory = StrategyCell::new(InstructionStrategy::TheoryDriven, GenerationType::New);
        assert!(matches!(
            build_generation_prompt(&templates, theory, &inst, "nope", &[], 5, &mut rng_from_seed(1)),
            Err(PromptError::UnknownClass(_))
        ));
        assert!(matches!(
            build_generation_prompt(&templates, theory, &inst, "non-sexist", &[], 5, &mut rng_from_seed(1)),
            Err(PromptError::MissingInstrumentItem(_))
        ));
    }

    #[test]
    fn no_unresolved_placeholders_and_instrument_containment() {
        for inst in [Instrument::bundled_sexism(), Instrument::bundled_topics()] {
            let templates = TemplateSet::for_instrument(&inst).unwrap();
            let item_texts: Vec<String> = inst
                .dimensions
                .iter()
                .flat_map(|d| d.items.iter().map(|i| i.text.clone()))
                .collect();
            for class in inst.classes_with_items() {
                for cell in StrategyCell::all() {
                    for seed in 0..10 {
                        let b = build_generation_prompt(&templates, cell, &inst, &class, &seeds(5), 5, &mut rng_from_seed(seed))
                            .unwrap();
                        let both = format!("{}\n{}", b.prompt.system_message, b.prompt.user_message);
                        for p in PLACEHOLDER_PREFIXES {
                            assert!(!both.contains(p), "{cell} left {p} in {both}");
                        }
                        match cell.instruction {
                            InstructionStrategy::TheoryDriven => {
                                let (_, item) = b.instrument_item.unwrap();
                                assert!(both.contains(&item));
                            }
                            InstructionStrategy::Naive => {
                                for t in &item_texts {
                                    assert!(!both.contains(t.as_str()), "{t}");
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn classification_prompt_lists_labels() {
        let labels = vec!["sexist".to_string(), "non-sexist".to_string()];
        let p = build_classification_prompt(&labels, "some tweet").unwrap();
        assert_eq!(p.system_message, "You are a classifier.");
        assert!(p.user_message.contains("[sexist, non-sexist]"));
        assert!(p.user_message.contains("Category: [category]\nExplanation: [explanation]"));
        assert!(p.user_message.ends_with("Sentence: some tweet:"));

        let topics = Instrument::bundled_topics().classes;
        let p = build_classification_prompt(&topics, "some sentence").unwrap();
        assert!(p.user_message.contains(&format!("[{}]", topics.join(", "))));

        assert!(matches!(build_classification_prompt(&[], "x"), Err(PromptError::EmptyLabels)));
        assert!(matches!(build_classification_prompt(&labels, "  "), Err(PromptError::BlankSentence)));
    }
}
