//! Prompt template sets stored as JSON data files, one per text genre.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PromptError, StrategyCell};
use crate::instruments::{Instrument, InstrumentItem};

const TWEET: &str = include_str!("../../data/templates/tweet.json");
const MANIFESTO_SENTENCE: &str = include_str!("../../data/templates/manifesto_sentence.json");

/// Opening fragments of every placeholder a template may contain.
pub const PLACEHOLDER_PREFIXES: [&str; 7] =
    ["[Random", "[topic", "[subtopic", "[Example", "[List", "[count", "[target"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTemplate {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub genre: String,
    /// Real texts embedded per alternation call.
    pub alternation_examples: usize,
    pub cells: BTreeMap<String, CellTemplate>,
}

impl TemplateSet {
    pub fn from_json(raw: &str) -> Result<Self, PromptError> {
        let set: TemplateSet = serde_json::from_str(raw).map_err(|e| PromptError::Template(e.to_string()))?;
        if set.alternation_examples == 0 {
            return Err(PromptError::Template("alternation_examples must be positive".into()));
        }
        for key in set.cells.keys() {
            key.parse::<StrategyCell>().map_err(PromptError::Template)?;
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::from_json(&raw)
    }

    /// Built-in template set for a text genre (`tweet` or `manifesto sentence`).
    pub fn builtin(genre: &str) -> Option<Self> {
        let raw = match genre {
            "tweet" => TWEET,
            "manifesto sentence" => MANIFESTO_SENTENCE,
            _ => return None,
        };
        Some(Self::from_json(raw).expect("built-in templates are valid"))
    }

    pub fn for_instrument(instrument: &Instrument) -> Result<Self, PromptError> {
        Self::builtin(&instrument.text_genre).ok_or_else(|| PromptError::MissingTemplate {
            genre: instrument.text_genre.clone(),
            cell: "*".into(),
        })
    }

    pub fn cell(&self, cell: StrategyCell) -> Result<&CellTemplate, PromptError> {
        self.cells
            .get(&cell.to_string())
            .ok_or_else(|| PromptError::MissingTemplate {
                genre: self.genre.clone(),
                cell: cell.to_string(),
            })
    }

    /// Every word appearing in any template of this set, lowercased.
    pub fn words(&self) -> Vec<String> {
        let mut words: Vec<String> = self
            .cells
            .values()
            .flat_map(|c| [c.system.as_str(), c.user.as_str()])
            .flat_map(|t| t.split(|ch: char| !ch.is_alphanumeric()))
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        words.sort();
        words.dedup();
        words
    }
}

pub(super) struct Vars<'a> {
    pub count: usize,
    pub target_class: &'a str,
    pub item: Option<&'a InstrumentItem>,
    pub seed_texts: Vec<&'a str>,
}

// Values are followed by a period in every template.
fn clause(s: &str) -> &str {
    s.trim().trim_end_matches('.')
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn resolve(name: &str, vars: &Vars<'_>) -> Result<String, PromptError> {
    let need_item = || {
        vars.item
            .ok_or_else(|| PromptError::MissingInstrumentItem(format!("template uses [{name}]")))
    };
    Ok(match name {
        "count" => vars.count.to_string(),
        "topic" | "target class" => vars.target_class.to_string(),
        "Random Survey Item" | "subtopic" => clause(&need_item()?.text).to_string(),
        "topic description" => {
            let item = need_item()?;
            let desc = item.description.as_deref().ok_or_else(|| {
                PromptError::MissingInstrumentItem(format!("item {:?} has no description", item.text))
            })?;
            clause(desc).to_string()
        }
        "Example sentence" => {
            let text = vars
                .seed_texts
                .first()
                .ok_or(PromptError::MissingSeedExamples { needed: 1, got: 0 })?;
            json_string(text.trim())
        }
        n if n.starts_with("List of ") => {
            let items: Vec<String> = vars.seed_texts.iter().map(|t| json_string(t.trim())).collect();
            format!("[{}]", items.join(", "))
        }
        other => return Err(PromptError::Template(format!("unknown placeholder [{other}]"))),
    })
}

/// Single-pass substitution: interpolated values are never rescanned.
pub(super) fn render(template: &str, vars: &Vars<'_>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find('[') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find(']')
            .ok_or_else(|| PromptError::Template(format!("unclosed placeholder in {template:?}")))?;
        out.push_str(&resolve(&after[..end], vars)?);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
