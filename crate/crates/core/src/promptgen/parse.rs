//! Turning raw model output into texts and labels.
//!
//! Generation responses go through two stages: a JSON array (or an object
//! wrapping one), then quoted-string and numbered-list extraction line by line.

use serde_json::Value;

use super::{GenerationBatch, ParseError};
use crate::corpus::{Example, Origin, Provenance};

const QUOTES: [char; 3] = ['"', '\u{201c}', '\u{201d}'];
const TEXT_KEYS: [&str; 6] = ["text", "tweet", "sentence", "content", "output", "example"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseFormat {
    Json,
    Quoted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedTexts {
    pub texts: Vec<String>,
    pub format: ResponseFormat,
    /// Texts parsed beyond the expected count and dropped.
    pub truncated: usize,
}

fn fenced_block(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let body = &raw[start + 3..];
    let body = body.strip_prefix("json").or_else(|| body.strip_prefix("JSON")).unwrap_or(body);
    let end = body.find("```")?;
    Some(body[..end].trim())
}

fn bracketed(raw: &str, open: char, close: char) -> Option<&str> {
    let start = raw.find(open)?;
    let end = raw.rfind(close)?;
    (end > start).then(|| &raw[start..=end])
}

fn texts_from_value(value: &Value) -> Vec<String> {
    match value {
        Value::Array(items) => items
            .iter()
            .filter_map(|item| match item {
                Value::String(s) => Some(s.clone()),
                Value::Object(map) => TEXT_KEYS
                    .iter()
                    .find_map(|k| map.get(*k).and_then(Value::as_str))
                    .map(str::to_string),
                _ => None,
            })
            .collect(),
        Value::Object(map) => {
            if let Some(array) = map.values().find(|v| v.is_array()) {
                texts_from_value(array)
            } else {
                TEXT_KEYS
                    .iter()
                    .find_map(|k| map.get(*k).and_then(Value::as_str))
                    .map(|s| vec![s.to_string()])
                    .unwrap_or_default()
            }
        }
        _ => Vec::new(),
    }
}

fn json_texts(raw: &str) -> Option<Vec<String>> {
    let trimmed = raw.trim();
    let candidates = [
        Some(trimmed),
        fenced_block(trimmed),
        bracketed(trimmed, '[', ']'),
        bracketed(trimmed, '{', '}'),
    ];
    candidates.into_iter().flatten().find_map(|candidate| {
        let value: Value = serde_json::from_str(candidate).ok()?;
        let texts: Vec<String> = texts_from_value(&value)
            .iter()
            .map(|t| clean_text(t))
            .filter(|t| !t.is_empty())
            .collect();
        (!texts.is_empty()).then_some(texts)
    })
}

/// Removes a leading list marker such as `1.`, `2)`, `-` or `*`. Returns the
/// remainder and whether a marker was found.
fn strip_list_marker(line: &str) -> (&str, bool) {
    let line = line.trim_start();
    for bullet in ["- ", "* ", "\u{2022} "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return (rest.trim_start(), true);
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        for sep in ['.', ')', ':'] {
            if let Some(after) = rest.strip_prefix(sep) {
                if after.is_empty() || after.starts_with(char::is_whitespace) {
                    return (after.trim_start(), true);
                }
            }
        }
    }
    (line, false)
}

fn strip_quotes(mut s: &str) -> &str {
    loop {
        let t = s.trim().trim_end_matches(',').trim();
        let mut chars = t.chars();
        match (chars.next(), chars.next_back()) {
            (Some(a), Some(b)) if QUOTES.contains(&a) && QUOTES.contains(&b) && t.len() > a.len_utf8() => {
                s = &t[a.len_utf8()..t.len() - b.len_utf8()];
            }
            _ => return t,
        }
    }
}

fn clean_text(s: &str) -> String {
    let (body, _) = strip_list_marker(s);
    strip_quotes(body).trim().to_string()
}

fn quoted_segments(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = line;
    while let Some(open) = rest.find(QUOTES) {
        let after = &rest[open + rest[open..].chars().next().map_or(1, char::len_utf8)..];
        let Some(close) = after.find(QUOTES) else { break };
        let inner = after[..close].trim();
        if inner.chars().any(char::is_alphanumeric) {
            out.push(inner.to_string());
        }
        rest = &after[close + after[close..].chars().next().map_or(1, char::len_utf8)..];
    }
    out
}

fn line_texts(raw: &str) -> Vec<String> {
    let mut texts = Vec::new();
    for line in raw.lines() {
        let (body, numbered) = strip_list_marker(line);
        if body.trim().is_empty() {
            continue;
        }
        if numbered {
            // a numbered item may carry a quoted text followed by trailing tags
            let body = body.trim();
            let text = match body.chars().next() {
                Some(open) if QUOTES.contains(&open) => {
                    let inner = &body[open.len_utf8()..];
                    match inner.rfind(QUOTES) {
                        Some(last) if last > 0 => inner[..last].to_string(),
                        _ => strip_quotes(body).to_string(),
                    }
                }
                _ => strip_quotes(body).to_string(),
            };
            let text = text.trim().to_string();
            if !text.is_empty() {
                texts.push(text);
            }
        } else {
            texts.extend(quoted_segments(body));
        }
    }
    texts
}

/// Extracts generated texts from a raw response, keeping at most `expected_count`.
pub fn extract_generated_texts(raw: &str, expected_count: usize) -> Result<ExtractedTexts, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::EmptyResponse);
    }
    let (mut texts, format) = match json_texts(raw) {
        Some(t) => (t, ResponseFormat::Json),
        None => (line_texts(raw), ResponseFormat::Quoted),
    };
    if texts.is_empty() {
        return Err(ParseError::NoTexts { raw: raw.to_string() });
    }
    let truncated = texts.len().saturating_sub(expected_count);
    texts.truncate(expected_count);
    Ok(ExtractedTexts {
        texts,
        format,
        truncated,
    })
}

/// Parses a generation response into synthetic examples labeled with the
/// batch's target class. Ids are `{id_prefix}-{index}`.
pub fn parse_generation_response(
    raw: &str,
    batch: &GenerationBatch,
    generator_model: &str,
    prompt_fingerprint: &str,
    id_prefix: &str,
) -> Result<(Vec<Example>, ExtractedTexts), ParseError> {
    let extracted = extract_generated_texts(raw, batch.prompt.expected_count)?;
    if extracted.truncated > 0 {
        tracing::warn!(
            dropped = extracted.truncated,
            expected = batch.prompt.expected_count,
            "generation response held more texts than requested; truncated"
        );
    }
    let examples = extracted
        .texts
        .iter()
        .enumerate()
        .map(|(i, text)| Example {
            id: format!("{id_prefix}-{i}"),
            text: text.clone(),
            label: batch.target_class.clone(),
            origin: Origin::Synthetic,
            provenance: Some(Provenance {
                strategy: batch.strategy,
                generator_model: generator_model.to_string(),
                prompt_fingerprint: prompt_fingerprint.to_string(),
                seed_example_ids: batch.seed_examples.iter().map(|(id, _)| id.clone()).collect(),
            }),
        })
        .collect();
    Ok((examples, extracted))
}

fn trim_decoration(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '[' | ']' | '"' | '\'' | '*' | '`' | '.' | ',' | ':'))
}

/// Reads the label after the first `Category:` marker. Matching is
/// case-insensitive and exact after trimming brackets and punctuation.
pub fn parse_classification_response(raw: &str, labels: &[String]) -> Result<String, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::EmptyResponse);
    }
    let lower = raw.to_lowercase();
    let marker = "category:";
    let at = lower.find(marker).ok_or_else(|| ParseError::MissingCategory { raw: raw.to_string() })?;
    // lowercasing can change byte offsets for some scripts; search the original as a fallback
    let start = if raw.is_char_boundary(at) && raw[at..].to_lowercase().starts_with(marker) {
        at + marker.len()
    } else {
        return Err(ParseError::MissingCategory { raw: raw.to_string() });
    };
    let line = raw[start..].lines().next().unwrap_or("");
    let category = trim_decoration(line);
    let wanted = category.to_lowercase();
    labels
        .iter()
        .find(|l| trim_decoration(l).to_lowercase() == wanted)
        .cloned()
        .ok_or_else(|| ParseError::UnknownCategory {
            category: category.to_string(),
        })
}
