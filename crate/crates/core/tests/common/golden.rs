//! Comparison of built prompts with the hand-transcribed fixtures in
//! `tests/fixtures/prompts`.

use std::path::PathBuf;

use synthmix::instruments::{Dimension, Instrument, InstrumentItem};
use synthmix::promptgen::{build_classification_prompt, build_generation_prompt, ChatPrompt, StrategyCell, TemplateSet};
use synthmix::util::rng_from_seed;

fn fixture(name: &str) -> Result<(String, String), String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts").join(name);
    let raw = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let body = raw.strip_prefix("[system]\n").ok_or(format!("{name}: no [system] header"))?;
    let (system, user) = body.split_once("\n[user]\n").ok_or(format!("{name}: no [user] section"))?;
    Ok((system.to_string(), user.trim_end_matches('\n').to_string()))
}

pub fn compare(prompt: &ChatPrompt, name: &str) -> Result<(), String> {
    let (system, user) = fixture(name)?;
    if prompt.system_message != system {
        return Err(format!("{name}: system message differs\n  built:   {:?}\n  fixture: {system:?}", prompt.system_message));
    }
    if prompt.user_message != user {
        return Err(format!("{name}: user message differs\n  built:   {:?}\n  fixture: {user:?}", prompt.user_message));
    }
    Ok(())
}

/// Keeps one item for `class` so theory-driven sampling is fixed.
fn single_item(mut instrument: Instrument, class: &str, dimension: &str, item: InstrumentItem) -> Instrument {
    instrument.dimensions.retain(|d| d.target_class != class);
    instrument.dimensions.push(Dimension {
        name: dimension.into(),
        target_class: class.into(),
        description: None,
        items: vec![item],
    });
    instrument
}

fn seeds(texts: &[&str]) -> Vec<(String, String)> {
    texts.iter().enumerate().map(|(i, t)| (format!("r{i}"), t.to_string())).collect()
}

fn generation_cases(
    instrument: Instrument,
    class: &str,
    seed_texts: &[&str],
    prefix: &str,
) -> Result<usize, String> {
    let templates = TemplateSet::for_instrument(&instrument).map_err(|e| e.to_string())?;
    let seed_texts = seeds(seed_texts);
    for cell in StrategyCell::all() {
        let batch = build_generation_prompt(&templates, cell, &instrument, class, &seed_texts, 5, &mut rng_from_seed(1))
            .map_err(|e| e.to_string())?;
        compare(&batch.prompt, &format!("{prefix}.{cell}.txt"))?;
    }
    Ok(4)
}

pub fn tweet_cases() -> Result<usize, String> {
    let instrument = single_item(
        Instrument::bundled_sexism(),
        "sexist",
        "Stereotypes and Comparative Opinions",
        InstrumentItem {
            text: "Men make better engineers than women".into(),
            description: None,
        },
    );
    let texts = ["first tweet", "second tweet", "third \"quoted\" tweet", "fourth tweet", "fifth tweet"];
    generation_cases(instrument, "sexist", &texts, "tweet")
}

pub fn manifesto_cases() -> Result<usize, String> {
    let instrument = single_item(
        Instrument::bundled_topics(),
        "Economy",
        "Economy",
        InstrumentItem {
            text: "free market economy".into(),
            description: Some("Favourable mentions of the free market and free market capitalism as an economic model.".into()),
        },
    );
    generation_cases(instrument, "Economy", &["We will build more schools in rural areas"], "manifesto")
}

pub fn classification_cases() -> Result<usize, String> {
    let sexism = build_classification_prompt(&Instrument::bundled_sexism().classes, "women should stay at home")
        .map_err(|e| e.to_string())?;
    compare(&sexism, "classify.sexism.txt")?;
    let labels: Vec<String> = [
        "Economy",
        "Welfare and Quality of Life",
        "Fabric of Society",
        "Political System",
        "Social Groups",
        "Freedom and Democracy",
        "External Relations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let topics = build_classification_prompt(&labels, "We will lower taxes for small businesses").map_err(|e| e.to_string())?;
    compare(&topics, "classify.topics.txt")?;
    Ok(2)
}

/// Number of fixtures matched, or the first mismatch.
pub fn check_all() -> Result<usize, String> {
    Ok(tweet_cases()? + manifesto_cases()? + classification_cases()?)
}
