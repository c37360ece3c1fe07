//! Measurement instruments: survey scales and annotation codebooks that drive
//! theory-driven generation.
//!
//! An instrument file is JSON with the keys `construct`, `instrument_type`,
//! `text_genre`, `classes` and `dimensions`. Every dimension targets exactly one
//! class; classes that no dimension targets receive no synthetic data.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::util::{is_blank, SeededRng};

/// Sexism survey scale shipped with the crate.
pub const BUNDLED_SEXISM: &str = include_str!("../data/instruments/sexism.json");
/// Manifesto topic codebook shipped with the crate.
pub const BUNDLED_TOPICS: &str = include_str!("../data/instruments/topics.json");

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("cannot read instrument file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("instrument schema error: {0}")]
    Schema(String),
    #[error("instrument invariant violated: {0}")]
    Invariant(String),
    #[error("no dimension targets class {0:?}")]
    NoItemsForClass(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentType {
    SurveyScale,
    Codebook,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentItem {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub target_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub items: Vec<InstrumentItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instrument {
    pub construct: String,
    pub instrument_type: InstrumentType,
    pub text_genre: String,
    pub classes: Vec<String>,
    pub dimensions: Vec<Dimension>,
}

fn nfc(s: &mut String) {
    *s = s.nfc().collect();
}

impl Instrument {
    /// Reads and validates an instrument file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstrumentError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| InstrumentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }

    /// Parses and validates an instrument from JSON text.
    pub fn from_json(raw: &str) -> Result<Self, InstrumentError> {
        let mut instrument: Instrument =
            serde_json::from_str(raw).map_err(|e| InstrumentError::Schema(e.to_string()))?;
        instrument.normalize();
        instrument.validate()?;
        Ok(instrument)
    }

    pub fn bundled_sexism() -> Self {
        Self::from_json(BUNDLED_SEXISM).expect("bundled sexism instrument is valid")
    }

    pub fn bundled_topics() -> Self {
        Self::from_json(BUNDLED_TOPICS).expect("bundled topics instrument is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instrument serializes")
    }

    fn normalize(&mut self) {
        nfc(&mut self.construct);
        nfc(&mut self.text_genre);
        self.classes.iter_mut().for_each(nfc);
        for dim in &mut self.dimensions {
            nfc(&mut dim.name);
            nfc(&mut dim.target_class);
            if let Some(d) = dim.description.as_mut() {
                nfc(d);
            }
            for item in &mut dim.items {
                nfc(&mut item.text);
                if let Some(d) = item.description.as_mut() {
                    nfc(d);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), InstrumentError> {
        let fail = |msg: String| Err(InstrumentError::Invariant(msg));
        if self.classes.is_empty() {
            return fail("classes must be non-empty".into());
        }
        let mut seen = HashSet::new();
        for class in &self.classes {
            if is_blank(class) {
                return fail("classes must not contain blank labels".into());
            }
            if !seen.insert(class.as_str()) {
                return fail(format!("classes must be unique, {class:?} repeats"));
            }
        }
        if self.dimensions.is_empty() {
            return fail("dimensions must be non-empty".into());
        }
        let mut names = HashSet::new();
        for dim in &self.dimensions {
            if !names.insert(dim.name.as_str()) {
                return fail(format!("dimension names must be unique, {:?} repeats", dim.name));
            }
            if !self.classes.contains(&dim.target_class) {
                return fail(format!(
                    "dimension {:?} targets class {:?} which is not listed in classes",
                    dim.name, dim.target_class
                ));
            }
            if dim.items.is_empty() {
                return fail(format!("dimension {:?} must have at least one item", dim.name));
            }
            for item in &dim.items {
                if is_blank(&item.text) {
                    return fail(format!("dimension {:?} has an item with blank text", dim.name));
                }
                if self.instrument_type == InstrumentType::Codebook
                    && item.description.as_deref().map_or(true, is_blank)
                {
                    return fail(format!(
                        "codebook item {:?} in dimension {:?} needs a description",
                        item.text, dim.name
                    ));
                }
            }
        }
        Ok(())
    }

    /// Classes targeted by at least one dimension, in `classes` order.
    pub fn classes_with_items(&self) -> Vec<String> {
        self.classes
            .iter()
            .filter(|c| self.dimensions.iter().any(|d| &d.target_class == *c))
            .cloned()
            .collect()
    }

    /// All (dimension, item) pairs whose dimension targets `class`.
    pub fn items_for<'a>(&'a self, class: &'a str) -> impl Iterator<Item = (&'a Dimension, &'a InstrumentItem)> + 'a {
        self.dimensions
            .iter()
            .filter(move |d| d.target_class == class)
            .flat_map(|d| d.items.iter().map(move |i| (d, i)))
    }

    /// Draws one item uniformly from all items targeting `target_class`.
    pub fn sample_item(
        &self,
        target_class: &str,
        rng: &mut SeededRng,
    ) -> Result<(&Dimension, &InstrumentItem), InstrumentError> {
        let total = self.items_for(target_class).count();
        if total == 0 {
            return Err(InstrumentError::NoItemsForClass(target_class.to_string()));
        }
        let pick = rng.gen_range(0..total);
        let mut remaining = pick;
        for dim in self.dimensions.iter().filter(|d| d.target_class == target_class) {
            if remaining < dim.items.len() {
                return Ok((dim, &dim.items[remaining]));
            }
            remaining -= dim.items.len();
        }
        unreachable!("index drawn below item count")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    fn one_item() -> Instrument {
        Instrument::from_json(
            r#"{"construct":"c","instrument_type":"survey_scale","text_genre":"tweet",
                "classes":["a","b"],
                "dimensions":[{"name":"d","target_class":"a","items":[{"text":"only item"}]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn bundled_sexism_has_four_dimensions_for_sexist() {
        let inst = Instrument::bundled_sexism();
        assert_eq!(inst.classes, vec!["sexist", "non-sexist"]);
        assert_eq!(inst.dimensions.len(), 4);
        assert!(inst.dimensions.iter().all(|d| d.target_class == "sexist"));
        assert_eq!(inst.dimensions[0].name, "Behavioral Expectations");
        assert_eq!(inst.dimensions[3].name, "Denying Inequality and Rejecting Feminism");
        assert_eq!(inst.classes_with_items(), vec!["sexist"]);
    }

    #[test]
    fn bundled_topics_has_seven_classes_in_table_order() {
        let inst = Instrument::bundled_topics();
        assert_eq!(inst.dimensions.len(), 7);
        assert_eq!(inst.classes.first().map(String::as_str), Some("External Relations"));
        assert_eq!(inst.classes.last().map(String::as_str), Some("Social Groups"));
        assert_eq!(inst.classes_with_items().len(), 7);
    }

    #[test]
    fn empty_classes_rejected() {
        let err = Instrument::from_json(
            r#"{"construct":"c","instrument_type":"survey_scale","text_genre":"t","classes":[],
                "dimensions":[{"name":"d","target_class":"a","items":[{"text":"x"}]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("classes must be non-empty"), "{err}");
    }

    #[test]
    fn missing_field_is_a_schema_error_naming_it() {
        let err = Instrument::from_json(r#"{"construct":"c","instrument_type":"codebook","classes":["a"],"dimensions":[]}"#)
            .unwrap_err();
        assert!(matches!(err, InstrumentError::Schema(_)));
        assert!(err.to_string().contains("text_genre"), "{err}");
    }

    #[test]
    fn codebook_items_need_descriptions() {
        let err = Instrument::from_json(
            r#"{"construct":"c","instrument_type":"codebook","text_genre":"t","classes":["a"],
                "dimensions":[{"name":"d","target_class":"a","items":[{"text":"x"}]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("needs a description"));
    }

    #[test]
    fn dimension_must_target_listed_class() {
        let err = Instrument::from_json(
            r#"{"construct":"c","instrument_type":"survey_scale","text_genre":"t","classes":["a"],
                "dimensions":[{"name":"d","target_class":"zzz","items":[{"text":"x"}]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not listed in classes"));
    }

    #[test]
    fn text_is_nfc_normalized() {
        // "e" followed by a combining acute accent
        let inst = Instrument::from_json(
            "{\"construct\":\"c\",\"instrument_type\":\"survey_scale\",\"text_genre\":\"t\",\"classes\":[\"a\"],\
             \"dimensions\":[{\"name\":\"d\",\"target_class\":\"a\",\"items\":[{\"text\":\"caf\\u0065\\u0301\"}]}]}",
        )
        .unwrap();
        assert_eq!(inst.dimensions[0].items[0].text, "caf\u{e9}");
    }

    #[test]
    fn single_item_always_sampled() {
        let inst = one_item();
        for seed in 0..20 {
            let (d, i) = inst.sample_item("a", &mut rng_from_seed(seed)).unwrap();
            assert_eq!((d.name.as_str(), i.text.as_str()), ("d", "only item"));
        }
        assert!(matches!(
            inst.sample_item("b", &mut rng_from_seed(1)),
            Err(InstrumentError::NoItemsForClass(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let inst = Instrument::bundled_topics();
        let a = inst.sample_item("Economy", &mut rng_from_seed(42)).unwrap().1.clone();
        let b = inst.sample_item("Economy", &mut rng_from_seed(42)).unwrap().1.clone();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_uniform_over_items() {
        let inst = Instrument::from_json(
            r#"{"construct":"c","instrument_type":"survey_scale","text_genre":"t","classes":["a"],
                "dimensions":[{"name":"d1","target_class":"a","items":[{"text":"i0"},{"text":"i1"},{"text":"i2"}]},
                              {"name":"d2","target_class":"a","items":[{"text":"i3"}]}]}"#,
        )
        .unwrap();
        let mut rng = rng_from_seed(2024);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (_, item) = inst.sample_item("a", &mut rng).unwrap();
            counts[item.text[1..].parse::<usize>().unwrap()] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 3 degrees of freedom; 27.88 is the 1 - 1e-6 quantile
        assert!(chi2 < 27.88, "chi2 {chi2} counts {counts:?}");
        for c in counts {
            let pct = 100.0 * c as f64 / n as f64;
            assert!((pct - 25.0).abs() <= 2.0, "{pct}");
        }
    }

    #[test]
    fn serialize_roundtrip_bundled() {
        for inst in [Instrument::bundled_sexism(), Instrument::bundled_topics()] {
            assert_eq!(Instrument::from_json(&inst.to_json()).unwrap(), inst);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_instrument() -> impl Strategy<Value = Instrument> {
            let classes = prop::collection::btree_set("[a-z]{1,6}", 1..4);
            classes.prop_flat_map(|classes| {
                let classes: Vec<String> = classes.into_iter().collect();
                let k = classes.len();
                let dims = prop::collection::vec(
                    (0..k, prop::collection::vec(("[A-Za-z ]{0,12}[a-z]", prop::option::of("[a-z ]{1,10}")), 1..5)),
                    1..5,
                );
                (Just(classes), dims)
            })
            .prop_map(|(classes, dims)| Instrument {
                construct: "construct".into(),
                instrument_type: InstrumentType::SurveyScale,
                text_genre: "tweet".into(),
                dimensions: dims
                    .into_iter()
                    .enumerate()
                    .map(|(i, (c, items))| Dimension {
                        name: format!("dim{i}"),
                        target_class: classes[c].clone(),
                        description: None,
                        items: items
                            .into_iter()
                            .map(|(text, description)| InstrumentItem { text, description })
                            .collect(),
                    })
                    .collect(),
                classes,
            })
        }

        proptest! {
            #[test]
            fn roundtrip_is_structurally_identical(inst in arb_instrument()) {
                let back = Instrument::from_json(&inst.to_json()).unwrap();
                prop_assert_eq!(back, inst);
            }

            #[test]
            fn sampling_covers_every_item(inst in arb_instrument(), seed in any::<u64>()) {
                let class = inst.dimensions[0].target_class.clone();
                let total = inst.items_for(&class).count();
                let mut seen = vec![false; total];
                let mut rng = crate::util::rng_from_seed(seed);
                let all: Vec<&InstrumentItem> = inst.items_for(&class).map(|(_, i)| i).collect();
                for _ in 0..(50 * total) {
                    let (_, i) = inst.sample_item(&class, &mut rng).unwrap();
                    let idx = all.iter().position(|it| std::ptr::eq(*it, i)).unwrap();
                    seen[idx] = true;
                }
                prop_assert!(seen.iter().all(|s| *s));
            }
        }
    }
}
