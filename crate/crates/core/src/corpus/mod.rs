//! Responses, sentences and text units, plus segmentation and dataset ingestion.
//!
//! Every [`SampleSet`] holds one prompt and its sampled responses. Index 0 is
//! the anchor, whose uncertainty is scored; the rest are references.

mod dataset;
mod segment;

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use dataset::{load_dataset, parse_dataset, Dataset, Rejection};
pub use segment::{segment_sentences, segment_spans, ABBREVIATIONS};

use crate::error::Error;

/// NFC-normalize text so caches and comparisons key on canonical strings.
pub fn canonicalize(text: &str) -> String {
    text.nfc().collect()
}

/// A prompt with `n >= 2` sampled responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    prompt_id: String,
    prompt: String,
    responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factuality: Option<f64>,
}

impl SampleSet {
    pub fn new(
        prompt_id: impl Into<String>,
        prompt: impl Into<String>,
        responses: Vec<String>,
        factuality: Option<f64>,
    ) -> Result<Self, Error> {
        let prompt_id = prompt_id.into();
        if responses.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "sample set `{prompt_id}` has {} response(s); need an anchor and at least one reference",
                responses.len()
            )));
        }
        if let Some(i) = responses.iter().position(|r| r.trim().is_empty()) {
            return Err(Error::InvalidInput(format!(
                "sample set `{prompt_id}`: response {i} is empty"
            )));
        }
        if let Some(f) = factuality {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidInput(format!(
                    "sample set `{prompt_id}`: factuality {f} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            prompt_id,
            prompt: canonicalize(&prompt.into()),
            responses: responses.iter().map(|r| canonicalize(r)).collect(),
            factuality,
        })
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn responses(&self) -> &[String] {
        &self.responses
    }

    pub fn anchor(&self) -> &str {
        &self.responses[0]
    }

    pub fn references(&self) -> &[String] {
        &self.responses[1..]
    }

    /// Number of sampled responses, anchor included.
    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn factuality(&self) -> Option<f64> {
        self.factuality
    }
}

/// Position of a sentence inside a sample set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceRef {
    pub response_index: usize,
    pub sentence_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub response_index: usize,
    pub sentence_index: usize,
    pub text: String,
}

impl Sentence {
    pub fn origin(&self) -> SentenceRef {
        SentenceRef {
            response_index: self.response_index,
            sentence_index: self.sentence_index,
        }
    }
}

/// Segment response `response_index` of a sample set into numbered sentences.
pub fn sentences_of(response_index: usize, text: &str) -> Vec<Sentence> {
    segment_sentences(text)
        .into_iter()
        .enumerate()
        .map(|(sentence_index, text)| Sentence {
            response_index,
            sentence_index,
            text,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitRole {
    Sentence,
    AtomicFact,
}

/// Opaque unit identifier: `r{response}-s{sentence}` or `r{response}-s{sentence}-f{fact}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(String);

impl UnitId {
    pub fn sentence(origin: SentenceRef) -> Self {
        Self(format!("r{}-s{}", origin.response_index, origin.sentence_index))
    }

    pub fn fact(origin: SentenceRef, fact_index: usize) -> Self {
        Self(format!(
            "r{}-s{}-f{}",
            origin.response_index, origin.sentence_index, fact_index
        ))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A scored segment: a whole sentence or an atomic fact split from one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextUnit {
    pub unit_id: UnitId,
    pub origin: SentenceRef,
    pub role: UnitRole,
    pub text: String,
}

impl TextUnit {
    pub fn from_sentence(sentence: &Sentence) -> Self {
        Self {
            unit_id: UnitId::sentence(sentence.origin()),
            origin: sentence.origin(),
            role: UnitRole::Sentence,
            text: sentence.text.clone(),
        }
    }

    pub fn fact(origin: SentenceRef, fact_index: usize, text: impl Into<String>) -> Self {
        Self {
            unit_id: UnitId::fact(origin, fact_index),
            origin,
            role: UnitRole::AtomicFact,
            text: text.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_set_requires_two_responses() {
        assert!(SampleSet::new("p", "", vec!["only".into()], None).is_err());
        let s = SampleSet::new("p", "", vec!["a".into(), "b".into()], None).unwrap();
        assert_eq!(s.anchor(), "a");
        assert_eq!(s.references(), &["b".to_string()]);
    }

    #[test]
    fn sample_set_rejects_blank_response() {
        assert!(SampleSet::new("p", "", vec!["a".into(), "  \n".into()], None).is_err());
    }

    #[test]
    fn sample_set_normalizes_to_nfc() {
        let decomposed = "Cafe\u{301} opened.".to_string();
        let s = SampleSet::new("p", "", vec![decomposed, "x".into()], None).unwrap();
        assert_eq!(s.anchor(), "Caf\u{e9} opened.");
    }

    #[test]
    fn unit_ids_are_positional() {
        let origin = SentenceRef {
            response_index: 0,
            sentence_index: 3,
        };
        assert_eq!(UnitId::sentence(origin).as_str(), "r0-s3");
        assert_eq!(UnitId::fact(origin, 1).as_str(), "r0-s3-f1");
    }
}
