//! Proverb corpus and annotation file ingestion.
//!
//! Proverb files and annotation files are separate. Both come as CSV with a
//! header row or as JSONL with one object per line. Topics are an open
//! vocabulary; emotions must come from the closed 47-label set.

mod io;
mod normalize;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::EmotionLabel;
use crate::sentiment::Sentiment;

pub use io::{load_annotations, load_corpus, load_proverbs, write_annotations, write_proverbs, FileFormat};
pub use normalize::{normalize_text, normalize_with, NormalizeOptions};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Field { line: usize, field: String, message: String },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("duplicate proverb id {0:?}")]
    DuplicateProverb(String),
    #[error("duplicate annotation for proverb {proverb_id:?} by annotator {annotator_id:?}")]
    DuplicateAnnotation { proverb_id: String, annotator_id: String },
    #[error("annotation references unknown proverb {0:?}")]
    UnknownProverb(String),
    #[error("proverb {id:?}: {message}")]
    InvalidProverb { id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variety {
    Standard,
    Localized,
}

impl FromStr for Variety {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "standard" => Ok(Variety::Standard),
            "localized" | "localised" => Ok(Variety::Localized),
            other => Err(format!("unknown variety {other:?} (expected standard or localized)")),
        }
    }
}

impl fmt::Display for Variety {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variety::Standard => "standard",
            Variety::Localized => "localized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proverb {
    pub id: String,
    pub text: String,
    pub variety: Variety,
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default)]
    pub place: Option<String>,
    #[serde(default)]
    pub lat: Option<f64>,
    #[serde(default)]
    pub lon: Option<f64>,
    #[serde(default)]
    pub source: Option<String>,
}

impl Proverb {
    pub fn new(id: impl Into<String>, text: impl Into<String>, variety: Variety) -> Self {
        Proverb {
            id: id.into(),
            text: text.into(),
            variety,
            topics: Vec::new(),
            place: None,
            lat: None,
            lon: None,
            source: None,
        }
    }

    pub fn coordinates(&self) -> Option<(f64, f64)> {
        self.lat.zip(self.lon)
    }

    /// Checks the per-proverb invariants and normalizes the text in place.
    pub fn validate(&mut self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        self.text = normalize_text(&self.text);
        if self.text.is_empty() {
            return Err("empty text".into());
        }
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => {
                if !(-90.0..=90.0).contains(&lat) {
                    return Err(format!("lat {lat} outside [-90, 90]"));
                }
                if !(-180.0..=180.0).contains(&lon) {
                    return Err(format!("lon {lon} outside [-180, 180]"));
                }
            }
            (None, None) => {}
            (Some(_), None) => return Err("lat without lon".into()),
            (None, Some(_)) => return Err("lon without lat".into()),
        }
        Ok(())
    }
}

/// One annotator's labels for one proverb.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub proverb_id: String,
    pub annotator_id: String,
    #[serde(default)]
    pub seen_before: Option<bool>,
    #[serde(default)]
    pub sentiment: Option<Sentiment>,
    #[serde(default)]
    pub emotions: BTreeSet<EmotionLabel>,
}

/// Proverbs plus any annotations over them. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub proverbs: Vec<Proverb>,
    pub annotations: Vec<AnnotationRecord>,
    pub annotator_ids: Vec<String>,
}

impl Corpus {
    /// Validates proverbs, id uniqueness, and that annotations resolve.
    /// Annotator ids are kept in order of first appearance.
    pub fn new(mut proverbs: Vec<Proverb>, annotations: Vec<AnnotationRecord>) -> Result<Self, CorpusError> {
        let mut ids = HashSet::new();
        for p in &mut proverbs {
            p.validate()
                .map_err(|message| CorpusError::InvalidProverb { id: p.id.clone(), message })?;
            if !ids.insert(p.id.clone()) {
                return Err(CorpusError::DuplicateProverb(p.id.clone()));
            }
        }
        let mut annotator_ids = Vec::new();
        let mut seen = HashSet::new();
        for a in &annotations {
            if !ids.contains(&a.proverb_id) {
                return Err(CorpusError::UnknownProverb(a.proverb_id.clone()));
            }
            if seen.insert(a.annotator_id.clone()) {
                annotator_ids.push(a.annotator_id.clone());
            }
        }
        Ok(Corpus { proverbs, annotations, annotator_ids })
    }

    pub fn proverb(&self, id: &str) -> Option<&Proverb> {
        self.proverbs.iter().find(|p| p.id == id)
    }

    pub fn of_variety(&self, variety: Variety) -> impl Iterator<Item = &Proverb> {
        self.proverbs.iter().filter(move |p| p.variety == variety)
    }

    /// Annotations grouped by proverb id, in corpus order of proverbs.
    pub fn annotations_by_proverb(&self) -> Vec<(&Proverb, Vec<&AnnotationRecord>)> {
        let mut grouped: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for a in &self.annotations {
            grouped.entry(a.proverb_id.as_str()).or_default().push(a);
        }
        self.proverbs
            .iter()
            .filter_map(|p| grouped.remove(p.id.as_str()).map(|r| (p, r)))
            .collect()
    }
}

/// Topic counts, most frequent first, ties in lexicographic order.
pub fn topic_frequencies(corpus: &Corpus, top_n: usize) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in corpus.proverbs.iter().flat_map(|p| p.topics.iter()) {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(top_n);
    out
}
