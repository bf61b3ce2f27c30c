//! Agreement statistics, emotion-to-sentiment reduction and vote aggregation.

mod agreement;
mod correlation;
mod emotion;
mod votes;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotationRecord;

pub use agreement::{
    agreement_report, cohen_kappa, krippendorff_alpha, pairwise_kappa, AgreementOptions, AgreementReport,
    AlphaLevel,
};
pub use correlation::{correlation_matrix, flag_outlier_annotators, CorrelationMatrix, CorrelationMethod, NumericLabel};
pub use emotion::{
    map_emotions_to_sentiment, self_agreement, EmotionGroup, EmotionLabel, EmotionSentimentMap, SelfAgreement,
    UnknownEmotion,
};
pub use votes::{
    ordinal_label, ordinal_thresholds, ordinalize, soft_score, vote_distribution, write_ordinal_csv,
    OrdinalLabel, OrdinalRow, SentimentDistribution,
};

pub const DEFAULT_MIN_MEAN_CORR: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("fewer than 2 overlapping items ({0})")]
    TooFewOverlapping(usize),
    #[error("agreement needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("no item has two or more labels; alpha is undefined")]
    NoPairableValues,
    #[error("matrix dimensions inconsistent: {0}")]
    Shape(String),
    #[error("emotion set is empty")]
    EmptyEmotionSet,
    #[error("emotion map is missing {0:?}")]
    IncompleteEmotionMap(String),
    #[error("no (proverb, annotator) pair carries both a sentiment and emotions")]
    NoOverlap,
    #[error("no votes")]
    NoVotes,
    #[error("annotator {0:?} voted more than once on the same proverb")]
    DuplicateAnnotator(String),
    #[error("annotator {annotator:?} has no sentiment for proverb {proverb:?}")]
    MissingSentiment { proverb: String, annotator: String },
    #[error("write failed: {0}")]
    Io(String),
}

/// Items x annotators grid of optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix<L> {
    pub items: Vec<String>,
    pub annotators: Vec<String>,
    /// `cells[item][annotator]`
    pub cells: Vec<Vec<Option<L>>>,
}

impl<L: Clone> AnnotationMatrix<L> {
    pub fn new(items: Vec<String>, annotators: Vec<String>, cells: Vec<Vec<Option<L>>>) -> Result<Self, AnnotationError> {
        if cells.len() != items.len() {
            return Err(AnnotationError::Shape(format!("{} rows for {} items", cells.len(), items.len())));
        }
        if let Some(row) = cells.iter().find(|r| r.len() != annotators.len()) {
            return Err(AnnotationError::Shape(format!(
                "row of length {} for {} annotators",
                row.len(),
                annotators.len()
            )));
        }
        Ok(AnnotationMatrix { items, annotators, cells })
    }

    /// Builds a matrix from records, keeping first-appearance order of items and annotators.
    pub fn from_records<F>(records: &[AnnotationRecord], label: F) -> Self
    where
        F: Fn(&AnnotationRecord) -> Option<L>,
    {
        let mut items: Vec<String> = Vec::new();
        let mut annotators: Vec<String> = Vec::new();
        let mut item_idx: HashMap<&str, usize> = HashMap::new();
        let mut ann_idx: HashMap<&str, usize> = HashMap::new();
        for r in records {
            if label(r).is_none() {
                continue;
            }
            item_idx.entry(&r.proverb_id).or_insert_with(|| {
                items.push(r.proverb_id.clone());
                items.len() - 1
            });
            ann_idx.entry(&r.annotator_id).or_insert_with(|| {
                annotators.push(r.annotator_id.clone());
                annotators.len() - 1
            });
        }
        let mut cells = vec![vec![None; annotators.len()]; items.len()];
        for r in records {
            if let Some(l) = label(r) {
                cells[item_idx[r.proverb_id.as_str()]][ann_idx[r.annotator_id.as_str()]] = Some(l);
            }
        }
        AnnotationMatrix { items, annotators, cells }
    }

    pub fn column(&self, annotator: usize) -> Vec<Option<L>> {
        self.cells.iter().map(|row| row[annotator].clone()).collect()
    }

    /// Copy without the named annotators.
    pub fn without_annotators(&self, drop: &[String]) -> Self {
        let keep: Vec<usize> = (0..self.annotators.len())
            .filter(|&j| !drop.contains(&self.annotators[j]))
            .collect();
        AnnotationMatrix {
            items: self.items.clone(),
            annotators: keep.iter().map(|&j| self.annotators[j].clone()).collect(),
            cells: self
                .cells
                .iter()
                .map(|row| keep.iter().map(|&j| row[j].clone()).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentiment::Sentiment;
    use std::collections::BTreeSet;

    #[test]
    fn matrix_from_records_keeps_order() {
        let rec = |p: &str, a: &str, s: Option<Sentiment>| AnnotationRecord {
            proverb_id: p.into(),
            annotator_id: a.into(),
            seen_before: None,
            sentiment: s,
            emotions: BTreeSet::new(),
        };
        let m = AnnotationMatrix::from_records(
            &[
                rec("p2", "b", Some(Sentiment::Positive)),
                rec("p1", "a", Some(Sentiment::Negative)),
                rec("p1", "b", None),
            ],
            |r| r.sentiment,
        );
        assert_eq!(m.items, vec!["p2", "p1"]);
        assert_eq!(m.annotators, vec!["b", "a"]);
        assert_eq!(m.cells, vec![vec![Some(Sentiment::Positive), None], vec![None, Some(Sentiment::Negative)]]);
        let d = m.without_annotators(&["b".into()]);
        assert_eq!(d.annotators, vec!["a"]);
        assert_eq!(d.cells, vec![vec![None], vec![Some(Sentiment::Negative)]]);
    }

    #[test]
    fn shape_is_checked() {
        assert!(AnnotationMatrix::<u8>::new(vec!["i".into()], vec!["a".into()], vec![vec![None, None]]).is_err());
    }
}
