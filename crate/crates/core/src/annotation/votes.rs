use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnnotationError;
use crate::corpus::{AnnotationRecord, Corpus};
use crate::scalar::Scalar;
use crate::sentiment::{dominant_class, Sentiment};

/// Vote counts for one proverb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SentimentDistribution {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_amb: usize,
}

impl SentimentDistribution {
    pub fn new(n_pos: usize, n_neg: usize, n_amb: usize) -> Self {
        SentimentDistribution { n_pos, n_neg, n_amb }
    }

    pub fn n_total(&self) -> usize {
        self.n_pos + self.n_neg + self.n_amb
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.n_pos, self.n_neg, self.n_amb]
    }

    pub fn count(&self, s: Sentiment) -> usize {
        self.counts()[s.index()]
    }

    /// (positive, negative, ambiguous) fractions; `None` when there are no votes.
    pub fn fractions<T: Scalar>(&self) -> Option<(T, T, T)> {
        let n = self.n_total();
        if n == 0 {
            return None;
        }
        let n = T::from_usize_lossy(n);
        Some((
            T::from_usize_lossy(self.n_pos) / n,
            T::from_usize_lossy(self.n_neg) / n,
            T::from_usize_lossy(self.n_amb) / n,
        ))
    }

    /// Majority class, ties resolving to Ambiguous.
    pub fn dominant(&self) -> Sentiment {
        dominant_class(self.counts())
    }

    pub fn scaled(&self, factor: usize) -> Self {
        SentimentDistribution::new(self.n_pos * factor, self.n_neg * factor, self.n_amb * factor)
    }
}

/// Counts one proverb's sentiment votes, one per annotator.
pub fn vote_distribution<'a, I>(records: I) -> Result<SentimentDistribution, AnnotationError>
where
    I: IntoIterator<Item = &'a AnnotationRecord>,
{
    let mut seen = HashSet::new();
    let mut dist = SentimentDistribution::default();
    for r in records {
        if !seen.insert(r.annotator_id.as_str()) {
            return Err(AnnotationError::DuplicateAnnotator(r.annotator_id.clone()));
        }
        match r.sentiment {
            Some(Sentiment::Positive) => dist.n_pos += 1,
            Some(Sentiment::Negative) => dist.n_neg += 1,
            Some(Sentiment::Ambiguous) => dist.n_amb += 1,
            None => {
                return Err(AnnotationError::MissingSentiment {
                    proverb: r.proverb_id.clone(),
                    annotator: r.annotator_id.clone(),
                })
            }
        }
    }
    if dist.n_total() == 0 {
        return Err(AnnotationError::NoVotes);
    }
    Ok(dist)
}

/// (positive - negative) / number of annotators, in [-1, 1].
pub fn soft_score<T: Scalar>(dist: &SentimentDistribution) -> Result<T, AnnotationError> {
    let (pos, neg, _) = dist.fractions::<T>().ok_or(AnnotationError::NoVotes)?;
    Ok(pos - neg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrdinalLabel {
    StronglyPositive,
    MostlyPositive,
    StronglyAmbiguous,
    MostlyAmbiguous,
    MostlyNegative,
    StronglyNegative,
}

impl OrdinalLabel {
    pub const ALL: [OrdinalLabel; 6] = [
        OrdinalLabel::StronglyPositive,
        OrdinalLabel::MostlyPositive,
        OrdinalLabel::StronglyAmbiguous,
        OrdinalLabel::MostlyAmbiguous,
        OrdinalLabel::MostlyNegative,
        OrdinalLabel::StronglyNegative,
    ];

    pub fn direction(self) -> Sentiment {
        match self {
            OrdinalLabel::StronglyPositive | OrdinalLabel::MostlyPositive => Sentiment::Positive,
            OrdinalLabel::StronglyAmbiguous | OrdinalLabel::MostlyAmbiguous => Sentiment::Ambiguous,
            OrdinalLabel::MostlyNegative | OrdinalLabel::StronglyNegative => Sentiment::Negative,
        }
    }

    pub fn is_strong(self) -> bool {
        matches!(
            self,
            OrdinalLabel::StronglyPositive | OrdinalLabel::StronglyAmbiguous | OrdinalLabel::StronglyNegative
        )
    }

    fn from_parts(direction: Sentiment, strong: bool) -> Self {
        match (direction, strong) {
            (Sentiment::Positive, true) => OrdinalLabel::StronglyPositive,
            (Sentiment::Positive, false) => OrdinalLabel::MostlyPositive,
            (Sentiment::Ambiguous, true) => OrdinalLabel::StronglyAmbiguous,
            (Sentiment::Ambiguous, false) => OrdinalLabel::MostlyAmbiguous,
            (Sentiment::Negative, false) => OrdinalLabel::MostlyNegative,
            (Sentiment::Negative, true) => OrdinalLabel::StronglyNegative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OrdinalLabel::StronglyPositive => "StronglyPositive",
            OrdinalLabel::MostlyPositive => "MostlyPositive",
            OrdinalLabel::StronglyAmbiguous => "StronglyAmbiguous",
            OrdinalLabel::MostlyAmbiguous => "MostlyAmbiguous",
            OrdinalLabel::MostlyNegative => "MostlyNegative",
            OrdinalLabel::StronglyNegative => "StronglyNegative",
        }
    }
}

impl fmt::Display for OrdinalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// (strong, mostly) vote thresholds: 10 and 7 out of 13, scaled up with
/// ceiling division for other panel sizes.
pub fn ordinal_thresholds(n_total: usize) -> (usize, usize) {
    ((10 * n_total).div_ceil(13), (7 * n_total).div_ceil(13))
}

/// Six-level label. The dominant class is "strongly" when it reaches the
/// strong threshold and "mostly" otherwise, so every proverb gets a label.
pub fn ordinal_label(dist: &SentimentDistribution) -> Result<OrdinalLabel, AnnotationError> {
    let n = dist.n_total();
    if n == 0 {
        return Err(AnnotationError::NoVotes);
    }
    let (strong, _mostly) = ordinal_thresholds(n);
    let direction = dist.dominant();
    let top = dist.counts().into_iter().max().unwrap_or(0);
    Ok(OrdinalLabel::from_parts(direction, top >= strong))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalRow {
    pub proverb_id: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_amb: usize,
    pub soft_score: f64,
    pub ordinal_label: OrdinalLabel,
}

impl OrdinalRow {
    pub fn distribution(&self) -> SentimentDistribution {
        SentimentDistribution::new(self.n_pos, self.n_neg, self.n_amb)
    }
}

/// Ordinal rows for every proverb with sentiment votes, in corpus order.
/// Votes from `excluded` annotators are dropped first.
pub fn ordinalize(corpus: &Corpus, excluded: &[String]) -> Result<Vec<OrdinalRow>, AnnotationError> {
    let mut rows = Vec::new();
    for (proverb, records) in corpus.annotations_by_proverb() {
        let votes: Vec<&AnnotationRecord> = records
            .into_iter()
            .filter(|r| r.sentiment.is_some() && !excluded.contains(&r.annotator_id))
            .collect();
        if votes.is_empty() {
            continue;
        }
        let dist = vote_distribution(votes)?;
        rows.push(OrdinalRow {
            proverb_id: proverb.id.clone(),
            n_pos: dist.n_pos,
            n_neg: dist.n_neg,
            n_amb: dist.n_amb,
            soft_score: soft_score(&dist)?,
            ordinal_label: ordinal_label(&dist)?,
        });
    }
    Ok(rows)
}

pub fn write_ordinal_csv(path: &Path, rows: &[OrdinalRow]) -> Result<(), AnnotationError> {
    let io = |e: &dyn fmt::Display| AnnotationError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
    w.write_record(["proverb_id", "n_pos", "n_neg", "n_amb", "soft_score", "ordinal_label"])
        .map_err(|e| io(&e))?;
    for r in rows {
        w.write_record([
            r.proverb_id.clone(),
            r.n_pos.to_string(),
            r.n_neg.to_string(),
            r.n_amb.to_string(),
            r.soft_score.to_string(),
            r.ordinal_label.to_string(),
        ])
        .map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}
