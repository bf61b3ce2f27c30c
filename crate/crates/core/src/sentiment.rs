use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Three-way sentiment label used by annotators and models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sentiment {
    Positive,
    Negative,
    Ambiguous,
}

impl Sentiment {
    /// Fixed class order for confusion matrices and per-class reports.
    pub const ALL: [Sentiment; 3] = [Sentiment::Positive, Sentiment::Negative, Sentiment::Ambiguous];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "Positive",
            Sentiment::Negative => "Negative",
            Sentiment::Ambiguous => "Ambiguous",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Sentiment::Positive => 0,
            Sentiment::Negative => 1,
            Sentiment::Ambiguous => 2,
        }
    }

    /// Numeric encoding Negative = -1, Ambiguous = 0, Positive = +1.
    pub fn code<T: Scalar>(self) -> T {
        match self {
            Sentiment::Positive => T::one(),
            Sentiment::Negative => -T::one(),
            Sentiment::Ambiguous => T::zero(),
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown sentiment label {0:?} (expected Positive, Negative or Ambiguous)")]
pub struct UnknownSentiment(pub String);

impl FromStr for Sentiment {
    type Err = UnknownSentiment;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "positive" => Ok(Sentiment::Positive),
            "negative" => Ok(Sentiment::Negative),
            "ambiguous" => Ok(Sentiment::Ambiguous),
            _ => Err(UnknownSentiment(s.to_string())),
        }
    }
}

/// Class with the largest count; any tie for the maximum resolves to Ambiguous.
pub fn dominant_class(counts: [usize; 3]) -> Sentiment {
    let max = counts.iter().copied().max().unwrap_or(0);
    let winners: Vec<Sentiment> = Sentiment::ALL
        .iter()
        .copied()
        .filter(|s| counts[s.index()] == max)
        .collect();
    if winners.len() == 1 {
        winners[0]
    } else {
        Sentiment::Ambiguous
    }
}

/// Majority vote over labels with the same tie rule as [`dominant_class`].
pub fn majority_label<'a, I>(labels: I) -> Option<Sentiment>
where
    I: IntoIterator<Item = &'a Sentiment>,
{
    let mut counts = [0usize; 3];
    let mut any = false;
    for s in labels {
        counts[s.index()] += 1;
        any = true;
    }
    any.then(|| dominant_class(counts))
}
