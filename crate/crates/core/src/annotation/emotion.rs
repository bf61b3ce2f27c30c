//! Closed emotion vocabulary and its reduction to sentiment ("EmoSent").

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::AnnotationRecord;
use crate::scalar::Scalar;
use crate::sentiment::{dominant_class, Sentiment};

use super::AnnotationError;

/// Sentiment group an emotion belongs to in the emotion-to-sentiment table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmotionGroup {
    Positive,
    Neutral,
    Negative,
}

impl EmotionGroup {
    /// Neutral is the emotion task's name for the sentiment task's Ambiguous.
    pub fn as_sentiment(self) -> Sentiment {
        match self {
            EmotionGroup::Positive => Sentiment::Positive,
            EmotionGroup::Neutral => Sentiment::Ambiguous,
            EmotionGroup::Negative => Sentiment::Negative,
        }
    }
}

macro_rules! emotions {
    ($($variant:ident => $name:literal, $group:ident;)*) => {
        /// One of the 47 emotion labels offered to annotators.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum EmotionLabel {
            $($variant,)*
        }

        impl EmotionLabel {
            pub const ALL: &'static [EmotionLabel] = &[$(EmotionLabel::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(EmotionLabel::$variant => $name,)*
                }
            }

            fn default_group(self) -> EmotionGroup {
                match self {
                    $(EmotionLabel::$variant => EmotionGroup::$group,)*
                }
            }
        }
    };
}

// Listed in the order annotators saw them.
emotions! {
    Absence => "Absence", Neutral;
    Irony => "Irony", Negative;
    Contempt => "Contempt", Negative;
    Complaint => "Complaint", Negative;
    Worry => "Worry", Negative;
    Resentment => "Resentment", Negative;
    AlertnessVigilance => "Alertness / Vigilance", Neutral;
    Satisfaction => "Satisfaction", Positive;
    Despair => "Despair", Negative;
    Gratitude => "Gratitude", Positive;
    Joy => "Joy", Positive;
    Nostalgia => "Nostalgia", Neutral;
    Anger => "Anger", Negative;
    Desire => "Desire", Neutral;
    Sadness => "Sadness", Negative;
    Pain => "Pain", Negative;
    Hatred => "Hatred", Negative;
    FearTerror => "Fear / Terror", Negative;
    Love => "Love", Positive;
    Relief => "Relief", Positive;
    SecrecySecretiveness => "Secrecy / Secretiveness", Negative;
    Pleasure => "Pleasure", Positive;
    Scorn => "Scorn", Negative;
    Suspicion => "Suspicion", Negative;
    ConfusionNervousness => "Confusion / Nervousness", Negative;
    Foolishness => "Foolishness", Negative;
    Trust => "Trust", Positive;
    Optimism => "Optimism", Positive;
    Annoyance => "Annoyance", Negative;
    SurpriseShock => "Surprise / Shock", Neutral;
    Admiration => "Admiration", Positive;
    Enthusiasm => "Enthusiasm", Positive;
    Disappointment => "Disappointment", Negative;
    Inadequacy => "Inadequacy", Negative;
    AnticipationImpatience => "Anticipation / Impatience", Neutral;
    Tension => "Tension", Negative;
    InspirationMotivation => "Inspiration / Motivation", Positive;
    Determination => "Determination", Positive;
    Jealousy => "Jealousy", Negative;
    Bitterness => "Bitterness", Negative;
    Embarrassment => "Embarrassment", Negative;
    Shame => "Shame", Negative;
    Calmness => "Calmness", Positive;
    Hope => "Hope", Positive;
    Malice => "Malice", Negative;
    Acceptance => "Acceptance", Neutral;
    Willingness => "Willingness", Positive;
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown emotion label {0:?}")]
pub struct UnknownEmotion(pub String);

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl FromStr for EmotionLabel {
    type Err = UnknownEmotion;

    /// Case-insensitive and tolerant of spacing around the slash.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = squash(&s.replace('/', " / "));
        EmotionLabel::ALL
            .iter()
            .copied()
            .find(|e| squash(e.name()) == wanted)
            .ok_or_else(|| UnknownEmotion(s.to_string()))
    }
}

impl Serialize for EmotionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EmotionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Total map from the emotion vocabulary to sentiment groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionSentimentMap {
    groups: HashMap<EmotionLabel, EmotionGroup>,
}

impl Default for EmotionSentimentMap {
    /// The published table: 15 positive, 7 neutral, 25 negative emotions.
    fn default() -> Self {
        let groups = EmotionLabel::ALL.iter().map(|&e| (e, e.default_group())).collect();
        EmotionSentimentMap { groups }
    }
}

impl EmotionSentimentMap {
    /// Builds a custom map; it must cover every emotion exactly once.
    pub fn new(groups: HashMap<EmotionLabel, EmotionGroup>) -> Result<Self, AnnotationError> {
        if let Some(missing) = EmotionLabel::ALL.iter().find(|e| !groups.contains_key(e)) {
            return Err(AnnotationError::IncompleteEmotionMap(missing.name().to_string()));
        }
        Ok(EmotionSentimentMap { groups })
    }

    pub fn group(&self, emotion: EmotionLabel) -> EmotionGroup {
        self.groups[&emotion]
    }

    pub fn members(&self, group: EmotionGroup) -> Vec<EmotionLabel> {
        let mut out: Vec<_> = EmotionLabel::ALL
            .iter()
            .copied()
            .filter(|e| self.groups[e] == group)
            .collect();
        out.sort();
        out
    }
}

/// Majority sentiment of a set of emotions; any tie for the maximum is Ambiguous.
pub fn map_emotions_to_sentiment(
    emotions: &BTreeSet<EmotionLabel>,
    map: &EmotionSentimentMap,
) -> Result<Sentiment, AnnotationError> {
    if emotions.is_empty() {
        return Err(AnnotationError::EmptyEmotionSet);
    }
    let mut counts = [0usize; 3];
    for &e in emotions {
        counts[map.group(e).as_sentiment().index()] += 1;
    }
    Ok(dominant_class(counts))
}

/// Per-annotator consistency between direct sentiment and EmoSent labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAgreement<T> {
    /// (annotator, percentage in [0, 100], number of overlapping proverbs)
    pub per_annotator: Vec<(String, T, usize)>,
    /// Unweighted mean of the per-annotator percentages.
    pub mean: T,
}

pub fn self_agreement<T: Scalar>(
    sentiment_anns: &[AnnotationRecord],
    emotion_anns: &[AnnotationRecord],
    map: &EmotionSentimentMap,
) -> Result<SelfAgreement<T>, AnnotationError> {
    let direct: HashMap<(&str, &str), Sentiment> = sentiment_anns
        .iter()
        .filter_map(|r| r.sentiment.map(|s| ((r.proverb_id.as_str(), r.annotator_id.as_str()), s)))
        .collect();

    // annotator -> (consistent, total)
    let mut tallies: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in emotion_anns {
        if r.emotions.is_empty() {
            continue;
        }
        let Some(&label) = direct.get(&(r.proverb_id.as_str(), r.annotator_id.as_str())) else {
            continue;
        };
        let mapped = map_emotions_to_sentiment(&r.emotions, map)?;
        let t = tallies.entry(r.annotator_id.as_str()).or_default();
        t.1 += 1;
        if mapped == label {
            t.0 += 1;
        }
    }
    if tallies.is_empty() {
        return Err(AnnotationError::NoOverlap);
    }

    let hundred = T::from_f64_lossy(100.0);
    let per_annotator: Vec<(String, T, usize)> = tallies
        .into_iter()
        .map(|(id, (ok, n))| {
            let pct = hundred * T::from_usize_lossy(ok) / T::from_usize_lossy(n);
            (id.to_string(), pct, n)
        })
        .collect();
    let mean = per_annotator.iter().fold(T::zero(), |acc, p| acc + p.1)
        / T::from_usize_lossy(per_annotator.len());
    Ok(SelfAgreement { per_annotator, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotationRecord;

    fn set(items: &[EmotionLabel]) -> BTreeSet<EmotionLabel> {
        items.iter().copied().collect()
    }

    #[test]
    fn vocabulary_partition_sizes() {
        let map = EmotionSentimentMap::default();
        assert_eq!(EmotionLabel::ALL.len(), 47);
        assert_eq!(map.members(EmotionGroup::Positive).len(), 15);
        assert_eq!(map.members(EmotionGroup::Neutral).len(), 7);
        assert_eq!(map.members(EmotionGroup::Negative).len(), 25);
    }

    #[test]
    fn parses_names_with_slash() {
        assert_eq!("fear/terror".parse::<EmotionLabel>().unwrap(), EmotionLabel::FearTerror);
        assert_eq!("Fear / Terror".parse::<EmotionLabel>().unwrap(), EmotionLabel::FearTerror);
        assert!("Happy".parse::<EmotionLabel>().is_err());
        for e in EmotionLabel::ALL {
            assert_eq!(e.name().parse::<EmotionLabel>().unwrap(), *e);
        }
    }

    #[test]
    fn emosent_examples() {
        let map = EmotionSentimentMap::default();
        use EmotionLabel::*;
        assert_eq!(map_emotions_to_sentiment(&set(&[Joy]), &map).unwrap(), Sentiment::Positive);
        assert_eq!(map_emotions_to_sentiment(&set(&[Irony, Worry]), &map).unwrap(), Sentiment::Negative);
        assert_eq!(map_emotions_to_sentiment(&set(&[Joy, Sadness]), &map).unwrap(), Sentiment::Ambiguous);
        assert_eq!(map_emotions_to_sentiment(&set(&[Acceptance]), &map).unwrap(), Sentiment::Ambiguous);
        assert!(map_emotions_to_sentiment(&set(&[]), &map).is_err());
    }

    #[test]
    fn custom_map_must_be_total() {
        let mut groups: HashMap<_, _> = EmotionLabel::ALL.iter().map(|&e| (e, EmotionGroup::Neutral)).collect();
        assert!(EmotionSentimentMap::new(groups.clone()).is_ok());
        groups.remove(&EmotionLabel::Joy);
        assert!(EmotionSentimentMap::new(groups).is_err());
    }

    fn sent(p: &str, a: &str, s: Sentiment) -> AnnotationRecord {
        AnnotationRecord { proverb_id: p.into(), annotator_id: a.into(), seen_before: None, sentiment: Some(s), emotions: BTreeSet::new() }
    }

    fn emo(p: &str, a: &str, e: &[EmotionLabel]) -> AnnotationRecord {
        AnnotationRecord { proverb_id: p.into(), annotator_id: a.into(), seen_before: None, sentiment: None, emotions: set(e) }
    }

    #[test]
    fn self_agreement_fractions() {
        use EmotionLabel::*;
        let map = EmotionSentimentMap::default();
        let s = vec![
            sent("p1", "a", Sentiment::Positive),
            sent("p2", "a", Sentiment::Negative),
            sent("p3", "a", Sentiment::Negative),
            sent("p1", "b", Sentiment::Positive),
            sent("p2", "b", Sentiment::Positive),
        ];
        let e = vec![
            emo("p1", "a", &[Joy]),
            emo("p2", "a", &[Anger]),
            emo("p3", "a", &[Hope]),
            emo("p1", "b", &[Love]),
            emo("p2", "b", &[Pain]),
            emo("p9", "b", &[Pain]),
        ];
        let r: SelfAgreement<f64> = self_agreement(&s, &e, &map).unwrap();
        assert_eq!(r.per_annotator[0].0, "a");
        assert!((r.per_annotator[0].1 - 200.0 / 3.0).abs() < 1e-9);
        assert!((r.per_annotator[1].1 - 50.0).abs() < 1e-12);
        assert!((r.mean - (200.0 / 3.0 + 50.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn self_agreement_unweighted_mean_and_errors() {
        use EmotionLabel::*;
        let map = EmotionSentimentMap::default();
        let s = vec![sent("p1", "a", Sentiment::Positive), sent("p2", "a", Sentiment::Positive), sent("p1", "b", Sentiment::Negative)];
        let e = vec![emo("p1", "a", &[Joy]), emo("p2", "a", &[Anger]), emo("p1", "b", &[Anger])];
        let r: SelfAgreement<f64> = self_agreement(&s, &e, &map).unwrap();
        assert!((r.mean - 75.0).abs() < 1e-12);
        assert!(matches!(self_agreement::<f64>(&s, &[], &map), Err(AnnotationError::NoOverlap)));
    }
}
