use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{PromptSpec, Technique};
use crate::scalar::Scalar;
use crate::sentiment::Sentiment;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("no sentiment label found in response")]
    NoLabel,
    #[error("response names more than one label: {0:?}")]
    AmbiguousResponse(Vec<Sentiment>),
    #[error("found {found} labels, expected {expected}")]
    CountMismatch { found: usize, expected: usize },
    #[error("token {index} ({token:?}) is not a label: {reason}")]
    BadToken { index: usize, token: String, reason: Box<ParseError> },
    #[error("percentage for {0} missing")]
    MissingClass(Sentiment),
    #[error("percentage for {0} given twice")]
    DuplicateClass(Sentiment),
    #[error("percentage for {0} is negative")]
    NegativeValue(Sentiment),
    #[error("percentages sum to {0}, outside [95, 105]")]
    SumOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Exactly `Positive`, `Negative` or `Ambiguous` up to surrounding whitespace.
    Strict,
    /// Also case-insensitive, a single trailing period, or a response that
    /// mentions exactly one label word.
    #[default]
    Tolerant,
}

fn exact(s: &str) -> Option<Sentiment> {
    match s {
        "Positive" => Some(Sentiment::Positive),
        "Negative" => Some(Sentiment::Negative),
        "Ambiguous" => Some(Sentiment::Ambiguous),
        _ => None,
    }
}

pub fn parse_label(response: &str, mode: LabelMode) -> Result<Sentiment, ParseError> {
    let trimmed = response.trim();
    if let Some(s) = exact(trimmed) {
        return Ok(s);
    }
    if mode == LabelMode::Strict {
        return Err(ParseError::NoLabel);
    }
    let folded = trimmed.to_lowercase();
    let bare = folded.strip_suffix('.').unwrap_or(&folded);
    if let Ok(s) = bare.parse::<Sentiment>() {
        return Ok(s);
    }
    let mut found: Vec<Sentiment> = Vec::new();
    for word in folded.split(|c: char| !c.is_alphanumeric()) {
        if let Some(s) = match word {
            "positive" => Some(Sentiment::Positive),
            "negative" => Some(Sentiment::Negative),
            "ambiguous" => Some(Sentiment::Ambiguous),
            _ => None,
        } {
            if !found.contains(&s) {
                found.push(s);
            }
        }
    }
    match found.len() {
        0 => Err(ParseError::NoLabel),
        1 => Ok(found[0]),
        _ => Err(ParseError::AmbiguousResponse(found)),
    }
}

/// Labels separated by commas and/or newlines, each read in tolerant mode.
pub fn parse_batch_labels(response: &str, expected_n: usize) -> Result<Vec<Sentiment>, ParseError> {
    let tokens: Vec<&str> = response
        .split([',', '\n'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.len() != expected_n {
        return Err(ParseError::CountMismatch { found: tokens.len(), expected: expected_n });
    }
    tokens
        .iter()
        .enumerate()
        .map(|(index, t)| {
            parse_label(t, LabelMode::Tolerant).map_err(|e| ParseError::BadToken {
                index,
                token: t.to_string(),
                reason: Box::new(e),
            })
        })
        .collect()
}

/// Class probabilities stored as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution<T> {
    pub positive: T,
    pub negative: T,
    pub ambiguous: T,
}

impl<T: Scalar> Distribution<T> {
    pub fn new(positive: T, negative: T, ambiguous: T) -> Self {
        Distribution { positive, negative, ambiguous }
    }

    pub fn get(&self, s: Sentiment) -> T {
        match s {
            Sentiment::Positive => self.positive,
            Sentiment::Negative => self.negative,
            Sentiment::Ambiguous => self.ambiguous,
        }
    }

    pub fn one_hot(s: Sentiment) -> Self {
        let mut d = Distribution::new(T::zero(), T::zero(), T::zero());
        match s {
            Sentiment::Positive => d.positive = T::one(),
            Sentiment::Negative => d.negative = T::one(),
            Sentiment::Ambiguous => d.ambiguous = T::one(),
        }
        d
    }

    pub fn sum(&self) -> T {
        self.positive + self.negative + self.ambiguous
    }

    /// Highest-probability class, ties going to Ambiguous.
    pub fn argmax(&self) -> Sentiment {
        let v = [self.positive, self.negative, self.ambiguous];
        let max = v.iter().copied().fold(T::neg_infinity(), T::max);
        let winners: Vec<usize> = (0..3).filter(|&i| v[i] == max).collect();
        if winners.len() == 1 {
            Sentiment::ALL[winners[0]]
        } else {
            Sentiment::Ambiguous
        }
    }
}

fn percentage_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(positive|negative|ambiguous)\b\s*[:=]?\s*(-?\d+(?:[.,]\d+)?)\s*%?")
            .expect("valid regex")
    })
}

/// Reads `Positive: XX% Negative: XX% Ambiguous: XX%` in any order. A sum
/// within 5 points of 100 is renormalized to exactly 1.
pub fn parse_percentages<T: Scalar>(response: &str) -> Result<Distribution<T>, ParseError> {
    let mut values: [Option<f64>; 3] = [None; 3];
    for cap in percentage_regex().captures_iter(response) {
        let class: Sentiment = cap[1].parse().expect("regex only matches labels");
        let v: f64 = cap[2].replace(',', ".").parse().expect("regex only matches numbers");
        if values[class.index()].is_some() {
            return Err(ParseError::DuplicateClass(class));
        }
        if v < 0.0 {
            return Err(ParseError::NegativeValue(class));
        }
        values[class.index()] = Some(v);
    }
    let mut got = [0.0f64; 3];
    for class in Sentiment::ALL {
        got[class.index()] = values[class.index()].ok_or(ParseError::MissingClass(class))?;
    }
    let sum: f64 = got.iter().sum();
    if (sum - 100.0).abs() > 5.0 {
        return Err(ParseError::SumOutOfRange(sum));
    }
    let total = T::from_f64_lossy(sum);
    let frac = |v: f64| T::from_f64_lossy(v) / total;
    Ok(Distribution::new(frac(got[0]), frac(got[1]), frac(got[2])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionKind<T> {
    Label { label: Sentiment },
    Labels { labels: Vec<Sentiment> },
    Distribution { distribution: Distribution<T> },
}

/// Parsed model output plus the raw response it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPrediction<T> {
    #[serde(flatten)]
    pub kind: PredictionKind<T>,
    pub raw: String,
}

impl<T: Scalar> ModelPrediction<T> {
    /// Single hard label: the label itself, or the argmax of a distribution.
    pub fn label(&self) -> Option<Sentiment> {
        match &self.kind {
            PredictionKind::Label { label } => Some(*label),
            PredictionKind::Distribution { distribution } => Some(distribution.argmax()),
            PredictionKind::Labels { .. } => None,
        }
    }

    pub fn distribution(&self) -> Option<Distribution<T>> {
        match &self.kind {
            PredictionKind::Distribution { distribution } => Some(*distribution),
            _ => None,
        }
    }
}

/// Parses a response in the format the technique asked for. `n` is the
/// number of proverbs in the prompt.
pub fn parse_response<T: Scalar>(
    spec: &PromptSpec,
    response: &str,
    n: usize,
    mode: LabelMode,
) -> Result<ModelPrediction<T>, ParseError> {
    let kind = match spec.technique {
        Technique::Zb { .. } => PredictionKind::Labels { labels: parse_batch_labels(response, n)? },
        Technique::Zp => PredictionKind::Distribution { distribution: parse_percentages(response)? },
        Technique::Z0 | Technique::FewShot { .. } => PredictionKind::Label { label: parse_label(response, mode)? },
    };
    Ok(ModelPrediction { kind, raw: response.to_string() })
}
