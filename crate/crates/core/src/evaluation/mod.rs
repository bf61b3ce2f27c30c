//! Scoring of model predictions against annotator gold.

mod table;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{vote_distribution, SentimentDistribution};
use crate::client::PredictionRecord;
use crate::corpus::{AnnotationRecord, Corpus};
use crate::prompting::Distribution;
use crate::stats::pearson;
use crate::{Scalar, Sentiment};

pub use table::{render_batch_table, render_distribution_table, render_shots_table, text_table};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold has {gold} items but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("nothing to score")]
    Empty,
    #[error("{path}:{line}: {message}")]
    Replay { path: String, line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Counts with rows for the gold class and columns for the predicted
/// class, both in (Positive, Negative, Ambiguous) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[usize; 3]; 3]);

impl ConfusionMatrix {
    pub fn add(&mut self, gold: Sentiment, pred: Sentiment) {
        self.0[gold.index()][pred.index()] += 1;
    }

    pub fn get(&self, gold: Sentiment, pred: Sentiment) -> usize {
        self.0[gold.index()][pred.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    /// Gold support of a class.
    pub fn row_sum(&self, gold: Sentiment) -> usize {
        self.0[gold.index()].iter().sum()
    }

    pub fn col_sum(&self, pred: Sentiment) -> usize {
        self.0.iter().map(|r| r[pred.index()]).sum()
    }

    /// Elementwise sum; lets chunked counts merge exactly.
    pub fn merge(mut self, other: &ConfusionMatrix) -> Self {
        for (r, o) in self.0.iter_mut().zip(other.0.iter()) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
        self
    }
}

fn check_lengths(gold: usize, pred: usize) -> Result<(), EvalError> {
    if gold != pred {
        return Err(EvalError::LengthMismatch { gold, pred });
    }
    if gold == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn confusion_matrix(gold: &[Sentiment], pred: &[Sentiment]) -> Result<ConfusionMatrix, EvalError> {
    check_lengths(gold.len(), pred.len())?;
    let mut cm = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub label: Sentiment,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: usize,
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_usize_lossy(num) / T::from_usize_lossy(den)
    }
}

/// Per-class precision, recall and F1, with 0/0 read as 0.
pub fn class_metrics<T: Scalar>(cm: &ConfusionMatrix) -> [ClassMetrics<T>; 3] {
    Sentiment::ALL.map(|c| {
        let tp = cm.get(c, c);
        let support = cm.row_sum(c);
        let predicted = cm.col_sum(c);
        // F1 = 2tp / (2tp + fp + fn), which avoids dividing precision by zero
        let f1 = ratio(2 * tp, support + predicted);
        ClassMetrics { label: c, precision: ratio(tp, predicted), recall: ratio(tp, support), f1, support }
    })
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1_from<T: Scalar>(cm: &ConfusionMatrix) -> T {
    let n = cm.total();
    if n == 0 {
        return T::zero();
    }
    class_metrics::<T>(cm)
        .iter()
        .map(|m| m.f1 * T::from_usize_lossy(m.support))
        .fold(T::zero(), |a, b| a + b)
        / T::from_usize_lossy(n)
}

pub fn weighted_f1<T: Scalar>(gold: &[Sentiment], pred: &[Sentiment]) -> Result<T, EvalError> {
    Ok(weighted_f1_from(&confusion_matrix(gold, pred)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub weighted_f1: T,
    pub per_class: Vec<ClassMetrics<T>>,
    pub confusion: ConfusionMatrix,
    pub n_items: usize,
    pub n_failures: usize,
}

impl<T: Scalar> EvalReport<T> {
    pub fn from_confusion(confusion: ConfusionMatrix, n_failures: usize) -> Self {
        EvalReport {
            weighted_f1: weighted_f1_from(&confusion),
            per_class: class_metrics(&confusion).to_vec(),
            n_items: confusion.total(),
            confusion,
            n_failures,
        }
    }
}

/// What to do with items whose prediction is missing or unparseable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    Exclude,
    /// Score the item as if this label had been predicted.
    Fallback(Sentiment),
}

/// Gold for one proverb: vote counts and the majority label derived from them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldItem {
    pub proverb_id: String,
    pub label: Sentiment,
    pub votes: SentimentDistribution,
}

/// Gold for every proverb with at least one sentiment vote, in corpus order.
/// Votes of `excluded` annotators are ignored.
pub fn gold_from_corpus(corpus: &Corpus, excluded: &[String]) -> Vec<GoldItem> {
    corpus
        .annotations_by_proverb()
        .into_iter()
        .filter_map(|(p, recs)| {
            let votes: Vec<&AnnotationRecord> = recs
                .into_iter()
                .filter(|r| r.sentiment.is_some() && !excluded.contains(&r.annotator_id))
                .collect();
            let dist = vote_distribution(votes).ok().filter(|d| d.n_total() > 0)?;
            Some(GoldItem { proverb_id: p.id.clone(), label: dist.dominant(), votes: dist })
        })
        .collect()
}

/// Scores hard labels. Gold items without a record count as failures;
/// records for proverbs outside the gold set are ignored.
pub fn evaluate_labels<T: Scalar>(
    gold: &[GoldItem],
    records: &[PredictionRecord<T>],
    policy: FailurePolicy,
) -> Result<EvalReport<T>, EvalError> {
    let by_id: HashMap<&str, &PredictionRecord<T>> = records.iter().map(|r| (r.proverb_id.as_str(), r)).collect();
    let mut cm = ConfusionMatrix::default();
    let mut failures = 0;
    for g in gold {
        let label = by_id.get(g.proverb_id.as_str()).and_then(|r| r.prediction.as_ref()).and_then(|p| p.label());
        match (label, policy) {
            (Some(l), _) => cm.add(g.label, l),
            (None, FailurePolicy::Fallback(l)) => {
                failures += 1;
                cm.add(g.label, l);
            }
            (None, FailurePolicy::Exclude) => failures += 1,
        }
    }
    if cm.total() == 0 {
        return Err(EvalError::Empty);
    }
    Ok(EvalReport::from_confusion(cm, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEvalReport<T> {
    pub mae: T,
    pub mse: T,
    pub pearson_pos: Option<T>,
    pub pearson_amb: Option<T>,
    pub pearson_neg: Option<T>,
    pub n_items: usize,
    pub n_failures: usize,
}

/// MAE and MSE over all items and classes, and Pearson per class across
/// items. A class column without variance leaves its correlation undefined.
pub fn distribution_errors<T: Scalar>(
    gold: &[Distribution<T>],
    pred: &[Distribution<T>],
) -> Result<DistributionEvalReport<T>, EvalError> {
    check_lengths(gold.len(), pred.len())?;
    let mut abs = T::zero();
    let mut sq = T::zero();
    for (g, p) in gold.iter().zip(pred) {
        for c in Sentiment::ALL {
            let d = g.get(c) - p.get(c);
            abs = abs + d.abs();
            sq = sq + d * d;
        }
    }
    let cells = T::from_usize_lossy(3 * gold.len());
    let rho = |c: Sentiment| {
        let xs: Vec<T> = gold.iter().map(|d| d.get(c)).collect();
        let ys: Vec<T> = pred.iter().map(|d| d.get(c)).collect();
        pearson(&xs, &ys)
    };
    Ok(DistributionEvalReport {
        mae: abs / cells,
        mse: sq / cells,
        pearson_pos: rho(Sentiment::Positive),
        pearson_amb: rho(Sentiment::Ambiguous),
        pearson_neg: rho(Sentiment::Negative),
        n_items: gold.len(),
        n_failures: 0,
    })
}

/// Gold side of the distribution comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionTarget {
    /// Annotator vote fractions.
    #[default]
    Fractions,
    /// One-hot majority label.
    OneHot,
}

pub fn gold_distribution<T: Scalar>(item: &GoldItem, target: DistributionTarget) -> Distribution<T> {
    match target {
        DistributionTarget::OneHot => Distribution::one_hot(item.label),
        DistributionTarget::Fractions => {
            let (p, n, a) = item.votes.fractions().expect("gold items have votes");
            Distribution::new(p, n, a)
        }
    }
}

/// Scores percentage predictions. Records without a distribution are
/// failures; under a fallback policy they are scored as that one-hot label.
pub fn evaluate_distributions<T: Scalar>(
    gold: &[GoldItem],
    records: &[PredictionRecord<T>],
    target: DistributionTarget,
    policy: FailurePolicy,
) -> Result<DistributionEvalReport<T>, EvalError> {
    let by_id: HashMap<&str, &PredictionRecord<T>> = records.iter().map(|r| (r.proverb_id.as_str(), r)).collect();
    let mut g = Vec::new();
    let mut p = Vec::new();
    let mut failures = 0;
    for item in gold {
        let dist = by_id.get(item.proverb_id.as_str()).and_then(|r| r.prediction.as_ref()).and_then(|p| p.distribution());
        let dist = match (dist, policy) {
            (Some(d), _) => d,
            (None, FailurePolicy::Fallback(l)) => {
                failures += 1;
                Distribution::one_hot(l)
            }
            (None, FailurePolicy::Exclude) => {
                failures += 1;
                continue;
            }
        };
        g.push(gold_distribution(item, target));
        p.push(dist);
    }
    let mut report = distribution_errors(&g, &p)?;
    report.n_failures = failures;
    Ok(report)
}

pub fn write_predictions<T: Serialize>(path: &Path, records: &[PredictionRecord<T>]) -> Result<(), EvalError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a predictions JSONL file written by [`write_predictions`].
pub fn load_predictions<T: Scalar>(path: &Path) -> Result<Vec<PredictionRecord<T>>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| EvalError::Replay {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
