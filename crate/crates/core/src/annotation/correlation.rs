use serde::{Deserialize, Serialize};

use super::{AnnotationError, AnnotationMatrix};
use crate::scalar::Scalar;
use crate::sentiment::Sentiment;
use crate::stats;

/// Labels that can be placed on a numeric axis for correlation.
pub trait NumericLabel {
    fn numeric<T: Scalar>(&self) -> T;
}

impl NumericLabel for Sentiment {
    /// Negative = -1, Ambiguous = 0, Positive = +1.
    fn numeric<T: Scalar>(&self) -> T {
        self.code()
    }
}

impl NumericLabel for i32 {
    fn numeric<T: Scalar>(&self) -> T {
        T::from_i32(*self).expect("i32 fits in float")
    }
}

impl NumericLabel for i64 {
    fn numeric<T: Scalar>(&self) -> T {
        T::from_i64(*self).expect("i64 fits in float")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

/// Symmetric annotator x annotator matrix; `None` marks an undefined entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix<T> {
    pub annotators: Vec<String>,
    pub values: Vec<Vec<Option<T>>>,
}

impl<T: Scalar> CorrelationMatrix<T> {
    pub fn get(&self, a: &str, b: &str) -> Option<T> {
        let i = self.annotators.iter().position(|x| x == a)?;
        let j = self.annotators.iter().position(|x| x == b)?;
        self.values[i][j]
    }

    /// Mean of the defined entries above the diagonal.
    pub fn mean_off_diagonal(&self) -> Option<T> {
        let n = self.annotators.len();
        let defined: Vec<T> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| self.values[i][j])
            .collect();
        stats::mean(&defined)
    }

    /// Mean of one annotator's defined off-diagonal entries.
    pub fn annotator_mean(&self, i: usize) -> Option<T> {
        let row: Vec<T> = self.values[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .filter_map(|(_, v)| *v)
            .collect();
        stats::mean(&row)
    }

    pub fn restricted_to(&self, keep: &[String]) -> CorrelationMatrix<T> {
        let idx: Vec<usize> = keep
            .iter()
            .filter_map(|a| self.annotators.iter().position(|x| x == a))
            .collect();
        CorrelationMatrix {
            annotators: idx.iter().map(|&i| self.annotators[i].clone()).collect(),
            values: idx.iter().map(|&i| idx.iter().map(|&j| self.values[i][j]).collect()).collect(),
        }
    }
}

const MIN_OVERLAP: usize = 3;

/// Pairwise correlation over the items both annotators labelled. A pair
/// with fewer than three shared items or a constant side is undefined.
pub fn correlation_matrix<T, L>(
    matrix: &AnnotationMatrix<L>,
    method: CorrelationMethod,
) -> Result<CorrelationMatrix<T>, AnnotationError>
where
    T: Scalar,
    L: NumericLabel + Clone,
{
    let n = matrix.annotators.len();
    if n < 2 {
        return Err(AnnotationError::TooFewAnnotators(n));
    }
    let columns: Vec<Vec<Option<T>>> = (0..n)
        .map(|j| matrix.cells.iter().map(|row| row[j].as_ref().map(|l| l.numeric::<T>())).collect())
        .collect();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        values[i][i] = Some(T::one());
        for j in (i + 1)..n {
            let (xs, ys): (Vec<T>, Vec<T>) = columns[i]
                .iter()
                .zip(&columns[j])
                .filter_map(|(x, y)| x.zip(*y))
                .unzip();
            let r = if xs.len() < MIN_OVERLAP {
                None
            } else {
                match method {
                    CorrelationMethod::Pearson => stats::pearson(&xs, &ys),
                    CorrelationMethod::Spearman => stats::spearman(&xs, &ys),
                }
            };
            if r.is_none() {
                log::warn!(
                    "correlation between {} and {} is undefined ({} shared items)",
                    matrix.annotators[i],
                    matrix.annotators[j],
                    xs.len()
                );
            }
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { annotators: matrix.annotators.clone(), values })
}

/// Annotators whose mean correlation with the others falls below
/// `min_mean_corr`, worst first. Annotators with no defined pair are not flagged.
pub fn flag_outlier_annotators<T: Scalar>(corr: &CorrelationMatrix<T>, min_mean_corr: T) -> Vec<String> {
    let mut low: Vec<(T, &String)> = (0..corr.annotators.len())
        .filter_map(|i| corr.annotator_mean(i).map(|m| (m, &corr.annotators[i])))
        .filter(|(m, _)| *m < min_mean_corr)
        .collect();
    low.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then_with(|| a.1.cmp(b.1)));
    low.into_iter().map(|(_, id)| id.clone()).collect()
}
