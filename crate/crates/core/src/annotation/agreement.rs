use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::correlation::{correlation_matrix, flag_outlier_annotators, CorrelationMatrix, CorrelationMethod, NumericLabel};
use super::{AnnotationError, AnnotationMatrix, DEFAULT_MIN_MEAN_CORR};
use crate::scalar::Scalar;

/// Cohen's kappa over the positions where both raters gave a label.
///
/// Expected agreement uses each rater's own marginals. Returns 1 when both
/// raters used the same single label throughout.
pub fn cohen_kappa<T, L>(a: &[Option<L>], b: &[Option<L>]) -> Result<T, AnnotationError>
where
    T: Scalar,
    L: Eq + Hash,
{
    if a.len() != b.len() {
        return Err(AnnotationError::Shape(format!("label vectors of length {} and {}", a.len(), b.len())));
    }
    let mut marginals: HashMap<&L, (usize, usize)> = HashMap::new();
    let mut n = 0usize;
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        let (Some(x), Some(y)) = (x, y) else { continue };
        n += 1;
        if x == y {
            agree += 1;
        }
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
    }
    if n < 2 {
        return Err(AnnotationError::TooFewOverlapping(n));
    }
    let nf = T::from_usize_lossy(n);
    let p_o = T::from_usize_lossy(agree) / nf;
    let p_e = marginals
        .values()
        .fold(T::zero(), |acc, &(ca, cb)| acc + T::from_usize_lossy(ca * cb))
        / (nf * nf);
    if p_e >= T::one() {
        return Ok(T::one());
    }
    Ok((p_o - p_e) / (T::one() - p_e))
}

/// Pairwise kappa between every pair of annotators. Pairs with fewer than
/// two shared items are left undefined.
pub fn pairwise_kappa<T, L>(matrix: &AnnotationMatrix<L>) -> CorrelationMatrix<T>
where
    T: Scalar,
    L: Eq + Hash + Clone,
{
    let n = matrix.annotators.len();
    let columns: Vec<Vec<Option<L>>> = (0..n).map(|j| matrix.column(j)).collect();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        values[i][i] = Some(T::one());
        for j in (i + 1)..n {
            let k = cohen_kappa::<T, L>(&columns[i], &columns[j]).ok();
            values[i][j] = k;
            values[j][i] = k;
        }
    }
    CorrelationMatrix { annotators: matrix.annotators.clone(), values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AlphaLevel {
    #[default]
    Nominal,
}

/// Krippendorff's alpha from the coincidence matrix, nominal distance.
///
/// Units with fewer than two labels are not pairable and are ignored.
pub fn krippendorff_alpha<T, L>(matrix: &AnnotationMatrix<L>, level: AlphaLevel) -> Result<T, AnnotationError>
where
    T: Scalar,
    L: Eq + Hash + Clone,
{
    let AlphaLevel::Nominal = level;
    if matrix.annotators.len() < 2 {
        return Err(AnnotationError::TooFewAnnotators(matrix.annotators.len()));
    }
    // Per category total of pairable values (n_c) and observed disagreement mass.
    let mut totals: HashMap<&L, usize> = HashMap::new();
    let mut observed = T::zero();
    let mut pairable_units = 0usize;
    for row in &matrix.cells {
        let mut unit: HashMap<&L, usize> = HashMap::new();
        for v in row.iter().flatten() {
            *unit.entry(v).or_default() += 1;
        }
        let m_u: usize = unit.values().sum();
        if m_u < 2 {
            continue;
        }
        pairable_units += 1;
        // sum over c != k of n_uc * n_uk = m_u^2 - sum_c n_uc^2
        let same: usize = unit.values().map(|c| c * c).sum();
        observed = observed + T::from_usize_lossy(m_u * m_u - same) / T::from_usize_lossy(m_u - 1);
        for (label, count) in unit {
            *totals.entry(label).or_default() += count;
        }
    }
    if pairable_units == 0 {
        return Err(AnnotationError::NoPairableValues);
    }
    if observed == T::zero() {
        return Ok(T::one());
    }
    let n: usize = totals.values().sum();
    let same: usize = totals.values().map(|c| c * c).sum();
    let expected = T::from_usize_lossy(n * n - same);
    Ok(T::one() - T::from_usize_lossy(n - 1) * observed / expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementOptions {
    pub min_mean_corr: f64,
    /// Drop flagged annotators before computing the summary coefficients.
    pub exclude_flagged: bool,
}

impl Default for AgreementOptions {
    fn default() -> Self {
        AgreementOptions { min_mean_corr: DEFAULT_MIN_MEAN_CORR, exclude_flagged: true }
    }
}

/// Summary agreement statistics plus the pairwise matrices behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport<T> {
    pub kappa_mean: Option<T>,
    pub alpha: Option<T>,
    pub spearman_mean: Option<T>,
    pub pearson_mean: Option<T>,
    pub kappa_pairwise: CorrelationMatrix<T>,
    pub pearson: CorrelationMatrix<T>,
    pub spearman: CorrelationMatrix<T>,
    pub flagged_annotators: Vec<String>,
    pub annotators_used: Vec<String>,
    pub n_items: usize,
}

/// Pairwise matrices are over all annotators; the means and alpha are over
/// the retained ones.
pub fn agreement_report<T, L>(matrix: &AnnotationMatrix<L>, opts: &AgreementOptions) -> Result<AgreementReport<T>, AnnotationError>
where
    T: Scalar,
    L: Eq + Hash + Clone + NumericLabel,
{
    if matrix.annotators.len() < 2 {
        return Err(AnnotationError::TooFewAnnotators(matrix.annotators.len()));
    }
    let pearson = correlation_matrix::<T, L>(matrix, CorrelationMethod::Pearson)?;
    let spearman = correlation_matrix::<T, L>(matrix, CorrelationMethod::Spearman)?;
    let kappa_pairwise = pairwise_kappa::<T, L>(matrix);
    let flagged = flag_outlier_annotators(&pearson, T::from_f64_lossy(opts.min_mean_corr));

    let retained = if opts.exclude_flagged && !flagged.is_empty() {
        matrix.without_annotators(&flagged)
    } else {
        matrix.clone()
    };
    let keep = |m: &CorrelationMatrix<T>| m.restricted_to(&retained.annotators);
    Ok(AgreementReport {
        kappa_mean: keep(&kappa_pairwise).mean_off_diagonal(),
        alpha: krippendorff_alpha(&retained, AlphaLevel::Nominal).ok(),
        spearman_mean: keep(&spearman).mean_off_diagonal(),
        pearson_mean: keep(&pearson).mean_off_diagonal(),
        kappa_pairwise,
        pearson,
        spearman,
        flagged_annotators: flagged,
        annotators_used: retained.annotators.clone(),
        n_items: matrix.items.len(),
    })
}
