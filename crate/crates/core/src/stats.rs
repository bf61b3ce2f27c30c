//! Small numeric helpers shared by the agreement and evaluation code.

use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().fold(T::zero(), |a, &x| a + x) / T::from_usize_lossy(xs.len()))
}

/// Population variance (divides by n).
pub fn population_variance<T: Scalar>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m));
    Some(ss / T::from_usize_lossy(xs.len()))
}

/// Pearson correlation; `None` when fewer than two points or either side is constant.
pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Option<T> {
    assert_eq!(xs.len(), ys.len(), "pearson: length mismatch");
    if xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return None;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Some(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks with ties given the average of the ranks they span.
pub fn mid_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j share rank ((i+1) + (j+1)) / 2
        let r = T::from_usize_lossy(i + j + 2) / T::from_f64_lossy(2.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman<T: Scalar>(xs: &[T], ys: &[T]) -> Option<T> {
    pearson(&mid_ranks(xs), &mid_ranks(ys))
}
