//! Small order-statistic and moment helpers.

use crate::scalar::{cmp, Real};

/// Median of the standard normal absolute value, Φ⁻¹(0.75).
pub const HALF_NORMAL_MEDIAN: f64 = 0.674_489_750_196_081_7;

/// Two-sided 95% normal multiplier.
pub const NORMAL_95: f64 = 1.96;

pub fn mean<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum: T = values.iter().copied().sum();
    Some(sum / T::lit(values.len() as f64))
}

/// Median; even lengths average the two central order statistics.
pub fn median<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / T::lit(2.0)
    })
}

/// Deviations from the mean. Values are shifted by the first one before
/// averaging, so equal inputs give exactly zero.
pub fn deviations<T: Real>(values: &[T]) -> Vec<T> {
    let Some(&first) = values.first() else {
        return Vec::new();
    };
    let shifted: Vec<T> = values.iter().map(|&v| v - first).collect();
    let m = mean(&shifted).expect("non-empty");
    shifted.iter().map(|&d| d - m).collect()
}

/// Sum of squared deviations from the mean.
pub fn sum_sq_dev<T: Real>(values: &[T]) -> T {
    deviations(values).iter().map(|&d| d * d).sum()
}

/// Bessel-corrected sample variance; `None` below two samples.
pub fn sample_variance<T: Real>(values: &[T]) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    Some(sum_sq_dev(values) / T::lit((values.len() - 1) as f64))
}

/// Population standard deviation (divides by n).
pub fn population_std<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    Some((sum_sq_dev(values) / T::lit(values.len() as f64)).sqrt())
}

/// Weighted quantile by inverse of the weighted empirical CDF: the smallest
/// value whose cumulative weight reaches `q` of the total.
///
/// `items` are (value, weight) pairs with non-negative weights.
pub fn weighted_quantile<T: Real>(items: &[(T, T)], q: f64) -> Option<T> {
    let total: T = items.iter().map(|(_, w)| *w).sum();
    if items.is_empty() || total <= T::zero() {
        return None;
    }
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| cmp(&a.0, &b.0));
    let target = T::lit(q.clamp(0.0, 1.0)) * total;
    let mut acc = T::zero();
    for (value, weight) in &sorted {
        acc += *weight;
        // relative slack absorbs round-off in the running sum
        if acc >= target * (T::one() - T::lit(1e-12)) {
            return Some(*value);
        }
    }
    sorted.last().map(|(v, _)| *v)
}

/// Linear-interpolated quantile (type 7) of unweighted data.
pub fn quantile<T: Real>(values: &[T], q: f64) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}
