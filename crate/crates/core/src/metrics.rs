//! Log-ratio error metrics.
//!
//! Errors live in log10 space throughout the crate and are converted to
//! percent only when reported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats;

/// Signed log10(predicted / measured); positive means overestimation.
pub fn log_ratio_error<T: Real>(measured: T, predicted: T) -> Result<T> {
    if !(measured > T::zero() && predicted > T::zero()) {
        return Err(Error::Domain(format!(
            "throughputs must be positive (measured {measured}, predicted {predicted})"
        )));
    }
    Ok((predicted / measured).log10())
}

/// Converts a signed log10 ratio into a percent error: (10^e − 1) × 100.
pub fn to_percent_error<T: Real>(e: T) -> T {
    (T::lit(10.0).powf(e) - T::one()) * T::lit(100.0)
}

/// Median absolute log error, with its percent form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary<T> {
    pub log_error: T,
    pub percent: T,
}

impl<T: Real> ErrorSummary<T> {
    pub fn from_log_error(log_error: T) -> Self {
        ErrorSummary {
            log_error,
            percent: to_percent_error(log_error),
        }
    }

    /// Median of |e| over signed log errors.
    pub fn from_signed(errors: &[T]) -> Result<Self> {
        let abs: Vec<T> = errors.iter().map(|e| e.abs()).collect();
        let med = stats::median(&abs)
            .ok_or_else(|| Error::InvalidArgument("no errors to summarize".into()))?;
        Ok(Self::from_log_error(med))
    }

    /// Summary for predictions already in log10 space.
    pub fn from_log_pairs(measured_log: &[T], predicted_log: &[T]) -> Result<Self> {
        if measured_log.len() != predicted_log.len() {
            return Err(Error::InvalidArgument("length mismatch".into()));
        }
        let errors: Vec<T> = measured_log
            .iter()
            .zip(predicted_log)
            .map(|(m, p)| *p - *m)
            .collect();
        Self::from_signed(&errors)
    }
}

/// Median |log10 ratio| over (measured, predicted) pairs in bytes/s.
pub fn median_abs_error<T: Real>(pairs: &[(T, T)]) -> Result<ErrorSummary<T>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("median_abs_error of an empty list".into()));
    }
    let errors = pairs
        .iter()
        .map(|&(m, p)| log_ratio_error(m, p))
        .collect::<Result<Vec<_>>>()?;
    ErrorSummary::from_signed(&errors)
}

/// 68% and 95% percent bands for a log10 standard deviation.
pub fn noise_bands<T: Real>(sigma: T) -> (T, T) {
    (
        to_percent_error(sigma),
        to_percent_error(T::lit(stats::NORMAL_95) * sigma),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const LOG2: f64 = std::f64::consts::LOG10_2;

    #[test]
    fn log_ratio_examples() {
        assert_eq!(log_ratio_error(100.0, 100.0).unwrap(), 0.0);
        assert!((log_ratio_error(100.0, 50.0).unwrap() + LOG2).abs() < 1e-12);
        assert!((log_ratio_error(50.0, 100.0).unwrap() - LOG2).abs() < 1e-12);
    }

    #[test]
    fn log_ratio_rejects_non_positive() {
        assert!(matches!(log_ratio_error(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(log_ratio_error(1.0, -2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn percent_examples() {
        assert_eq!(to_percent_error(0.0f64), 0.0);
        assert!((to_percent_error(0.75f64.log10()) + 25.0).abs() < 1e-9);
        assert!((to_percent_error(LOG2) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn median_abs_error_examples() {
        let s = median_abs_error(&[(100.0, 100.0), (100.0, 100.0)]).unwrap();
        assert_eq!((s.log_error, s.percent), (0.0, 0.0));
        let s = median_abs_error(&[(100.0, 50.0), (100.0, 100.0), (100.0, 200.0)]).unwrap();
        assert!((s.log_error - LOG2).abs() < 1e-12);
        assert!((s.percent - 100.0).abs() < 1e-9);
        assert!(median_abs_error::<f64>(&[]).is_err());
    }

    #[test]
    fn median_abs_error_matches_half_normal() {
        let sigma = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = Normal::new(0.0, sigma).unwrap();
        let pairs: Vec<(f64, f64)> = (0..1000)
            .map(|_| (1e9, 1e9 * 10f64.powf(eps.sample(&mut rng))))
            .collect();
        let got = median_abs_error(&pairs).unwrap().log_error;
        let expected = sigma * crate::stats::HALF_NORMAL_MEDIAN;
        assert!((got - expected).abs() / expected < 0.10, "{got} vs {expected}");
    }

    #[test]
    fn works_in_single_precision() {
        let s = median_abs_error(&[(100.0f32, 50.0f32), (100.0, 200.0)]).unwrap();
        assert!((s.log_error - LOG2 as f32).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn antisymmetric(y in 1e-3f64..1e12, yhat in 1e-3f64..1e12) {
            let a = log_ratio_error(y, yhat).unwrap();
            let b = log_ratio_error(yhat, y).unwrap();
            prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn percent_invariant_under_joint_rescaling(
            y in 1e-3f64..1e9, yhat in 1e-3f64..1e9, c in 1e-3f64..1e3
        ) {
            let a = to_percent_error(log_ratio_error(y, yhat).unwrap());
            let b = to_percent_error(log_ratio_error(c * y, c * yhat).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn percent_is_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(to_percent_error(lo) <= to_percent_error(hi));
        }

        #[test]
        fn median_abs_error_permutation_invariant(
            pairs in proptest::collection::vec((1.0f64..1e6, 1.0f64..1e6), 1..40),
            seed in any::<u64>()
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(median_abs_error(&pairs).unwrap(), median_abs_error(&shuffled).unwrap());
        }
    }
}
