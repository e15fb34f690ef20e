//! Sample statistics used by every estimator: means with standard errors,
//! self-normalized weighted means and batch means.

use crate::error::{Error, Result};
use crate::scalar::{rabs, real, Real};

/// Point estimate with its standard error. `stderr` is NaN when the sample
/// is too small to estimate it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<T: Real> {
    pub value: T,
    pub stderr: T,
}

impl<T: Real> Estimate<T> {
    pub fn exact(value: T) -> Self {
        Self { value, stderr: T::zero() }
    }

    pub fn is_degenerate(&self) -> bool {
        !self.stderr.is_finite()
    }

    /// `|self - other| <= k * sqrt(se1² + se2²) + slack`.
    pub fn agrees_with(&self, other: &Self, k: T, slack: T) -> bool {
        let sigma = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        rabs(self.value - other.value) <= k * sigma + slack
    }
}

/// Mean of `xs` with the standard error from the unbiased sample variance.
///
/// Deviations are taken from the first sample, so a constant sample gives
/// its value back exactly.
pub fn mean_stderr<T: Real>(xs: &[T]) -> Result<Estimate<T>> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let anchor = xs[0];
    let nf = real::<T>(n as f64);
    let shift = xs.iter().fold(T::zero(), |acc, &x| acc + (x - anchor)) / nf;
    let value = anchor + shift;
    if n == 1 {
        return Ok(Estimate { value, stderr: real::<T>(f64::NAN) });
    }
    let ss = xs.iter().fold(T::zero(), |acc, &x| {
        let d = x - anchor - shift;
        acc + d * d
    });
    let var = ss / real::<T>((n - 1) as f64);
    Ok(Estimate { value, stderr: (var / nf).sqrt() })
}

/// Self-normalized weighted mean `Σ w f / Σ w` with the delta-method
/// standard error `sqrt(Σ w² (f - μ)²) / Σ w`.
pub fn weighted_mean<T: Real>(weights: &[T], values: &[T]) -> Result<Estimate<T>> {
    if weights.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: values.len() });
    }
    if weights.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let total = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    if total == T::zero() {
        return Err(Error::ZeroWeights);
    }
    let num = weights.iter().zip(values).fold(T::zero(), |acc, (&w, &f)| acc + w * f);
    let value = num / total;
    if weights.len() == 1 {
        return Ok(Estimate { value, stderr: real::<T>(f64::NAN) });
    }
    let ss = weights.iter().zip(values).fold(T::zero(), |acc, (&w, &f)| {
        let d = w * (f - value);
        acc + d * d
    });
    Ok(Estimate { value, stderr: ss.sqrt() / total })
}

/// Means of `batches` contiguous, equally long blocks (the remainder at the
/// end is dropped).
pub fn batch_means<T: Real>(xs: &[T], batches: usize) -> Result<Vec<T>> {
    if batches == 0 || xs.len() < batches {
        return Err(Error::TooFewSamples { needed: batches.max(1), found: xs.len() });
    }
    let len = xs.len() / batches;
    xs.chunks_exact(len).take(batches).map(|c| mean_stderr(c).map(|e| e.value)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_constant_is_exact() {
        let e = mean_stderr::<f64>(&[0.1; 7]).unwrap();
        assert_eq!(e.value, 0.1);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn mean_and_stderr() {
        let e = mean_stderr::<f64>(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((e.value - 2.5).abs() < 1e-15);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn single_sample_is_degenerate() {
        let e = mean_stderr::<f64>(&[3.0]).unwrap();
        assert_eq!(e.value, 3.0);
        assert!(e.is_degenerate());
        assert_eq!(mean_stderr::<f64>(&[]), Err(Error::EmptyEnsemble));
    }

    #[test]
    fn weighted_mean_of_ones() {
        let w = [0.3, 1.7, 0.2, 2.9];
        let e = weighted_mean(&w, &[1.0; 4]).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(weighted_mean(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::ZeroWeights));
    }

    #[test]
    fn batches_drop_remainder() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(batch_means(&xs, 3).unwrap(), vec![1.0, 4.0, 7.0]);
        assert!(batch_means(&xs, 11).is_err());
    }

    #[test]
    fn agreement_window() {
        let a = Estimate { value: 1.0, stderr: 0.3 };
        let b = Estimate { value: 2.0, stderr: 0.4 };
        assert!(a.agrees_with(&b, 2.0, 0.0));
        assert!(!a.agrees_with(&b, 1.9, 0.0));
    }
}
