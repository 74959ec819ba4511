//! Scalar abstraction and compensated accumulation.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the engine is generic over.
///
/// Implemented for `f32` and `f64`. The tolerances are per-type because an
/// absolute `1e-12` is below `f32` resolution.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance on expected-utility differences below which two
    /// actions count as tied.
    const TIE_TOLERANCE: Self;
    /// Tolerance used when validating probability vectors.
    const SIMPLEX_TOLERANCE: Self;

    /// Converts an `f64` literal or parameter.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f64 {
    const TIE_TOLERANCE: f64 = 1e-12;
    const SIMPLEX_TOLERANCE: f64 = 1e-12;
}

impl Real for f32 {
    const TIE_TOLERANCE: f32 = 1e-6;
    const SIMPLEX_TOLERANCE: f32 = 1e-5;
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, value: T) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation = self.compensation + ((self.sum - t) + value);
        } else {
            self.compensation = self.compensation + ((value - t) + self.sum);
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.compensation
    }
}

impl<T: Real> std::iter::FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator, evaluated in iteration order.
pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<CompensatedSum<T>>().value()
}

/// A dense array of compensated accumulators.
#[derive(Debug, Clone)]
pub(crate) struct CompensatedBuffer<T> {
    sum: Vec<T>,
    compensation: Vec<T>,
}

impl<T: Real> CompensatedBuffer<T> {
    pub(crate) fn zeros(len: usize) -> Self {
        Self {
            sum: vec![T::zero(); len],
            compensation: vec![T::zero(); len],
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, index: usize, value: T) {
        let s = self.sum[index];
        let t = s + value;
        let c = if s.abs() >= value.abs() {
            (s - t) + value
        } else {
            (value - t) + s
        };
        self.compensation[index] = self.compensation[index] + c;
        self.sum[index] = t;
    }

    pub(crate) fn into_values(self) -> Vec<T> {
        self.sum
            .into_iter()
            .zip(self.compensation)
            .map(|(s, c)| s + c)
            .collect()
    }
}

/// `base^exp` for table sizing, `None` on overflow.
pub fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1.0f64];
        values.extend(std::iter::repeat(1e-16).take(10_000));
        values.push(-1.0);
        let naive: f64 = values.iter().sum();
        let comp = compensated_sum(values.iter().copied());
        assert!((comp - 1e-12).abs() < 1e-24, "{comp}");
        assert!((naive - 1e-12).abs() > 1e-13);
    }

    #[test]
    fn buffer_matches_scalar_accumulator() {
        let mut buf = CompensatedBuffer::<f64>::zeros(2);
        let mut acc = CompensatedSum::<f64>::new();
        for k in 0..1000 {
            let v = 0.1 * (k as f64).sin();
            buf.add(1, v);
            acc.add(v);
        }
        let out = buf.into_values();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], acc.value());
    }

    #[test]
    fn checked_pow_overflows_to_none() {
        assert_eq!(checked_pow(2, 10), Some(1024));
        assert_eq!(checked_pow(3, 0), Some(1));
        assert_eq!(checked_pow(2, 200), None);
    }
}
