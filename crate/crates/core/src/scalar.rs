//! Numeric traits the crate is generic over.
//!
//! Most of the arithmetic here (means, ratios, product-limit estimates,
//! discounting at integer offsets) only needs a field, so it is written
//! against [`Field`]. That lets the same code run on `f64`, `f32` or an
//! exact rational such as `num_rational::Ratio<i64>`. Anything that needs
//! a square root or other transcendental function asks for [`Real`].

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};
use std::fmt::Debug;

pub trait Field:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Converts a count. Panics only if the scalar type cannot hold it.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }

    /// Exact conversion from an integer number of cents.
    #[inline]
    fn from_cents(cents: i64) -> Self {
        Self::from_i64(cents).expect("cents not representable in scalar type")
            / Self::from_i64(100).expect("100 not representable in scalar type")
    }

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("value not representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn abs_diff(self, other: Self) -> Self {
        if self >= other {
            self - other
        } else {
            other - self
        }
    }
}

impl<T> Field for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

pub trait Real: Field + Float {}

impl<T> Real for T where T: Field + Float {}

/// Arithmetic mean of a non-empty slice, summed left to right.
pub(crate) fn mean<T: Field>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let total = values.iter().fold(T::zero(), |acc, &v| acc + v);
    Some(total / T::from_count(values.len()))
}

/// Sample standard deviation with divisor `n - 1`. `None` when `n < 2`.
pub(crate) fn sample_std<T: Real>(values: &[T]) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - m) * (v - m));
    Some((ss / T::from_count(values.len() - 1)).sqrt())
}

/// Median of a slice of counts, as the scalar type.
pub(crate) fn median_count<T: Field>(values: &[usize]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let two = T::from_count(2);
    if n % 2 == 1 {
        Some(T::from_count(sorted[n / 2]))
    } else {
        Some((T::from_count(sorted[n / 2 - 1]) + T::from_count(sorted[n / 2])) / two)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cents_are_exact_for_f64() {
        for cents in [-1250_i64, 0, 1, 15647, 605366, 129089] {
            let s = format!("{}.{:02}", cents / 100, (cents % 100).abs());
            let s = if cents < 0 && cents > -100 {
                format!("-{s}")
            } else {
                s
            };
            assert_eq!(f64::from_cents(cents), s.parse::<f64>().unwrap(), "{s}");
        }
    }

    #[test]
    fn std_needs_two_values() {
        assert_eq!(sample_std::<f64>(&[1.0]), None);
        let s = sample_std(&[-1.0_f64, -3.0]).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn median_of_counts() {
        assert_eq!(median_count::<f64>(&[5, 1, 3]), Some(3.0));
        assert_eq!(median_count::<f64>(&[4, 1, 3, 8]), Some(3.5));
        assert_eq!(median_count::<f64>(&[]), None);
    }
}
