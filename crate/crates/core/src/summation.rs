//! Compensated floating-point accumulation.

use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

/// Kahan–Babuška–Neumaier running sum.
///
/// Carries a separate compensation term so that the rounding error of the
/// total is independent of the number of terms to first order.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl From<f64> for NeumaierSum {
    fn from(x: f64) -> Self {
        Self { sum: x, comp: 0.0 }
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, rhs: f64) {
        self.push(rhs);
    }
}

impl Add for NeumaierSum {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self.push(rhs.sum);
        self.push(rhs.comp);
        self
    }
}

impl Sub for NeumaierSum {
    type Output = Self;

    fn sub(mut self, rhs: Self) -> Self {
        self.push(-rhs.sum);
        self.push(-rhs.comp);
        self
    }
}

impl Sum<f64> for NeumaierSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        iter.for_each(|x| acc.push(x));
        acc
    }
}

/// Compensated sum of an iterator of `f64`.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().sum::<NeumaierSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_lost_by_naive_sum() {
        let terms = [1e16, 1.0, -1e16, 1.0];
        let naive: f64 = terms.iter().sum();
        assert_eq!(naive, 1.0);
        assert_eq!(compensated_sum(terms), 2.0);
    }

    #[test]
    fn merge_and_difference() {
        let a: NeumaierSum = (0..1000).map(|i| 0.1 * i as f64).sum();
        let b: NeumaierSum = (1000..2000).map(|i| 0.1 * i as f64).sum();
        let all: NeumaierSum = (0..2000).map(|i| 0.1 * i as f64).sum();
        assert!(((a + b).value() - all.value()).abs() < 1e-9);
        assert!(((all - a).value() - b.value()).abs() < 1e-9);
    }
}
