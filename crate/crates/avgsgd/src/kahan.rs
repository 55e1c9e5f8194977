//! Compensated (Neumaier) summation.
//!
//! Spectrum tail sums and risk accumulators add thousands of terms spanning
//! many orders of magnitude; plain `f64` accumulation loses the small tail
//! contributions that several bounds depend on.

/// Running compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one term.
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Current compensated total.
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator of terms.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = KahanSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_exactly_on_small_inputs() {
        assert_eq!(kahan_sum([1.0, 2.0, 3.0]), 6.0);
    }

    #[test]
    fn recovers_cancelling_terms() {
        // 1 + 1e100 - 1e100 loses the 1 under naive summation.
        let naive: f64 = [1.0, 1e100, -1e100].iter().sum();
        assert_eq!(naive, 0.0);
        assert_eq!(kahan_sum([1.0, 1e100, -1e100]), 1.0);
    }

    #[test]
    fn tracks_many_tiny_increments() {
        let n = 10_000_000;
        let got = kahan_sum(std::iter::repeat(0.1).take(n));
        let expected = 0.1 * n as f64;
        assert!((got - expected).abs() / expected < 1e-15);
    }
}
