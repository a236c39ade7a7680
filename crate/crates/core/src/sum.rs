//! Compensated (Neumaier) summation.
//!
//! Long runs of same-sign increments added onto an O(1) value lose about
//! one ulp per step in the same direction; over 10⁴ steps that alone exceeds
//! the 1e-12 exactness budget. Carrying the rounding error keeps every sum
//! accurate to a few ulps regardless of length.

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn new(initial: f64) -> Self {
        Self {
            sum: initial,
            compensation: 0.0,
        }
    }

    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_terms() {
        let mut s = CompensatedSum::default();
        for v in [1.0, 1e100, 1.0, -1e100] {
            s.add(v);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn repeated_increments_do_not_drift() {
        let dt = 1.0 / 4096.0 * 0.7;
        let mut naive = 2.2;
        let mut s = CompensatedSum::new(2.2);
        for _ in 0..4096 {
            naive += dt;
            s.add(dt);
        }
        let exact = 2.2 + 0.7;
        assert!((s.value() - exact).abs() <= 1e-15);
        assert!((naive - exact).abs() > (s.value() - exact).abs());
    }
}
