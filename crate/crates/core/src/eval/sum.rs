/// Exactly rounded floating-point summation (Shewchuk's partials).
///
/// The running sum is held as a list of non-overlapping partials, so the
/// value returned by [`ExactSum::value`] is the correctly rounded exact sum
/// and does not depend on insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // round-half-even correction when the tail sits exactly on a tie
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recovers_cancelled_terms() {
        let mut s = ExactSum::new();
        for v in [1e100, 1.0, -1e100, 1e-3] {
            s.add(v);
        }
        assert_eq!(s.value(), 1.001);
        let mut t = ExactSum::new();
        for _ in 0..10 {
            t.add(0.1);
        }
        assert_eq!(t.value(), 1.0);
    }

    proptest! {
        #[test]
        fn order_independent(mut xs in proptest::collection::vec(0.0..1.0f64, 0..200), seed in any::<u64>()) {
            let forward = xs.iter().fold(ExactSum::new(), |mut s, &x| { s.add(x); s });
            use rand::seq::SliceRandom;
            xs.shuffle(&mut crate::seed::rng(seed));
            let shuffled = xs.iter().fold(ExactSum::new(), |mut s, &x| { s.add(x); s });
            prop_assert_eq!(forward.value(), shuffled.value());
        }
    }
}
