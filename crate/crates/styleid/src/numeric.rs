//! Small numeric helpers shared across modules.

/// Compensated (Kahan) accumulator. Loss reductions use it so central
/// finite differences of those losses stay resolvable at tight tolerances.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Logistic squashing to (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean squared error over two equally sized slices, compensated.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = KahanSum::new();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc.add(d * d);
    }
    acc.value() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_adversarial_sequence() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..10_000 {
            k.add(1e-16);
        }
        // Naive summation would return exactly 1.0 here.
        assert!((k.value() - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_basic_values() {
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(40.0) > 1.0 - 1e-15);
        assert!(sigmoid(-40.0) < 1e-15);
        // Symmetric: sigmoid(-x) = 1 - sigmoid(x).
        assert!((sigmoid(-1.3) + sigmoid(1.3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mse_of_identical_slices_is_zero() {
        let a = [0.3, 0.7, 0.1];
        assert_eq!(mse(&a, &a), 0.0);
        let b = [0.3, 0.7, 0.4];
        assert!((mse(&a, &b) - 0.09 / 3.0).abs() < 1e-15);
    }
}
