//! Finite-difference verification utilities for hand-derived gradients.
//!
//! Central differences can resolve a derivative only down to roughly
//! `eps^(2/3)` of the loss magnitude, so coordinate comparisons combine a
//! relative tolerance with a small absolute floor and skip entries whose
//! magnitude sits below the resolvable range. Directional derivatives are
//! O(1)-scaled and are checked with a pure relative tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Comparison settings for coordinate-wise checks.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Central-difference step (scaled by max(1, |x_i|)).
    pub step: f64,
    pub rel_tol: f64,
    /// Absolute floor covering finite-difference noise.
    pub abs_tol: f64,
    /// Entries where both analytic and numeric magnitudes fall below this
    /// are skipped: they are under the finite-difference noise floor.
    pub skip_below: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { step: 1e-5, rel_tol: 1e-4, abs_tol: 1e-9, skip_below: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Central difference of `f` along coordinate `i`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, step: f64) -> f64 {
    let h = step * x[i].abs().max(1.0);
    let mut buf = x.to_vec();
    buf[i] = x[i] + h;
    let fp = f(&buf);
    buf[i] = x[i] - h;
    let fm = f(&buf);
    (fp - fm) / (2.0 * h)
}

/// Compares an analytic gradient against central differences on the given
/// coordinates.
pub fn check_coordinates<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    tol: &Tolerances,
) -> Report {
    assert_eq!(x.len(), analytic.len());
    let mut report = Report { checked: 0, skipped: 0, max_rel_err: 0.0, failures: Vec::new() };
    for &i in coords {
        let numeric = central_diff(&f, x, i, tol.step);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale <= tol.skip_below {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let err = (analytic[i] - numeric).abs();
        let rel = err / scale;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
        }
        if err > tol.rel_tol * scale + tol.abs_tol {
            report.failures.push(format!(
                "coord {i}: analytic {} vs numeric {} (rel err {rel:.3e})",
                analytic[i], numeric
            ));
        }
    }
    report
}

/// Relative error between the analytic directional derivative along a
/// seeded random unit direction and its central-difference estimate.
pub fn directional_error<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    analytic: &[f64],
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm: f64 = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    for d in &mut dir {
        *d /= norm;
    }
    let analytic_dd: f64 = analytic.iter().zip(&dir).map(|(g, d)| g * d).sum();

    let h = 1e-5;
    let plus: Vec<f64> = x.iter().zip(&dir).map(|(v, d)| v + h * d).collect();
    let minus: Vec<f64> = x.iter().zip(&dir).map(|(v, d)| v - h * d).collect();
    let numeric_dd = (f(&plus) - f(&minus)) / (2.0 * h);

    let scale = analytic_dd.abs().max(numeric_dd.abs()).max(1e-12);
    (analytic_dd - numeric_dd).abs() / scale
}

/// Deterministic coordinate subset for spot checks on large vectors.
pub fn subset(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < count {
        picked.insert(rng.gen_range(0..len));
    }
    picked.into_iter().collect()
}
