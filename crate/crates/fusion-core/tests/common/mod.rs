//! Shared test harness: seeded data generators and a central
//! finite-difference gradient checker, independent of the tape's backward
//! implementation.

#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha12Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Central finite-difference comparison of analytic gradients.
pub struct GradCheck {
    /// Perturbation step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub rel_tol: f64,
    /// Coordinates where both gradients are below this are skipped.
    pub skip_below: f64,
    /// Differences below the difference quotient's own cancellation noise
    /// (about eps*|f|/step) cannot be resolved and count as agreement.
    pub abs_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-3,
            rel_tol: 1e-4,
            skip_below: 1e-6,
            abs_floor: 0.0,
        }
    }
}

impl GradCheck {
    pub fn with_tol(rel_tol: f64) -> Self {
        GradCheck {
            rel_tol,
            ..Default::default()
        }
    }

    fn compare(&self, analytic: f64, numeric: f64, label: &str, var: usize, coord: usize) {
        if analytic.abs() <= self.skip_below && numeric.abs() <= self.skip_below {
            return;
        }
        if (analytic - numeric).abs() <= self.abs_floor {
            return;
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(
            rel < self.rel_tol,
            "{}: var {} coord {}: analytic {} vs numeric {} (rel {})",
            label,
            var,
            coord,
            analytic,
            numeric,
            rel
        );
    }

    /// Checks every coordinate of every variable. `forward` must recompute
    /// the scalar loss from the (possibly perturbed) variable values.
    pub fn check_all(
        &self,
        vars: &[Vec<f64>],
        analytic: &[Vec<f64>],
        mut forward: impl FnMut(&[Vec<f64>]) -> f64,
        label: &str,
    ) {
        let coords: Vec<Vec<usize>> = vars.iter().map(|v| (0..v.len()).collect()).collect();
        self.check_coords(vars, analytic, &coords, &mut forward, label);
    }

    /// Checks only the listed coordinates per variable (for large tensors).
    pub fn check_coords(
        &self,
        vars: &[Vec<f64>],
        analytic: &[Vec<f64>],
        coords: &[Vec<usize>],
        forward: &mut impl FnMut(&[Vec<f64>]) -> f64,
        label: &str,
    ) {
        assert_eq!(vars.len(), analytic.len());
        let mut work: Vec<Vec<f64>> = vars.to_vec();
        for (vi, coord_list) in coords.iter().enumerate() {
            assert_eq!(vars[vi].len(), analytic[vi].len(), "{}: var {}", label, vi);
            for &ci in coord_list {
                let orig = work[vi][ci];
                work[vi][ci] = orig + self.step;
                let plus = forward(&work);
                work[vi][ci] = orig - self.step;
                let minus = forward(&work);
                work[vi][ci] = orig;
                let numeric = (plus - minus) / (2.0 * self.step);
                self.compare(analytic[vi][ci], numeric, label, vi, ci);
            }
        }
    }
}

/// Draws `count` distinct coordinate samples from `0..len`.
pub fn sample_coords(rng: &mut ChaCha12Rng, len: usize, count: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..len).collect();
    all.shuffle(rng);
    all.truncate(count.min(len));
    all
}
