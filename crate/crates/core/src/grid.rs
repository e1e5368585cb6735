//! Uniform one-dimensional sampling grids and trapezoidal quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `q_min, q_min + Δ, ..., q_max` with `points` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub q_min: f64,
    pub q_max: f64,
    pub points: usize,
}

impl Grid1D {
    pub fn new(q_min: f64, q_max: f64, points: usize) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite()) || q_min >= q_max {
            return Err(Error::InvalidGrid(format!(
                "need finite q_min < q_max, got [{q_min}, {q_max}]"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {points}")));
        }
        Ok(Self { q_min, q_max, points })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, points)
    }

    /// The default `-5..5` grid with 100 points.
    pub fn standard() -> Self {
        Self { q_min: -5.0, q_max: 5.0, points: 100 }
    }

    pub fn spacing(&self) -> f64 {
        (self.q_max - self.q_min) / (self.points - 1) as f64
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.spacing()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }

    /// Trapezoid weights; `Σ wᵢ f(qᵢ)` approximates `∫ f dq`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.points];
        w[0] = 0.5 * h;
        w[self.points - 1] = 0.5 * h;
        w
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.points);
        let h = self.spacing();
        let n = f.len();
        let inner: f64 = f[1..n - 1].iter().sum();
        h * (inner + 0.5 * (f[0] + f[n - 1]))
    }

    /// Fractional index of `q`, or `None` outside `[q_min, q_max]`.
    #[inline]
    pub fn locate(&self, q: f64) -> Option<(usize, f64)> {
        let t = (q - self.q_min) / self.spacing();
        if !(t >= 0.0) || t > (self.points - 1) as f64 {
            return None;
        }
        let i = (t.floor() as usize).min(self.points - 2);
        Some((i, t - i as f64))
    }

    /// Bit-exact equality of the defining parameters.
    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.q_min.to_bits() == other.q_min.to_bits()
            && self.q_max.to_bits() == other.q_max.to_bits()
            && self.points == other.points
    }
}

impl Default for Grid1D {
    fn default() -> Self {
        Self::standard()
    }
}
