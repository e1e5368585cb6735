//! Position-representation wavefunctions and Fock expansions of the benchmark states.
//!
//! Conventions: ħ = 1, `q = (a + a†)/√2`, and a coherent amplitude `α`
//! sits at `(q₀, p₀) = √2·(Re α, Im α)` in phase space.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Highest photon number the Hermite recursion is trusted for.
pub const MAX_FOCK_ORDER: usize = 60;

/// A single-mode constructor is rejected when `|ψ|²` at either grid edge exceeds this.
pub const BOUNDARY_DENSITY_TOL: f64 = 1e-5;
/// Two-mode edges are checked against this looser bound (coarse grids).
pub const TWO_MODE_BOUNDARY_DENSITY_TOL: f64 = 1e-3;

const NORM_TOL: f64 = 1e-6;
const TWO_MODE_NORM_TOL: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Vacuum,
    Coherent,
    SqueezedVacuum,
    DisplacedSqueezed,
    Fock,
    Cat,
    TwoModeSqueezed,
}

impl StateKind {
    pub fn name(&self) -> &'static str {
        match self {
            StateKind::Vacuum => "vacuum",
            StateKind::Coherent => "coherent",
            StateKind::SqueezedVacuum => "squeezed_vacuum",
            StateKind::DisplacedSqueezed => "displaced_squeezed",
            StateKind::Fock => "fock",
            StateKind::Cat => "cat",
            StateKind::TwoModeSqueezed => "two_mode_squeezed",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, StateKind::Fock | StateKind::Cat)
    }
}

impl std::fmt::Display for StateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::UnsupportedKind(s.to_string()))
    }
}

/// Parameters of a benchmark state. Only the fields relevant to `kind` are read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub kind: StateKind,
    #[serde(default)]
    pub alpha_re: f64,
    #[serde(default)]
    pub alpha_im: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub cat_phase: f64,
}

impl StateSpec {
    fn base(kind: StateKind) -> Self {
        Self { kind, alpha_re: 0.0, alpha_im: 0.0, zeta: 0.0, n: 0, cat_phase: 0.0 }
    }

    pub fn vacuum() -> Self {
        Self::base(StateKind::Vacuum)
    }

    pub fn coherent(alpha: Complex64) -> Self {
        Self { alpha_re: alpha.re, alpha_im: alpha.im, ..Self::base(StateKind::Coherent) }
    }

    pub fn squeezed_vacuum(zeta: f64) -> Self {
        Self { zeta, ..Self::base(StateKind::SqueezedVacuum) }
    }

    pub fn displaced_squeezed(alpha: Complex64, zeta: f64) -> Self {
        Self {
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            zeta,
            ..Self::base(StateKind::DisplacedSqueezed)
        }
    }

    pub fn fock(n: usize) -> Self {
        Self { n, ..Self::base(StateKind::Fock) }
    }

    /// `N(|α⟩ + e^{iφ}|−α⟩)`; `cat_phase = 0` is the even cat.
    pub fn cat(alpha: Complex64, cat_phase: f64) -> Self {
        Self { alpha_re: alpha.re, alpha_im: alpha.im, cat_phase, ..Self::base(StateKind::Cat) }
    }

    pub fn two_mode_squeezed(zeta: f64) -> Self {
        Self { zeta, ..Self::base(StateKind::TwoModeSqueezed) }
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha_re, self.alpha_im)
    }

    /// Phase-space centre `(q₀, p₀)` of the displacement.
    pub fn displacement(&self) -> (f64, f64) {
        (2f64.sqrt() * self.alpha_re, 2f64.sqrt() * self.alpha_im)
    }

    fn check_order(&self) -> Result<()> {
        if self.kind == StateKind::Fock && self.n > MAX_FOCK_ORDER {
            return Err(Error::UnstableOrder { n: self.n, max: MAX_FOCK_ORDER });
        }
        Ok(())
    }

    /// Analytic single-mode amplitude `ψ(q)`.
    pub fn amplitude(&self, q: f64) -> Result<Complex64> {
        self.check_order()?;
        let (q0, p0) = self.displacement();
        Ok(match self.kind {
            StateKind::Vacuum => Complex64::new(PI.powf(-0.25) * (-0.5 * q * q).exp(), 0.0),
            StateKind::Coherent => gaussian_amplitude(q, q0, p0, 0.0),
            StateKind::SqueezedVacuum => gaussian_amplitude(q, 0.0, 0.0, self.zeta),
            StateKind::DisplacedSqueezed => gaussian_amplitude(q, q0, p0, self.zeta),
            StateKind::Fock => Complex64::new(hermite_functions(q, self.n)[self.n], 0.0),
            StateKind::Cat => {
                let norm = cat_normalization(self.alpha(), self.cat_phase);
                let plus = gaussian_amplitude(q, q0, p0, 0.0);
                let minus = gaussian_amplitude(q, -q0, -p0, 0.0);
                (plus + Complex64::from_polar(1.0, self.cat_phase) * minus) * norm
            }
            StateKind::TwoModeSqueezed => {
                return Err(Error::UnsupportedKind("two_mode_squeezed is a two-mode state".into()))
            }
        })
    }
}

/// `e^{ζ/2} π^{-1/4} exp[−e^{2ζ}(q−q₀)²/2 + i p₀ q − i p₀ q₀/2]`.
fn gaussian_amplitude(q: f64, q0: f64, p0: f64, zeta: f64) -> Complex64 {
    let s = (2.0 * zeta).exp();
    let d = q - q0;
    let modulus = (0.5 * zeta).exp() * PI.powf(-0.25) * (-0.5 * s * d * d).exp();
    Complex64::from_polar(modulus, p0 * q - 0.5 * p0 * q0)
}

fn cat_normalization(alpha: Complex64, phase: f64) -> f64 {
    let overlap = (-2.0 * alpha.norm_sqr()).exp();
    1.0 / (2.0 + 2.0 * phase.cos() * overlap).sqrt()
}

/// Normalized Hermite functions `ψ₀(x)..=ψ_{n_max}(x)` by the three-term recurrence
/// `ψ_{k+1} = √(2/(k+1)) x ψ_k − √(k/(k+1)) ψ_{k−1}`.
pub fn hermite_functions(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(PI.powf(-0.25) * (-0.5 * x * x).exp());
    if n_max >= 1 {
        out.push(2f64.sqrt() * x * out[0]);
    }
    for k in 1..n_max {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Sampled single-mode wavefunction.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
}

impl Wavefunction {
    pub fn mode_count(&self) -> usize {
        1
    }

    /// Trapezoidal `Σ|ψ|²Δq`.
    pub fn norm_sqr(&self) -> f64 {
        let dens: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        self.grid.integrate(&dens)
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Discrete inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &Wavefunction) -> Result<Complex64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("wavefunctions on different grids".into()));
        }
        let w = self.grid.trapezoid_weights();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(&w)
            .map(|((a, b), w)| a.conj() * b * *w)
            .sum())
    }
}

/// Sampled two-mode wavefunction, row-major in `(q₁, q₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction2 {
    pub grid1: Grid1D,
    pub grid2: Grid1D,
    pub values: Vec<Complex64>,
}

impl Wavefunction2 {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.grid2.points + j]
    }

    pub fn norm_sqr(&self) -> f64 {
        let w1 = self.grid1.trapezoid_weights();
        let w2 = self.grid2.trapezoid_weights();
        let mut s = 0.0;
        for (i, a) in w1.iter().enumerate() {
            for (j, b) in w2.iter().enumerate() {
                s += a * b * self.at(i, j).norm_sqr();
            }
        }
        s
    }
}

fn check_edges(values: &[Complex64]) -> Result<()> {
    let density = values[0].norm_sqr().max(values[values.len() - 1].norm_sqr());
    if density > BOUNDARY_DENSITY_TOL {
        return Err(Error::GridTooNarrow { density, threshold: BOUNDARY_DENSITY_TOL });
    }
    Ok(())
}

/// Sample a benchmark state on `grid`. Values are analytic and not renormalized;
/// the grid must hold the state (edge density and discrete norm are checked).
pub fn make_wavefunction(spec: &StateSpec, grid: &Grid1D) -> Result<Wavefunction> {
    spec.check_order()?;
    let values = match spec.kind {
        StateKind::Fock => {
            // one recursion per point instead of per (point, order)
            grid.values().iter().map(|&q| Complex64::new(hermite_functions(q, spec.n)[spec.n], 0.0)).collect()
        }
        _ => grid.values().iter().map(|&q| spec.amplitude(q)).collect::<Result<Vec<_>>>()?,
    };
    check_edges(&values)?;
    let psi = Wavefunction { grid: *grid, values };
    let norm = psi.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::GridTooCoarse { norm });
    }
    Ok(psi)
}

/// Fock amplitudes `cₙ = ⟨n|ψ⟩` for `n < dim`.
pub fn fock_coefficients(spec: &StateSpec, dim: usize) -> Result<Vec<Complex64>> {
    if dim == 0 {
        return Err(Error::DimensionMismatch("dim must be at least 1".into()));
    }
    let zero = Complex64::new(0.0, 0.0);
    match spec.kind {
        StateKind::Vacuum => {
            let mut c = vec![zero; dim];
            c[0] = Complex64::new(1.0, 0.0);
            Ok(c)
        }
        StateKind::Fock => {
            spec.check_order()?;
            let mut c = vec![zero; dim];
            if spec.n < dim {
                c[spec.n] = Complex64::new(1.0, 0.0);
            }
            Ok(c)
        }
        StateKind::Coherent => Ok(coherent_coefficients(spec.alpha(), dim)),
        StateKind::Cat => {
            let alpha = spec.alpha();
            let plus = coherent_coefficients(alpha, dim);
            let minus = coherent_coefficients(-alpha, dim);
            let norm = cat_normalization(alpha, spec.cat_phase);
            let phase = Complex64::from_polar(1.0, spec.cat_phase);
            Ok(plus.iter().zip(&minus).map(|(a, b)| (a + phase * b) * norm).collect())
        }
        other => Err(Error::UnsupportedKind(format!(
            "{other}: no Fock expansion, use the wavefunction path"
        ))),
    }
}

fn coherent_coefficients(alpha: Complex64, dim: usize) -> Vec<Complex64> {
    let mut c = Vec::with_capacity(dim);
    let mut cur = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        c.push(cur);
        cur = cur * alpha / ((n + 1) as f64).sqrt();
    }
    c
}

/// `ψ(q₁,q₂) = π^{-1/2} exp[−¼e^{2ζ}(q₁+q₂)² − ¼e^{−2ζ}(q₁−q₂)²]`.
pub fn two_mode_squeezed_amplitude(zeta: f64, q1: f64, q2: f64) -> f64 {
    let u = q1 + q2;
    let w = q1 - q2;
    (-0.25 * (2.0 * zeta).exp() * u * u - 0.25 * (-2.0 * zeta).exp() * w * w).exp() / PI.sqrt()
}

pub fn make_two_mode_squeezed(zeta: f64, grid1: &Grid1D, grid2: &Grid1D) -> Result<Wavefunction2> {
    if zeta.abs() > 2.0 {
        return Err(Error::InvalidConfig(format!("two-mode squeezing |zeta| = {} > 2", zeta.abs())));
    }
    let (g1, g2) = (grid1.values(), grid2.values());
    let mut values = Vec::with_capacity(g1.len() * g2.len());
    for &a in &g1 {
        for &b in &g2 {
            values.push(Complex64::new(two_mode_squeezed_amplitude(zeta, a, b), 0.0));
        }
    }
    let (n1, n2) = (g1.len(), g2.len());
    let mut edge: f64 = 0.0;
    for i in 0..n1 {
        edge = edge.max(values[i * n2].norm_sqr()).max(values[i * n2 + n2 - 1].norm_sqr());
    }
    for j in 0..n2 {
        edge = edge.max(values[j].norm_sqr()).max(values[(n1 - 1) * n2 + j].norm_sqr());
    }
    if edge > TWO_MODE_BOUNDARY_DENSITY_TOL {
        return Err(Error::GridTooNarrow { density: edge, threshold: TWO_MODE_BOUNDARY_DENSITY_TOL });
    }
    let psi = Wavefunction2 { grid1: *grid1, grid2: *grid2, values };
    let norm = psi.norm_sqr();
    if (norm - 1.0).abs() > TWO_MODE_NORM_TOL {
        return Err(Error::GridTooCoarse { norm });
    }
    Ok(psi)
}
