//! Wigner functions, characteristic functions and phase-space integrals.
//!
//! The Wigner function of an operator `R` is evaluated as
//! `W_R(q,p) = (1/2π) ∫ ⟨q − v/2| R |q + v/2⟩ e^{ivp} dv`, so for a pure state the
//! integrand is `ψ(q − v/2) ψ*(q + v/2)`. The `v` integral is taken on the lattice
//! `v = 2kΔq`, which keeps both arguments on grid nodes and needs no interpolation.
//! All other integrals use the trapezoid rule.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, ProjectorBank};
use crate::grid::Grid1D;
use crate::states::{Wavefunction, Wavefunction2};

/// Largest axis length accepted by the two-mode routines.
pub const MAX_TWO_MODE_AXIS: usize = 32;

/// Imaginary parts above this abort a Wigner computation for a Hermitian input.
pub const REALNESS_TOL: f64 = 1e-9;

/// Real quasi-probability on a `(q, p)` grid, row-major with `q` as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub qgrid: Grid1D,
    pub pgrid: Grid1D,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Q,
    P,
}

impl WignerGrid {
    pub fn zeros(qgrid: Grid1D, pgrid: Grid1D) -> Self {
        Self { qgrid, pgrid, values: vec![0.0; qgrid.points * pgrid.points] }
    }

    /// Sample `f(q, p)` on the grid.
    pub fn from_fn(qgrid: Grid1D, pgrid: Grid1D, f: impl Fn(f64, f64) -> f64) -> Self {
        let (qs, ps) = (qgrid.values(), pgrid.values());
        let values = qs.iter().flat_map(|&q| ps.iter().map(move |&p| (q, p))).map(|(q, p)| f(q, p)).collect();
        Self { qgrid, pgrid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.pgrid.points + j]
    }

    pub fn same_grid(&self, other: &WignerGrid) -> bool {
        self.qgrid.same_as(&other.qgrid) && self.pgrid.same_as(&other.pgrid)
    }

    /// `Σᵢⱼ wᵢ wⱼ f(i, j)` with trapezoid weights.
    fn weighted_sum(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let wq = self.qgrid.trapezoid_weights();
        let wp = self.pgrid.trapezoid_weights();
        let mut total = 0.0;
        for (i, a) in wq.iter().enumerate() {
            let mut row = 0.0;
            for (j, b) in wp.iter().enumerate() {
                row += b * f(i, j);
            }
            total += a * row;
        }
        total
    }

    pub fn integral(&self) -> f64 {
        self.weighted_sum(|i, j| self.at(i, j))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multiply every value by `s`.
    pub fn scaled(mut self, s: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    pub fn max_abs_diff(&self, other: &WignerGrid) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("Wigner grids differ".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

/// `W(i, j) = (Δ/π) Σ_k ω_k L[c−k] conj(R[c+k]) e^{i 2kΔ p_j}` with `c = i + offset`.
///
/// `left` and `right` are samples on a lattice of spacing `Δ = qgrid.spacing()` whose
/// node `offset` coincides with `qgrid.q_min`. Terms with `|L||R| < cutoff` are skipped.
pub(crate) fn cross_wigner_lattice(
    left: &[Complex64],
    right: &[Complex64],
    offset: usize,
    qgrid: &Grid1D,
    pgrid: &Grid1D,
    cutoff: f64,
) -> Vec<Complex64> {
    let h = qgrid.spacing();
    let len = left.len();
    debug_assert_eq!(len, right.len());
    let ps = pgrid.values();
    let np = ps.len();
    let kmax_all = len;
    let phases = PhaseTable::new(kmax_all, h, &ps);
    let mut out = vec![Complex64::new(0.0, 0.0); qgrid.points * np];
    let mut acc = vec![Complex64::new(0.0, 0.0); np];
    let scale = h / PI;
    for i in 0..qgrid.points {
        let c = i + offset;
        let kmax = c.min(len - 1 - c);
        acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for k in 0..=kmax {
            let edge = if k == kmax && k > 0 { 0.5 } else { 1.0 };
            let plus = left[c - k] * right[c + k].conj();
            let minus = left[c + k] * right[c - k].conj();
            let (cp, cm) = (plus.norm() >= cutoff, minus.norm() >= cutoff && k > 0);
            if !cp && !cm {
                continue;
            }
            let (cos, sin) = phases.row(k);
            // e^{+iφ} for k, e^{−iφ} for −k
            for j in 0..np {
                let e = Complex64::new(cos[j], sin[j]);
                let mut term = Complex64::new(0.0, 0.0);
                if cp {
                    term += plus * e;
                }
                if cm {
                    term += minus * e.conj();
                }
                acc[j] += term * edge;
            }
        }
        for j in 0..np {
            out[i * np + j] = acc[j] * scale;
        }
    }
    out
}

/// `cos(2kΔp_j)`, `sin(2kΔp_j)` for `k < kmax`.
struct PhaseTable {
    np: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl PhaseTable {
    fn new(kmax: usize, h: f64, ps: &[f64]) -> Self {
        let np = ps.len();
        let mut cos = Vec::with_capacity(kmax * np);
        let mut sin = Vec::with_capacity(kmax * np);
        for k in 0..kmax {
            for &p in ps {
                let (s, c) = (2.0 * k as f64 * h * p).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Self { np, cos, sin }
    }

    #[inline]
    fn row(&self, k: usize) -> (&[f64], &[f64]) {
        let r = k * self.np..(k + 1) * self.np;
        (&self.cos[r.clone()], &self.sin[r])
    }
}

fn into_real(values: Vec<Complex64>) -> Result<Vec<f64>> {
    let residue = values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if residue > REALNESS_TOL {
        return Err(Error::DimensionMismatch(format!(
            "Wigner computation left an imaginary residue {residue:.3e}"
        )));
    }
    Ok(values.into_iter().map(|v| v.re).collect())
}

/// Complex Wigner values of `|ψ⟩⟨ψ|`, before the imaginary residue is dropped.
pub(crate) fn wigner_complex(psi: &Wavefunction, pgrid: &Grid1D) -> Vec<Complex64> {
    cross_wigner_lattice(&psi.values, &psi.values, 0, &psi.grid, pgrid, 0.0)
}

/// Wigner function of a pure state sampled on its own `q` grid.
pub fn wigner_from_wavefunction(psi: &Wavefunction, pgrid: &Grid1D) -> Result<WignerGrid> {
    let values = into_real(wigner_complex(psi, pgrid))?;
    Ok(WignerGrid { qgrid: psi.grid, pgrid: *pgrid, values })
}

/// `W = Σₘₙ ρₘₙ W[|m⟩⟨n|]` using a projector bank on the target grids.
pub fn wigner_from_density_with_bank(rho: &DensityMatrix, bank: &ProjectorBank) -> Result<WignerGrid> {
    if rho.dim() != bank.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density matrix has dim {}, projector bank has dim {}",
            rho.dim(),
            bank.dim()
        )));
    }
    let (qgrid, pgrid) = bank.grids();
    let npts = qgrid.points * pgrid.points;
    let mut acc = vec![0.0; npts];
    let d = rho.dim();
    for m in 0..d {
        let grid = bank.get(m, m);
        let r = rho.entry(m, m).re;
        for (a, w) in acc.iter_mut().zip(grid) {
            *a += r * w.re;
        }
        for n in m + 1..d {
            // ρₘₙ W[|m⟩⟨n|] + ρₙₘ W[|n⟩⟨m|] = 2 Re(ρₘₙ W[|m⟩⟨n|])
            let r = rho.entry(m, n);
            let grid = bank.get(m, n);
            for (a, w) in acc.iter_mut().zip(grid) {
                *a += 2.0 * (r * w).re;
            }
        }
    }
    Ok(WignerGrid { qgrid, pgrid, values: acc })
}

/// Builds a projector bank of the density matrix's dimension for the requested grids.
pub fn wigner_from_density(rho: &DensityMatrix, qgrid: &Grid1D, pgrid: &Grid1D) -> Result<WignerGrid> {
    let bank = ProjectorBank::build(rho.dim(), qgrid, pgrid)?;
    wigner_from_density_with_bank(rho, &bank)
}

/// Sampled characteristic function `W̃(u,v) = ∬ W(q,p) e^{−i(uq + vp)} dq dp`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicGrid {
    pub ugrid: Grid1D,
    pub vgrid: Grid1D,
    pub values: Vec<Complex64>,
}

impl CharacteristicGrid {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.vgrid.points + j]
    }
}

pub fn characteristic_from_wigner(w: &WignerGrid, ugrid: &Grid1D, vgrid: &Grid1D) -> CharacteristicGrid {
    let (qs, ps) = (w.qgrid.values(), w.pgrid.values());
    let (wq, wp) = (w.qgrid.trapezoid_weights(), w.pgrid.trapezoid_weights());
    let (us, vs) = (ugrid.values(), vgrid.values());
    let (nq, np, nu, nv) = (qs.len(), ps.len(), us.len(), vs.len());
    // A[i][l] = Σⱼ wpⱼ W(qᵢ,pⱼ) e^{−i vₗ pⱼ}
    let mut partial = vec![Complex64::new(0.0, 0.0); nq * nv];
    for (l, &v) in vs.iter().enumerate() {
        let kern: Vec<Complex64> = ps.iter().zip(&wp).map(|(&p, &b)| Complex64::from_polar(b, -v * p)).collect();
        for i in 0..nq {
            let row = &w.values[i * np..(i + 1) * np];
            partial[i * nv + l] = row.iter().zip(&kern).map(|(x, k)| k * *x).sum();
        }
    }
    let mut values = Vec::with_capacity(nu * nv);
    for &u in &us {
        let kern: Vec<Complex64> = qs.iter().zip(&wq).map(|(&q, &a)| Complex64::from_polar(a, -u * q)).collect();
        for l in 0..nv {
            values.push((0..nq).map(|i| kern[i] * partial[i * nv + l]).sum());
        }
    }
    CharacteristicGrid { ugrid: *ugrid, vgrid: *vgrid, values }
}

/// `∫W dp` (axis `Q`, indexed by q) or `∫W dq` (axis `P`, indexed by p).
pub fn marginal(w: &WignerGrid, axis: Axis) -> Vec<f64> {
    let (nq, np) = (w.qgrid.points, w.pgrid.points);
    match axis {
        Axis::Q => {
            let wp = w.pgrid.trapezoid_weights();
            (0..nq).map(|i| (0..np).map(|j| wp[j] * w.at(i, j)).sum()).collect()
        }
        Axis::P => {
            let wq = w.qgrid.trapezoid_weights();
            (0..np).map(|j| (0..nq).map(|i| wq[i] * w.at(i, j)).sum()).collect()
        }
    }
}

/// `Tr(ρρ') = 2π ∬ W_ρ W_ρ'`.
pub fn overlap(w1: &WignerGrid, w2: &WignerGrid) -> Result<f64> {
    if !w1.same_grid(w2) {
        return Err(Error::GridMismatch("overlap needs identical grids".into()));
    }
    Ok(2.0 * PI * w1.weighted_sum(|i, j| w1.at(i, j) * w2.at(i, j)))
}

pub fn purity(w: &WignerGrid) -> f64 {
    2.0 * PI * w.weighted_sum(|i, j| w.at(i, j).powi(2))
}

/// `∬ qᵐ pⁿ W dq dp`, the symmetrized moment `⟨(q̂ᵐp̂ⁿ)_sym⟩`.
pub fn wigner_moments(w: &WignerGrid, m: usize, n: usize) -> Result<f64> {
    if m + n > 4 {
        return Err(Error::OrderTooHigh(m + n));
    }
    let (qs, ps) = (w.qgrid.values(), w.pgrid.values());
    Ok(w.weighted_sum(|i, j| qs[i].powi(m as i32) * ps[j].powi(n as i32) * w.at(i, j)))
}

/// Two-mode Wigner function, index order `(q₁, p₁, q₂, p₂)` with `p₂` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid2 {
    pub q1: Grid1D,
    pub p1: Grid1D,
    pub q2: Grid1D,
    pub p2: Grid1D,
    pub values: Vec<f64>,
}

impl WignerGrid2 {
    pub fn zeros(q1: Grid1D, p1: Grid1D, q2: Grid1D, p2: Grid1D) -> Self {
        let n = q1.points * p1.points * q2.points * p2.points;
        Self { q1, p1, q2, p2, values: vec![0.0; n] }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.q1.points, self.p1.points, self.q2.points, self.p2.points]
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        let [_, n1, n2, n3] = self.shape();
        ((a * n1 + b) * n2 + c) * n3 + d
    }

    #[inline]
    pub fn at(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.values[self.index(a, b, c, d)]
    }

    pub fn grids(&self) -> [Grid1D; 4] {
        [self.q1, self.p1, self.q2, self.p2]
    }

    pub fn same_grid(&self, other: &WignerGrid2) -> bool {
        self.grids().iter().zip(other.grids().iter()).all(|(a, b)| a.same_as(b))
    }

    /// `Σ ω f(coords) W` over the 4-D grid with trapezoid weights.
    fn weighted_sum(&self, f: impl Fn([f64; 4], f64) -> f64) -> f64 {
        let gs = self.grids();
        let ws: Vec<Vec<f64>> = gs.iter().map(|g| g.trapezoid_weights()).collect();
        let xs: Vec<Vec<f64>> = gs.iter().map(|g| g.values()).collect();
        let [n0, n1, n2, n3] = self.shape();
        let mut total = 0.0;
        for a in 0..n0 {
            for b in 0..n1 {
                for c in 0..n2 {
                    for d in 0..n3 {
                        let wt = ws[0][a] * ws[1][b] * ws[2][c] * ws[3][d];
                        let x = [xs[0][a], xs[1][b], xs[2][c], xs[3][d]];
                        total += wt * f(x, self.at(a, b, c, d));
                    }
                }
            }
        }
        total
    }

    pub fn integral(&self) -> f64 {
        self.weighted_sum(|_, w| w)
    }

    /// First moments `dᵢ = ∫xᵢW` and raw second moments `Mᵢⱼ = ∫xᵢxⱼW` in `(q₁,p₁,q₂,p₂)` order.
    pub fn moments(&self) -> ([f64; 4], [[f64; 4]; 4]) {
        let mut d = [0.0; 4];
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            d[i] = self.weighted_sum(|x, w| x[i] * w);
            for j in i..4 {
                let v = self.weighted_sum(|x, w| x[i] * x[j] * w);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        (d, m)
    }

    /// Position density `∬ W dp₁ dp₂`, row-major in `(q₁, q₂)`.
    pub fn position_marginal(&self) -> Vec<f64> {
        let [n0, n1, n2, n3] = self.shape();
        let (w1, w3) = (self.p1.trapezoid_weights(), self.p2.trapezoid_weights());
        let mut out = vec![0.0; n0 * n2];
        for a in 0..n0 {
            for c in 0..n2 {
                let mut s = 0.0;
                for b in 0..n1 {
                    for d in 0..n3 {
                        s += w1[b] * w3[d] * self.at(a, b, c, d);
                    }
                }
                out[a * n2 + c] = s;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &WignerGrid2) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("two-mode Wigner grids differ".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

pub(crate) fn check_two_mode_axis(g: &Grid1D) -> Result<()> {
    if g.points > MAX_TWO_MODE_AXIS {
        return Err(Error::GridTooLarge(format!(
            "two-mode axes are limited to {MAX_TWO_MODE_AXIS} points, got {}",
            g.points
        )));
    }
    Ok(())
}

/// `Tr(ρρ') = (2π)² ∫ W W'` for two-mode grids.
pub fn overlap2(w1: &WignerGrid2, w2: &WignerGrid2) -> Result<f64> {
    if !w1.same_grid(w2) {
        return Err(Error::GridMismatch("overlap needs identical grids".into()));
    }
    let prod = WignerGrid2 {
        values: w1.values.iter().zip(&w2.values).map(|(a, b)| a * b).collect(),
        ..w1.clone()
    };
    let total = prod.integral();
    Ok(4.0 * PI * PI * total)
}

/// Two-mode Wigner function of a sampled `ψ(q₁,q₂)` on the lattice `vᵢ = 2kᵢΔᵢ`.
pub fn wigner_two_mode(psi: &Wavefunction2, p1grid: &Grid1D, p2grid: &Grid1D) -> Result<WignerGrid2> {
    for g in [&psi.grid1, &psi.grid2, p1grid, p2grid] {
        check_two_mode_axis(g)?;
    }
    let (n1, n2) = (psi.grid1.points, psi.grid2.points);
    let (h1, h2) = (psi.grid1.spacing(), psi.grid2.spacing());
    let (ps1, ps2) = (p1grid.values(), p2grid.values());
    let (m1, m2) = (ps1.len(), ps2.len());
    let mut out = WignerGrid2::zeros(psi.grid1, *p1grid, psi.grid2, *p2grid);
    let mut residue: f64 = 0.0;
    // e^{i 2kΔp} for signed k, stored at k + n
    let table = |n: usize, h: f64, ps: &[f64]| -> Vec<Complex64> {
        let mut t = Vec::with_capacity((2 * n + 1) * ps.len());
        for k in -(n as isize)..=(n as isize) {
            for &p in ps {
                t.push(Complex64::from_polar(1.0, 2.0 * k as f64 * h * p));
            }
        }
        t
    };
    let e1 = table(n1, h1, &ps1);
    let e2 = table(n2, h2, &ps2);
    let scale = (2.0 * h1) * (2.0 * h2) / (4.0 * PI * PI);
    let mut partial = vec![Complex64::new(0.0, 0.0); (2 * n1 + 1) * m2];
    for a in 0..n1 {
        let k1max = a.min(n1 - 1 - a) as isize;
        for c in 0..n2 {
            let k2max = c.min(n2 - 1 - c) as isize;
            partial.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for k1 in -k1max..=k1max {
                let w1 = if k1.abs() == k1max && k1max > 0 { 0.5 } else { 1.0 };
                let row = &mut partial[(k1 + n1 as isize) as usize * m2..][..m2];
                for k2 in -k2max..=k2max {
                    let w2 = if k2.abs() == k2max && k2max > 0 { 0.5 } else { 1.0 };
                    let lo = psi.at((a as isize - k1) as usize, (c as isize - k2) as usize);
                    let hi = psi.at((a as isize + k1) as usize, (c as isize + k2) as usize);
                    let coeff = lo * hi.conj() * (w1 * w2);
                    if coeff.norm() == 0.0 {
                        continue;
                    }
                    let ph = &e2[(k2 + n2 as isize) as usize * m2..][..m2];
                    for (r, e) in row.iter_mut().zip(ph) {
                        *r += coeff * e;
                    }
                }
            }
            for b in 0..m1 {
                for d in 0..m2 {
                    let mut s = Complex64::new(0.0, 0.0);
                    for k1 in -k1max..=k1max {
                        let ki = (k1 + n1 as isize) as usize;
                        s += partial[ki * m2 + d] * e1[ki * m1 + b];
                    }
                    let v = s * scale;
                    residue = residue.max(v.im.abs());
                    let idx = out.index(a, b, c, d);
                    out.values[idx] = v.re;
                }
            }
        }
    }
    if residue > REALNESS_TOL {
        return Err(Error::DimensionMismatch(format!("two-mode Wigner imaginary residue {residue:.3e}")));
    }
    Ok(out)
}

/// `((−1)ⁿ/π) e^{−q²−p²} Lₙ(2q² + 2p²)` with `Lₙ` from its three-term recurrence.
pub fn fock_wigner_closed_form(n: usize, q: f64, p: f64) -> f64 {
    let r2 = q * q + p * p;
    let x = 2.0 * r2;
    let (mut l0, mut l1) = (1.0, 1.0 - x);
    let ln = if n == 0 {
        l0
    } else {
        for k in 1..n {
            let kf = k as f64;
            let l2 = ((2.0 * kf + 1.0 - x) * l1 - kf * l0) / (kf + 1.0);
            l0 = l1;
            l1 = l2;
        }
        l1
    };
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign / PI * (-r2).exp() * ln
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{make_two_mode_squeezed, make_wavefunction, StateSpec};

    fn odd() -> Grid1D {
        Grid1D::symmetric(5.0, 101).unwrap()
    }

    fn wig(spec: StateSpec, g: Grid1D) -> WignerGrid {
        let psi = make_wavefunction(&spec, &g).unwrap();
        wigner_from_wavefunction(&psi, &g).unwrap()
    }

    #[test]
    fn vacuum_value_at_origin() {
        let w = wig(StateSpec::vacuum(), odd());
        assert!((w.at(50, 50) - 1.0 / PI).abs() < 1e-9);
        assert!((w.integral() - 1.0).abs() < 2e-3);
        assert!(w.max() <= 1.0 / PI + 2e-3);
    }

    #[test]
    fn fock_one_dips_negative() {
        let w = wig(StateSpec::fock(1), odd());
        assert!((w.at(50, 50) + 1.0 / PI).abs() < 1e-6);
    }

    #[test]
    fn realness_residue_is_tiny() {
        let g = Grid1D::symmetric(7.0, 141).unwrap();
        let specs = [
            StateSpec::coherent(Complex64::new(0.8, -1.1)),
            StateSpec::displaced_squeezed(Complex64::new(-0.5, 0.4), 0.4),
            StateSpec::cat(Complex64::new(1.2, 0.9), 0.6),
            StateSpec::fock(7),
        ];
        for s in specs {
            let psi = make_wavefunction(&s, &g).unwrap();
            let c = wigner_complex(&psi, &g);
            let res = c.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            assert!(res < 1e-9, "{:?}: {res}", s.kind);
        }
    }

    #[test]
    fn coherent_is_translated_vacuum() {
        // α = 1/√2 (1 + i) puts the centre on the node (1, 1) of a 0.1 grid
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let a = Complex64::new(1.0, 1.0) / 2f64.sqrt();
        let wc = wig(StateSpec::coherent(a), g);
        let wv = wig(StateSpec::vacuum(), g);
        let shift = 10;
        let mut err: f64 = 0.0;
        for i in shift..121 {
            for j in shift..121 {
                err = err.max((wc.at(i, j) - wv.at(i - shift, j - shift)).abs());
            }
        }
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn marginals_match_position_density() {
        let g = Grid1D::symmetric(8.0, 161).unwrap();
        let specs = [
            StateSpec::vacuum(),
            StateSpec::coherent(Complex64::new(1.0, 0.5)),
            StateSpec::squeezed_vacuum(0.5),
            StateSpec::displaced_squeezed(Complex64::new(0.5, -0.5), -0.3),
            StateSpec::fock(3),
            StateSpec::cat(Complex64::new(2.0, 0.0), 0.0),
        ];
        for s in specs {
            let psi = make_wavefunction(&s, &g).unwrap();
            let w = wigner_from_wavefunction(&psi, &g).unwrap();
            let mq = marginal(&w, Axis::Q);
            let dens = psi.density();
            let err = mq.iter().zip(&dens).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-3, "{:?}: {err}", s.kind);
            assert!((g.integrate(&mq) - 1.0).abs() < 2e-3);
            assert!(mq.iter().all(|&v| v > -1e-3));
        }
    }

    #[test]
    fn vacuum_marginal_at_zero() {
        let w = wig(StateSpec::vacuum(), odd());
        let m = marginal(&w, Axis::Q);
        assert!((m[50] - 0.5642).abs() < 1e-4);
        let mp = marginal(&w, Axis::P);
        assert!((mp[50] - 0.5642).abs() < 1e-4);
        let w1 = wig(StateSpec::fock(1), odd());
        let m1 = marginal(&w1, Axis::Q)[50];
        assert!(m1.abs() < 1e-6, "{m1}");
    }

    #[test]
    fn cat_marginal_has_two_peaks() {
        let g = Grid1D::symmetric(9.0, 181).unwrap();
        let w = wig(StateSpec::cat(Complex64::new(3.0, 0.0), 0.0), g);
        let m = marginal(&w, Axis::Q);
        let qs = g.values();
        let half = 90;
        let left = (0..half).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
        let right = (half + 1..181).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
        assert!((qs[left] + 4.243).abs() < 0.06, "{}", qs[left]);
        assert!((qs[right] - 4.243).abs() < 0.06, "{}", qs[right]);
        assert!(w.min() < -0.25);
    }

    #[test]
    fn overlaps() {
        let g = Grid1D::standard();
        let v = wig(StateSpec::vacuum(), g);
        let f1 = wig(StateSpec::fock(1), g);
        let c = wig(StateSpec::coherent(Complex64::new(1.0, 0.0)), g);
        assert!((overlap(&v, &v).unwrap() - 1.0).abs() < 2e-3);
        assert!(overlap(&v, &f1).unwrap().abs() < 2e-3);
        assert!((overlap(&v, &c).unwrap() - (-1f64).exp()).abs() < 2e-3);
        let other = WignerGrid::zeros(odd(), odd());
        assert!(matches!(overlap(&v, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn purity_of_pure_states() {
        let g = Grid1D::symmetric(7.0, 141).unwrap();
        for s in [StateSpec::vacuum(), StateSpec::fock(2), StateSpec::cat(Complex64::new(2.0, 0.0), 0.0)] {
            let p = purity(&wig(s, g));
            assert!(p <= 1.0 + 2e-3 && (p - 1.0).abs() < 2e-3, "{:?}: {p}", s.kind);
        }
    }

    #[test]
    fn moments() {
        let v = wig(StateSpec::vacuum(), Grid1D::standard());
        assert!((wigner_moments(&v, 2, 0).unwrap() - 0.5).abs() < 1e-6);
        assert!((wigner_moments(&v, 0, 0).unwrap() - 1.0).abs() < 1e-6);
        let c = wig(StateSpec::coherent(Complex64::new(1.0, 0.0)), Grid1D::standard());
        assert!((wigner_moments(&c, 1, 0).unwrap() - 2f64.sqrt()).abs() < 1e-5);
        assert!(matches!(wigner_moments(&c, 3, 2), Err(Error::OrderTooHigh(5))));
    }

    #[test]
    fn fock_closed_form_small_n() {
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        for n in 0..=5 {
            let w = wig(StateSpec::fock(n), g);
            let exact = WignerGrid::from_fn(g, g, |q, p| fock_wigner_closed_form(n, q, p));
            let err = w.max_abs_diff(&exact).unwrap();
            assert!(err < 1e-4, "n={n}: {err}");
        }
    }

    #[test]
    fn squeezing_law() {
        let g = Grid1D::symmetric(7.0, 141).unwrap();
        let z = 0.5f64;
        let w = wig(StateSpec::squeezed_vacuum(z), g);
        let exact = WignerGrid::from_fn(g, g, |q, p| {
            let (a, b) = (z.exp() * q, (-z).exp() * p);
            (-a * a - b * b).exp() / PI
        });
        assert!(w.max_abs_diff(&exact).unwrap() < 1e-4);
    }

    #[test]
    fn momentum_representation_oracle() {
        // W(q,p) = (1/2π) ∫ φ(p − u/2) φ*(p + u/2) e^{−iuq} du with φ the Fourier transform of ψ
        let g = Grid1D::symmetric(7.0, 141).unwrap();
        let spec = StateSpec::displaced_squeezed(Complex64::new(0.4, 0.7), 0.3);
        let psi = make_wavefunction(&spec, &g).unwrap();
        let w = wigner_from_wavefunction(&psi, &g).unwrap();
        let (qs, wq) = (g.values(), g.trapezoid_weights());
        let phi = |p: f64| -> Complex64 {
            qs.iter()
                .zip(&wq)
                .zip(&psi.values)
                .map(|((&q, &a), v)| v * Complex64::from_polar(a, -p * q))
                .sum::<Complex64>()
                / (2.0 * PI).sqrt()
        };
        let ug = Grid1D::symmetric(12.0, 481).unwrap();
        let (us, wu) = (ug.values(), ug.trapezoid_weights());
        for &(i, j) in &[(70usize, 70usize), (75, 80), (60, 85), (90, 62)] {
            let (q, p) = (qs[i], qs[j]);
            let s: Complex64 = us
                .iter()
                .zip(&wu)
                .map(|(&u, &a)| phi(p - u / 2.0) * phi(p + u / 2.0).conj() * Complex64::from_polar(a, -u * q))
                .sum::<Complex64>()
                / (2.0 * PI);
            assert!((s.re - w.at(i, j)).abs() < 1e-6, "({q},{p}): {} vs {}", s.re, w.at(i, j));
        }
    }

    #[test]
    fn characteristic_of_vacuum() {
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let w = wig(StateSpec::vacuum(), g);
        let ug = Grid1D::symmetric(3.0, 31).unwrap();
        let ch = characteristic_from_wigner(&w, &ug, &ug);
        assert!((ch.at(15, 15) - Complex64::new(1.0, 0.0)).norm() < 1e-6);
        // (u, v) = (1, 0)
        assert!((ch.at(20, 15).re - (-0.25f64).exp()).abs() < 1e-6);
        for i in 0..31 {
            for j in 0..31 {
                let (u, v) = (ug.value(i), ug.value(j));
                assert!((ch.at(i, j).re - (-(u * u + v * v) / 4.0).exp()).abs() < 1e-6);
                // Hermitian symmetry
                assert!((ch.at(30 - i, 30 - j) - ch.at(i, j).conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn displacement_is_a_pure_phase_of_the_characteristic() {
        let g = Grid1D::symmetric(7.0, 141).unwrap();
        let ug = Grid1D::symmetric(3.0, 25).unwrap();
        let cv = characteristic_from_wigner(&wig(StateSpec::vacuum(), g), &ug, &ug);
        let cc = characteristic_from_wigner(&wig(StateSpec::coherent(Complex64::new(0.9, -0.6)), g), &ug, &ug);
        for (a, b) in cv.values.iter().zip(&cc.values) {
            assert!((a.norm() - b.norm()).abs() < 1e-6);
        }
        let cat = characteristic_from_wigner(&wig(StateSpec::cat(Complex64::new(1.5, 0.0), 0.0), g), &ug, &ug);
        assert!((cat.at(12, 12).re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_mode_product_vacuum_factorizes() {
        let g = Grid1D::symmetric(3.4, 16).unwrap();
        let psi = make_two_mode_squeezed(0.0, &g, &g).unwrap();
        let w = wigner_two_mode(&psi, &g, &g).unwrap();
        let mut err: f64 = 0.0;
        for a in 0..16 {
            for b in 0..16 {
                for c in 0..16 {
                    for d in 0..16 {
                        let (q1, p1, q2, p2) = (g.value(a), g.value(b), g.value(c), g.value(d));
                        let exact = (-q1 * q1 - p1 * p1 - q2 * q2 - p2 * p2).exp() / (PI * PI);
                        err = err.max((w.at(a, b, c, d) - exact).abs());
                    }
                }
            }
        }
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn two_mode_normalization_and_marginal() {
        let g = Grid1D::symmetric(3.4, 16).unwrap();
        let psi = make_two_mode_squeezed(0.5, &g, &g).unwrap();
        let w = wigner_two_mode(&psi, &g, &g).unwrap();
        assert!((w.integral() - 1.0).abs() < 2e-2, "{}", w.integral());
        let m = w.position_marginal();
        for (a, b) in m.iter().zip(&psi.values) {
            assert!((a - b.norm_sqr()).abs() < 2e-2);
        }
        let p = overlap2(&w, &w).unwrap();
        assert!((p - 1.0).abs() < 5e-2, "{p}");
    }

    #[test]
    fn two_mode_axis_guard() {
        let g = Grid1D::symmetric(4.0, 33).unwrap();
        let small = Grid1D::symmetric(4.0, 8).unwrap();
        let psi = make_two_mode_squeezed(0.0, &small, &small).unwrap();
        assert!(matches!(wigner_two_mode(&psi, &g, &small), Err(Error::GridTooLarge(_))));
    }
}
