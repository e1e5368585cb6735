//! Truncated Fock-basis density matrices extracted from Wigner grids.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::phase_space::{cross_wigner_lattice, WignerGrid};
use crate::states::{hermite_functions, StateKind, StateSpec};

/// Largest projector bank the library will build.
pub const MAX_BANK_DIM: usize = 40;

/// Skip lattice products smaller than this when building projector Wigner grids.
const BANK_PRODUCT_CUTOFF: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Exact,
    Fbp,
    Estimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMeta {
    pub source: Source,
    pub trace: f64,
    pub min_eig: f64,
}

/// Complex `dim × dim` matrix in the Fock basis, `entry(m, n) = ⟨m|ρ|n⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
    pub meta: DensityMeta,
}

impl DensityMatrix {
    /// Hermitizes `entries` and records trace and smallest eigenvalue.
    pub fn new(entries: DMatrix<Complex64>, source: Source) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let entries = hermitize(&entries);
        let meta = DensityMeta { source, trace: real_trace(&entries), min_eig: min_eigenvalue(&entries) };
        Ok(Self { entries, meta })
    }

    /// `|ψ⟩⟨ψ|` for Fock amplitudes `c` (used as given, not renormalized).
    pub fn from_pure(c: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(c);
        Self::new(&v * v.adjoint(), Source::Exact)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0), Source::Exact)
    }

    pub fn diagonal(diag: &[f64], source: Source) -> Result<Self> {
        let d = diag.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Self::new(m, source)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        self.entries[(m, n)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        real_trace(&self.entries)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.entries.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).collect()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.entries.iter().zip(other.entries.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    for i in 0..h.nrows() {
        h[(i, i)].im = 0.0;
    }
    // exact symmetry: mirror the upper triangle
    for i in 0..h.nrows() {
        for j in i + 1..h.ncols() {
            h[(j, i)] = h[(i, j)].conj();
        }
    }
    h
}

fn real_trace(m: &DMatrix<Complex64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

pub(crate) fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Wigner grids of the operators `|m⟩⟨n|`, `m ≤ n`, on fixed `(q, p)` grids.
#[derive(Debug, Clone)]
pub struct ProjectorBank {
    dim: usize,
    qgrid: Grid1D,
    pgrid: Grid1D,
    /// upper triangle, row-major in `(m, n)`
    wigners: Vec<Vec<Complex64>>,
}

impl ProjectorBank {
    /// Hermite functions are evaluated analytically on a lattice extended past the grid,
    /// so the `v` integral is not truncated by the output window.
    pub fn build(dim: usize, qgrid: &Grid1D, pgrid: &Grid1D) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("projector bank needs dim >= 1".into()));
        }
        if dim > MAX_BANK_DIM {
            return Err(Error::DimTooLarge { dim, max: MAX_BANK_DIM });
        }
        let h = qgrid.spacing();
        let reach = (2.0 * dim as f64 + 1.0).sqrt() + 6.0;
        let lo = ((qgrid.q_min + reach) / h).ceil().max(0.0) as usize;
        let hi = ((reach - qgrid.q_max) / h).ceil().max(0.0) as usize;
        let len = lo + qgrid.points + hi;
        let lattice: Vec<Vec<f64>> =
            (0..len).map(|l| hermite_functions(qgrid.q_min + (l as f64 - lo as f64) * h, dim - 1)).collect();
        let column = |n: usize| -> Vec<Complex64> { lattice.iter().map(|v| Complex64::new(v[n], 0.0)).collect() };
        let columns: Vec<Vec<Complex64>> = (0..dim).map(column).collect();
        let mut wigners = Vec::with_capacity(dim * (dim + 1) / 2);
        for m in 0..dim {
            for n in m..dim {
                wigners.push(cross_wigner_lattice(&columns[m], &columns[n], lo, qgrid, pgrid, BANK_PRODUCT_CUTOFF));
            }
        }
        Ok(Self { dim, qgrid: *qgrid, pgrid: *pgrid, wigners })
    }

    /// Load from `cache_dir` when a matching file exists, otherwise build and store it.
    pub fn load_or_build(dim: usize, qgrid: &Grid1D, pgrid: &Grid1D, cache_dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = cache_dir else {
            return Self::build(dim, qgrid, pgrid);
        };
        let path = dir.join(crate::io::bank_cache_file_name(dim, qgrid, pgrid));
        if path.exists() {
            if let Ok(bank) = crate::io::read_bank(&path) {
                if bank.dim == dim && bank.qgrid.same_as(qgrid) && bank.pgrid.same_as(pgrid) {
                    return Ok(bank);
                }
            }
        }
        let bank = Self::build(dim, qgrid, pgrid)?;
        std::fs::create_dir_all(dir)?;
        crate::io::write_bank(&path, &bank)?;
        Ok(bank)
    }

    pub(crate) fn from_parts(dim: usize, qgrid: Grid1D, pgrid: Grid1D, wigners: Vec<Vec<Complex64>>) -> Result<Self> {
        let npts = qgrid.points * pgrid.points;
        if wigners.len() != dim * (dim + 1) / 2 || wigners.iter().any(|w| w.len() != npts) {
            return Err(Error::BadFile("projector bank payload has the wrong shape".into()));
        }
        Ok(Self { dim, qgrid, pgrid, wigners })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grids(&self) -> (Grid1D, Grid1D) {
        (self.qgrid, self.pgrid)
    }

    fn slot(&self, m: usize, n: usize) -> usize {
        debug_assert!(m <= n && n < self.dim);
        m * self.dim - m * (m + 1) / 2 + n
    }

    /// `W[|m⟩⟨n|]` for `m ≤ n`.
    pub fn get(&self, m: usize, n: usize) -> &[Complex64] {
        assert!(m <= n, "projector bank stores the upper triangle only");
        &self.wigners[self.slot(m, n)]
    }

    /// `W[|m⟩⟨n|]` for any ordering; `W[|n⟩⟨m|] = conj(W[|m⟩⟨n|])`.
    pub fn wigner_of(&self, m: usize, n: usize) -> Vec<Complex64> {
        if m <= n {
            self.get(m, n).to_vec()
        } else {
            self.get(n, m).iter().map(|v| v.conj()).collect()
        }
    }

    pub(crate) fn raw(&self) -> &[Vec<Complex64>] {
        &self.wigners
    }
}

/// `ρₘₙ = Tr(ρ|n⟩⟨m|) = 2π ∬ W · W[|n⟩⟨m|]`, hermitized. Unphysical results are kept as is.
pub fn density_from_wigner(w: &WignerGrid, bank: &ProjectorBank, source: Source) -> Result<DensityMatrix> {
    if !w.qgrid.same_as(&bank.qgrid) || !w.pgrid.same_as(&bank.pgrid) {
        return Err(Error::GridMismatch("Wigner grid and projector bank grids differ".into()));
    }
    let wq = w.qgrid.trapezoid_weights();
    let wp = w.pgrid.trapezoid_weights();
    let np = wp.len();
    let weighted: Vec<f64> = w.values.iter().enumerate().map(|(k, v)| v * wq[k / np] * wp[k % np]).collect();
    let d = bank.dim;
    let mut m = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let grid = bank.get(a, b);
            let s: Complex64 = weighted.iter().zip(grid).map(|(x, g)| g.conj() * *x).sum();
            let v = s * (2.0 * PI);
            m[(a, b)] = v;
            m[(b, a)] = v.conj();
        }
    }
    DensityMatrix::new(m, source)
}

/// Smallest `dim` with Fock tail mass `Σ_{n≥dim} |cₙ|² < tol`.
pub fn choose_truncation(spec: &StateSpec, tol: f64) -> Result<usize> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidConfig(format!("truncation tolerance must lie in (0,1), got {tol}")));
    }
    let weight = |n: usize| -> f64 {
        let a2 = spec.alpha().norm_sqr();
        // Poisson weight e^{−|α|²}|α|^{2n}/n! in log space
        let log_p = if a2 == 0.0 {
            if n == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            -a2 + n as f64 * a2.ln() - ln_factorial(n)
        };
        log_p.exp()
    };
    let probs: Box<dyn Fn(usize) -> f64> = match spec.kind {
        StateKind::Vacuum => return Ok(1),
        StateKind::Fock => return Ok(spec.n + 1),
        StateKind::Coherent => Box::new(weight),
        StateKind::Cat => {
            let a2 = spec.alpha().norm_sqr();
            let norm2 = 1.0 / (2.0 + 2.0 * spec.cat_phase.cos() * (-2.0 * a2).exp());
            let phi = spec.cat_phase;
            Box::new(move |n: usize| {
                let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
                let inter = (Complex64::new(1.0, 0.0) + Complex64::from_polar(sign, phi)).norm_sqr();
                norm2 * weight(n) * inter
            })
        }
        other => {
            return Err(Error::UnsupportedKind(format!(
                "{other}: no closed-form Fock decay, supply the dimension explicitly"
            )))
        }
    };
    let a2 = spec.alpha().norm_sqr();
    let n_end = (a2 + 20.0 * (a2.sqrt() + 1.0) + 60.0).ceil() as usize;
    let mut tail = 0.0;
    let mut tails = vec![0.0; n_end + 1];
    for n in (0..n_end).rev() {
        tail += probs(n);
        tails[n] = tail;
    }
    (1..=n_end)
        .find(|&d| tails[d] < tol)
        .ok_or_else(|| Error::InvalidConfig("truncation search exceeded its range".into()))
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

pub enum Target<'a> {
    Pure(&'a [Complex64]),
    Mixed(&'a DensityMatrix),
}

/// Fidelity with a target state, clamped to `[0, 1]`.
///
/// Pure targets give `⟨ψ|ρ|ψ⟩` with `ψ` normalized; mixed targets use the Uhlmann
/// form `(Tr √(√ρ σ √ρ))²`, with negative eigenvalues of `ρ` clipped at zero.
pub fn fidelity(rho: &DensityMatrix, target: Target<'_>) -> Result<f64> {
    let d = rho.dim();
    let f = match target {
        Target::Pure(c) => {
            if c.len() != d {
                return Err(Error::DimensionMismatch(format!("target has dim {}, rho has dim {d}", c.len())));
            }
            let v = nalgebra::DVector::from_column_slice(c);
            let nrm = v.norm();
            if nrm == 0.0 {
                return Err(Error::DimensionMismatch("zero target vector".into()));
            }
            let v = v.unscale(nrm);
            (v.adjoint() * rho.matrix() * &v)[(0, 0)].re
        }
        Target::Mixed(sigma) => {
            if sigma.dim() != d {
                return Err(Error::DimensionMismatch(format!("target has dim {}, rho has dim {d}", sigma.dim())));
            }
            let sqrt_rho = psd_sqrt(rho.matrix());
            let inner = hermitize(&(&sqrt_rho * sigma.matrix() * &sqrt_rho));
            let s: f64 = inner.symmetric_eigen().eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
            s * s
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

fn psd_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = m.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = m.nrows();
    let mut s = DMatrix::zeros(d, d);
    for k in 0..d {
        let l = eig.eigenvalues[k].max(0.0).sqrt();
        for i in 0..d {
            for j in 0..d {
                s[(i, j)] += v[(i, k)] * v[(j, k)].conj() * l;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{wigner_from_density_with_bank, wigner_from_wavefunction};
    use crate::states::{fock_coefficients, make_wavefunction};

    fn exact_wigner(spec: StateSpec, g: Grid1D) -> WignerGrid {
        wigner_from_wavefunction(&make_wavefunction(&spec, &g).unwrap(), &g).unwrap()
    }

    #[test]
    fn bank_dim_one_is_vacuum() {
        let g = Grid1D::standard();
        let bank = ProjectorBank::build(1, &g, &g).unwrap();
        let vac = exact_wigner(StateSpec::vacuum(), g);
        let err = bank.get(0, 0).iter().zip(&vac.values).map(|(a, b)| (a.re - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn bank_values_and_symmetry() {
        let g = Grid1D::symmetric(5.0, 101).unwrap();
        let bank = ProjectorBank::build(5, &g, &g).unwrap();
        let w11 = bank.get(1, 1);
        assert!((w11[50 * 101 + 50].re + 1.0 / PI).abs() < 1e-9);
        for m in 0..5 {
            assert!(bank.get(m, m).iter().all(|v| v.im.abs() < 1e-12));
            for n in 0..5 {
                let a = bank.wigner_of(m, n);
                let b = bank.wigner_of(n, m);
                let err = a.iter().zip(&b).map(|(x, y)| (x - y.conj()).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12);
            }
        }
    }

    #[test]
    fn bank_guards() {
        let g = Grid1D::standard();
        assert!(matches!(ProjectorBank::build(41, &g, &g), Err(Error::DimTooLarge { .. })));
        let bank = ProjectorBank::build(2, &g, &g).unwrap();
        let other = WignerGrid::zeros(Grid1D::symmetric(5.0, 101).unwrap(), g);
        assert!(matches!(density_from_wigner(&other, &bank, Source::Fbp), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn fock_two_extraction() {
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let bank = ProjectorBank::build(6, &g, &g).unwrap();
        let rho = density_from_wigner(&exact_wigner(StateSpec::fock(2), g), &bank, Source::Exact).unwrap();
        for m in 0..6 {
            for n in 0..6 {
                let t = if m == 2 && n == 2 { 1.0 } else { 0.0 };
                assert!((rho.entry(m, n) - Complex64::new(t, 0.0)).norm() < 1e-3);
            }
        }
    }

    #[test]
    fn complex_coherent_phases() {
        // off-diagonal phases pin the ρₘₙ = c_m c_n* convention
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let spec = StateSpec::coherent(Complex64::new(0.6, 0.5));
        let bank = ProjectorBank::build(8, &g, &g).unwrap();
        let rho = density_from_wigner(&exact_wigner(spec, g), &bank, Source::Exact).unwrap();
        let c = fock_coefficients(&spec, 8).unwrap();
        for m in 0..8 {
            for n in 0..8 {
                assert!((rho.entry(m, n) - c[m] * c[n].conj()).norm() < 1e-4, "({m},{n})");
            }
        }
        assert!((rho.meta.trace - 1.0).abs() < 2e-3);
    }

    #[test]
    fn round_trip_through_wigner() {
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let bank = ProjectorBank::build(8, &g, &g).unwrap();
        let c = fock_coefficients(&StateSpec::cat(Complex64::new(1.0, 0.4), 0.3), 8).unwrap();
        let rho = DensityMatrix::from_pure(&c).unwrap();
        let w = wigner_from_density_with_bank(&rho, &bank).unwrap();
        let back = density_from_wigner(&w, &bank, Source::Exact).unwrap();
        assert!(back.max_abs_diff(&rho) < 1e-3);
        assert_eq!(back.matrix(), &back.matrix().adjoint());
    }

    #[test]
    fn mixed_state_wigner_at_origin() {
        let g = Grid1D::symmetric(5.0, 101).unwrap();
        let bank = ProjectorBank::build(3, &g, &g).unwrap();
        let rho = DensityMatrix::diagonal(&[0.5, 0.5, 0.0], Source::Exact).unwrap();
        let w = wigner_from_density_with_bank(&rho, &bank).unwrap();
        assert!(w.at(50, 50).abs() < 1e-9);
        let rho2 = DensityMatrix::diagonal(&[0.0, 0.0, 1.0], Source::Exact).unwrap();
        let w2 = wigner_from_density_with_bank(&rho2, &bank).unwrap();
        assert!((w2.at(50, 50) - 1.0 / PI).abs() < 1e-9);
        let vac = DensityMatrix::diagonal(&[1.0, 0.0, 0.0], Source::Exact).unwrap();
        let wv = wigner_from_density_with_bank(&vac, &bank).unwrap();
        assert!(wv.max_abs_diff(&exact_wigner(StateSpec::vacuum(), g)).unwrap() < 1e-6);
    }

    #[test]
    fn even_cat_parity_in_extraction() {
        let g = Grid1D::symmetric(7.0, 141).unwrap();
        let bank = ProjectorBank::build(12, &g, &g).unwrap();
        let w = exact_wigner(StateSpec::cat(Complex64::new(1.5, 0.0), 0.0), g);
        let rho = density_from_wigner(&w, &bank, Source::Exact).unwrap();
        for m in 0..12 {
            for n in 0..12 {
                if m % 2 == 1 || n % 2 == 1 {
                    assert!(rho.entry(m, n).norm() < 1e-3);
                }
            }
        }
    }

    fn poisson_tail(a2: f64, d: usize) -> f64 {
        // brute force: 1 − Σ_{n<d} computed in extended terms, summed from the top
        let mut terms = Vec::new();
        let mut t = (-a2).exp();
        for n in 0..200 {
            terms.push(t);
            t *= a2 / (n + 1) as f64;
        }
        terms[d..].iter().rev().sum()
    }

    #[test]
    fn truncation_rules() {
        let d1 = choose_truncation(&StateSpec::coherent(Complex64::new(1.0, 0.0)), 1e-8).unwrap();
        assert_eq!(d1, 12);
        assert!(poisson_tail(1.0, 12) < 1e-8 && poisson_tail(1.0, 11) >= 1e-8);
        let d3 = choose_truncation(&StateSpec::coherent(Complex64::new(3.0, 0.0)), 1e-8).unwrap();
        assert!(d3 > d1);
        assert!(poisson_tail(9.0, d3) < 1e-8 && poisson_tail(9.0, d3 - 1) >= 1e-8);
        assert_eq!(choose_truncation(&StateSpec::fock(4), 1e-8).unwrap(), 5);
        assert_eq!(choose_truncation(&StateSpec::vacuum(), 1e-8).unwrap(), 1);
        assert!(matches!(
            choose_truncation(&StateSpec::squeezed_vacuum(0.2), 1e-8),
            Err(Error::UnsupportedKind(_))
        ));
        let dc = choose_truncation(&StateSpec::cat(Complex64::new(2.0, 0.0), 0.0), 1e-8).unwrap();
        let c = fock_coefficients(&StateSpec::cat(Complex64::new(2.0, 0.0), 0.0), 80).unwrap();
        let tail: f64 = c[dc..].iter().map(|v| v.norm_sqr()).sum();
        let tail_prev: f64 = c[dc - 1..].iter().map(|v| v.norm_sqr()).sum();
        assert!(tail < 1e-8 && tail_prev >= 1e-8);
    }

    #[test]
    fn fidelity_cases() {
        let c = fock_coefficients(&StateSpec::coherent(Complex64::new(0.5, 0.2)), 10).unwrap();
        let rho = DensityMatrix::from_pure(&c).unwrap();
        assert!((fidelity(&rho, Target::Pure(&c)).unwrap() - 1.0).abs() < 1e-6);
        assert!((fidelity(&rho, Target::Mixed(&rho)).unwrap() - 1.0).abs() < 1e-6);
        let zero = DensityMatrix::diagonal(&[1.0, 0.0], Source::Exact).unwrap();
        let one = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(fidelity(&zero, Target::Pure(&one)).unwrap().abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        let vac = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!((fidelity(&mixed, Target::Pure(&vac)).unwrap() - 0.5).abs() < 1e-12);
        assert!((fidelity(&mixed, Target::Mixed(&zero)).unwrap() - 0.5).abs() < 1e-9);
        assert!(matches!(fidelity(&mixed, Target::Pure(&c)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn json_shape() {
        let rho = DensityMatrix::maximally_mixed(3).unwrap();
        let text = crate::io::density_to_json(&rho).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["dim"], 3);
        assert!(v["re"].is_array() && v["im"].is_array() && v["meta"]["source"] == "exact");
        let back = crate::io::density_from_json(&text).unwrap();
        assert_eq!(back, rho);
    }
}
