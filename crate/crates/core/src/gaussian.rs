//! Covariance-matrix calculus for Gaussian states and partial-transpose tests.
//!
//! Quadratures are ordered `(q₁, p₁, q₂, p₂, ...)`, and the vacuum has `γ = I`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{min_eigenvalue, DensityMatrix};
use crate::phase_space::{WignerGrid, WignerGrid2};
use crate::states::{StateKind, StateSpec};

/// Tolerance on the smallest eigenvalue of `γ + iσ`.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Symplectic eigenvalues below `1 − PPT_TOL` signal entanglement.
pub const PPT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    pub n_modes: usize,
    pub matrix: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn new(n_modes: usize) -> Self {
        let mut m = DMatrix::zeros(2 * n_modes, 2 * n_modes);
        for k in 0..n_modes {
            m[(2 * k, 2 * k + 1)] = 1.0;
            m[(2 * k + 1, 2 * k)] = -1.0;
        }
        Self { n_modes, matrix: m }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState {
    pub n_modes: usize,
    pub d: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
}

impl CovarianceState {
    pub fn new(d: Vec<f64>, gamma: DMatrix<f64>) -> Result<Self> {
        let n = d.len();
        if n == 0 || !n.is_multiple_of(2) || gamma.nrows() != n || gamma.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "need an even-length d with a matching square gamma, got {n} and {}x{}",
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        let sym = (&gamma + gamma.transpose()) * 0.5;
        let rows = (0..n).map(|i| (0..n).map(|j| sym[(i, j)]).collect()).collect();
        Ok(Self { n_modes: n / 2, d, gamma: rows })
    }

    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        let n = 2 * self.n_modes;
        DMatrix::from_fn(n, n, |i, j| self.gamma[i][j])
    }

    /// Product state `self ⊕ other`.
    pub fn direct_sum(&self, other: &CovarianceState) -> CovarianceState {
        let (a, b) = (2 * self.n_modes, 2 * other.n_modes);
        let (ga, gb) = (self.gamma_matrix(), other.gamma_matrix());
        let g = DMatrix::from_fn(a + b, a + b, |i, j| match (i < a, j < a) {
            (true, true) => ga[(i, j)],
            (false, false) => gb[(i - a, j - a)],
            _ => 0.0,
        });
        let d = self.d.iter().chain(&other.d).copied().collect();
        CovarianceState::new(d, g).expect("shapes agree by construction")
    }
}

/// Closed-form moments of the Gaussian constructors.
pub fn covariance_of(spec: &StateSpec) -> Result<CovarianceState> {
    let single = |zeta: f64| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![(-2.0 * zeta).exp(), (2.0 * zeta).exp()]));
    let (q0, p0) = spec.displacement();
    match spec.kind {
        StateKind::Vacuum => CovarianceState::new(vec![0.0, 0.0], DMatrix::identity(2, 2)),
        StateKind::Coherent => CovarianceState::new(vec![q0, p0], DMatrix::identity(2, 2)),
        StateKind::SqueezedVacuum => CovarianceState::new(vec![0.0, 0.0], single(spec.zeta)),
        StateKind::DisplacedSqueezed => CovarianceState::new(vec![q0, p0], single(spec.zeta)),
        StateKind::TwoModeSqueezed => {
            let (c, s) = ((2.0 * spec.zeta).cosh(), (2.0 * spec.zeta).sinh());
            // ψ ∝ exp[−¼e^{2ζ}(q₁+q₂)² − ¼e^{−2ζ}(q₁−q₂)²]: positions anti-correlate, momenta correlate
            let g = DMatrix::from_row_slice(4, 4, &[c, 0.0, -s, 0.0, 0.0, c, 0.0, s, -s, 0.0, c, 0.0, 0.0, s, 0.0, c]);
            CovarianceState::new(vec![0.0; 4], g)
        }
        other => Err(Error::NotGaussian(other.to_string())),
    }
}

fn covariance_from_moments(n: usize, total: f64, first: &[f64], second: &[Vec<f64>]) -> CovarianceState {
    let d: Vec<f64> = first.iter().map(|m| m / total).collect();
    let g = DMatrix::from_fn(n, n, |i, j| 2.0 * (second[i][j] / total - d[i] * d[j]));
    CovarianceState::new(d, g).expect("moment arrays have matching shapes")
}

/// `d` from first moments, `γ` as twice the centred second moments.
pub fn covariance_from_wigner(w: &WignerGrid) -> CovarianceState {
    let (qs, ps) = (w.qgrid.values(), w.pgrid.values());
    let (wq, wp) = (w.qgrid.trapezoid_weights(), w.pgrid.trapezoid_weights());
    let mut m0 = 0.0;
    let mut m1 = [0.0; 2];
    let mut m2 = vec![vec![0.0; 2]; 2];
    for (i, q) in qs.iter().enumerate() {
        for (j, p) in ps.iter().enumerate() {
            let v = wq[i] * wp[j] * w.at(i, j);
            let x = [*q, *p];
            m0 += v;
            for a in 0..2 {
                m1[a] += x[a] * v;
                for b in 0..2 {
                    m2[a][b] += x[a] * x[b] * v;
                }
            }
        }
    }
    covariance_from_moments(2, m0, &m1, &m2)
}

pub fn covariance_from_wigner2(w: &WignerGrid2) -> CovarianceState {
    let total = w.integral();
    let (first, second) = w.moments();
    let second: Vec<Vec<f64>> = second.iter().map(|r| r.to_vec()).collect();
    covariance_from_moments(4, total, &first, &second)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physicality {
    pub physical: bool,
    /// smallest eigenvalue of `γ + iσ`
    pub min_eig: f64,
}

pub fn is_physical(cs: &CovarianceState) -> Physicality {
    let n = 2 * cs.n_modes;
    let g = cs.gamma_matrix();
    let sigma = SymplecticForm::new(cs.n_modes).matrix;
    let h = DMatrix::from_fn(n, n, |i, j| Complex64::new(g[(i, j)], sigma[(i, j)]));
    let min_eig = min_eigenvalue(&h);
    Physicality { physical: min_eig >= -PHYSICALITY_TOL, min_eig }
}

fn check_partition(n_modes: usize, part: &[usize]) -> Result<()> {
    if part.is_empty() || part.len() >= n_modes {
        return Err(Error::BadPartition(format!(
            "need 1 <= |part| < {n_modes} transposed modes, got {}",
            part.len()
        )));
    }
    for (k, &m) in part.iter().enumerate() {
        if m >= n_modes {
            return Err(Error::BadPartition(format!("mode {m} out of range for {n_modes} modes")));
        }
        if part[..k].contains(&m) {
            return Err(Error::BadPartition(format!("mode {m} listed twice")));
        }
    }
    Ok(())
}

/// `ΛγΛ` with `Λ` flipping the momentum of every mode in `part` (0-based).
pub fn partial_transpose(cs: &CovarianceState, part: &[usize]) -> Result<CovarianceState> {
    check_partition(cs.n_modes, part)?;
    let n = 2 * cs.n_modes;
    let sign = |i: usize| if i % 2 == 1 && part.contains(&(i / 2)) { -1.0 } else { 1.0 };
    let gamma = (0..n).map(|i| (0..n).map(|j| sign(i) * sign(j) * cs.gamma[i][j]).collect()).collect();
    let d = cs.d.iter().enumerate().map(|(i, v)| sign(i) * v).collect();
    Ok(CovarianceState { n_modes: cs.n_modes, d, gamma })
}

/// Symplectic spectrum, ascending: the positive eigenvalues of `i γ^{1/2} σ γ^{1/2}`.
///
/// Negative eigenvalues of `γ` itself are clipped at zero before the square root.
pub fn symplectic_eigenvalues(cs: &CovarianceState) -> Vec<f64> {
    let n = 2 * cs.n_modes;
    let eig = SymmetricEigen::new(cs.gamma_matrix());
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let s = &eig.eigenvectors * root * eig.eigenvectors.transpose();
    let m = &s * SymplecticForm::new(cs.n_modes).matrix * &s;
    // i·M with M real antisymmetric is Hermitian
    let h = DMatrix::from_fn(n, n, |i, j| Complex64::new(0.0, m[(i, j)]));
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let mut out: Vec<f64> = ev[..cs.n_modes].to_vec();
    out.reverse();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Separable,
    Entangled,
    /// PPT holds but the split is not 1×N, where PPT is not sufficient
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PptReport {
    pub partition: Vec<usize>,
    pub min_symplectic_eig: f64,
    pub verdict: Verdict,
}

pub fn ppt_verdict(cs: &CovarianceState, part: &[usize]) -> Result<PptReport> {
    let pt = partial_transpose(cs, part)?;
    let min = symplectic_eigenvalues(&pt).into_iter().fold(f64::INFINITY, f64::min);
    let one_by_n = part.len() == 1 || part.len() + 1 == cs.n_modes;
    let verdict = if min < 1.0 - PPT_TOL {
        Verdict::Entangled
    } else if one_by_n {
        Verdict::Separable
    } else {
        Verdict::Inconclusive
    };
    Ok(PptReport { partition: part.to_vec(), min_symplectic_eig: min, verdict })
}

/// Transpose on the `B` factor of a `dA·dB` density matrix.
pub fn partial_transpose_matrix(rho: &DensityMatrix, dims: (usize, usize)) -> Result<DensityMatrix> {
    let (da, db) = dims;
    if da == 0 || db == 0 || da * db != rho.dim() {
        return Err(Error::BadDims(format!("{da}×{db} does not factor dimension {}", rho.dim())));
    }
    let d = rho.dim();
    let m = DMatrix::from_fn(d, d, |r, c| {
        let (ia, ib) = (r / db, r % db);
        let (ja, jb) = (c / db, c % db);
        rho.entry(ia * db + jb, ja * db + ib)
    });
    DensityMatrix::new(m, rho.meta.source)
}
