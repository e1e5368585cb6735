//! Physical-state estimation: the Fock-basis density matrix minimizing the weighted
//! ℓ1 misfit `Σ w |Tr(ρ|x_θ⟩⟨x_θ|) − pr(x,θ)|` over `ρ ⪰ 0, Tr ρ = 1`.
//!
//! The solver runs accelerated projected gradient steps on a Huber-smoothed copy of
//! the ℓ1 term, shrinking the smoothing width in stages, and returns the best
//! iterate under the exact ℓ1 objective. Projection onto the feasible set is a
//! simplex projection of the spectrum, which also serves as `repair`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{hermitize, DensityMatrix, Source, MAX_BANK_DIM};
use crate::homodyne::Sinogram;
use crate::states::hermite_functions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub theta_deg: f64,
    pub pr: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDataset {
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `Δx·Δθ`, so the objective approximates an integral over `(x, θ)`
    Density,
    /// every sample counts once
    Unit,
}

impl QuadratureDataset {
    /// One sample per sinogram cell. Negative noisy values are kept as measured.
    pub fn from_sinogram(s: &Sinogram, weighting: Weighting) -> Self {
        let weight = match weighting {
            Weighting::Density => s.xgrid.spacing() * PI / s.angle_count() as f64,
            Weighting::Unit => 1.0,
        };
        let xs = s.xgrid.values();
        let mut samples = Vec::with_capacity(s.values.len());
        for (t, &theta_deg) in s.thetas_deg.iter().enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                samples.push(Sample { x, theta_deg, pr: s.at(i, t), weight });
            }
        }
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub dim: usize,
    pub max_iters: usize,
    /// multiplier on the `1/L` gradient step
    pub step: f64,
    /// relative objective improvement below which the final stage stops early
    pub tol_gap: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { dim: 10, max_iters: 3000, step: 1.0, tol_gap: 1e-9, seed: 0 }
    }
}

impl EstimatorConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_BANK_DIM {
            return Err(Error::InvalidConfig(format!("dim must be in 1..={MAX_BANK_DIM}, got {}", self.dim)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.tol_gap > 0.0) {
            return Err(Error::InvalidConfig(format!("tol_gap must be positive, got {}", self.tol_gap)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub rho: DensityMatrix,
    pub objective: f64,
    /// best objective so far, one entry per iteration (non-increasing)
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub trace_residual: f64,
    pub min_eig: f64,
}

/// Serializable summary of an [`Estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub dim: usize,
    pub objective: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub trace_residual: f64,
    pub min_eig: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn report(&self, samples: usize) -> EstimatorReport {
        EstimatorReport {
            dim: self.rho.dim(),
            objective: self.objective,
            iterations: self.iterations,
            objective_trace: self.objective_trace.clone(),
            trace_residual: self.trace_residual,
            min_eig: self.min_eig,
            samples,
        }
    }
}

/// `|x_θ⟩⟨x_θ|` truncated to `dim`, with `⟨n|x_θ⟩ = e^{inθ}ψₙ(x)`.
pub fn projector_matrix(x: f64, theta_rad: f64, dim: usize) -> DMatrix<Complex64> {
    let psi = hermite_functions(x, dim.max(1) - 1);
    let u: Vec<Complex64> = (0..dim).map(|n| Complex64::from_polar(psi[n], n as f64 * theta_rad)).collect();
    DMatrix::from_fn(dim, dim, |m, n| u[m] * u[n].conj())
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Frobenius-nearest unit-trace PSD matrix to the Hermitian part of `m`.
fn project_spectraplex(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = hermitize(m).symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let p = project_simplex(&lam);
    let v = &eig.eigenvectors;
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, d);
    for (k, &pk) in p.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        let col = v.column(k);
        out += (col * col.adjoint()) * Complex64::new(pk, 0.0);
    }
    let out = hermitize(&out);
    let tr: f64 = (0..d).map(|i| out[(i, i)].re).sum();
    out / Complex64::new(tr, 0.0)
}

/// Nearest physical state: spectral simplex projection, exactly renormalized.
pub fn repair(rho: &DensityMatrix) -> DensityMatrix {
    let source = rho.meta.source;
    let m = project_spectraplex(rho.matrix());
    DensityMatrix::new(m, source).expect("projection keeps the shape")
}

/// Samples sharing one angle, with precomputed Hermite vectors.
struct AngleBlock {
    phase: Vec<Complex64>,
    psi: Vec<f64>,
    pr: Vec<f64>,
    w: Vec<f64>,
}

struct Problem {
    dim: usize,
    blocks: Vec<AngleBlock>,
}

impl Problem {
    fn new(data: &QuadratureDataset, dim: usize) -> Self {
        let mut blocks: Vec<(u64, AngleBlock)> = Vec::new();
        for s in &data.samples {
            let key = s.theta_deg.to_bits();
            let idx = match blocks.iter().position(|(k, _)| *k == key) {
                Some(i) => i,
                None => {
                    let th = s.theta_deg.to_radians();
                    let phase = (0..dim).map(|n| Complex64::from_polar(1.0, n as f64 * th)).collect();
                    blocks.push((key, AngleBlock { phase, psi: Vec::new(), pr: Vec::new(), w: Vec::new() }));
                    blocks.len() - 1
                }
            };
            let b = &mut blocks[idx].1;
            b.psi.extend(hermite_functions(s.x, dim - 1));
            b.pr.push(s.pr);
            b.w.push(s.weight);
        }
        Self { dim, blocks: blocks.into_iter().map(|(_, b)| b).collect() }
    }

    /// `Tr(ρ P_s)` for all samples, block by block.
    fn predict(&self, rho: &DMatrix<Complex64>) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::new();
        let mut a = vec![0.0; d * d];
        for b in &self.blocks {
            // Re(D† ρ D), doubled off the diagonal so ψᵀAψ needs only the upper triangle
            for m in 0..d {
                for n in m..d {
                    let v = (b.phase[m].conj() * rho[(m, n)] * b.phase[n]).re;
                    a[m * d + n] = if m == n { v } else { 2.0 * v };
                }
            }
            for psi in b.psi.chunks_exact(d) {
                let mut s = 0.0;
                for m in 0..d {
                    let row = &a[m * d..(m + 1) * d];
                    let mut t = 0.0;
                    for n in m..d {
                        t += row[n] * psi[n];
                    }
                    s += psi[m] * t;
                }
                out.push(s);
            }
        }
        out
    }

    /// `Σ_s c_s P_s`.
    fn adjoint(&self, coeffs: &[f64]) -> DMatrix<Complex64> {
        let d = self.dim;
        let mut g = DMatrix::zeros(d, d);
        let mut s = vec![0.0; d * d];
        let mut k = 0;
        for b in &self.blocks {
            s.iter_mut().for_each(|v| *v = 0.0);
            for psi in b.psi.chunks_exact(d) {
                let c = coeffs[k];
                k += 1;
                if c == 0.0 {
                    continue;
                }
                for m in 0..d {
                    let cm = c * psi[m];
                    let row = &mut s[m * d..(m + 1) * d];
                    for n in m..d {
                        row[n] += cm * psi[n];
                    }
                }
            }
            for m in 0..d {
                for n in m..d {
                    let v = b.phase[m] * b.phase[n].conj() * s[m * d + n];
                    g[(m, n)] += v;
                    if m != n {
                        g[(n, m)] += v.conj();
                    }
                }
            }
        }
        g
    }

    fn pr(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.blocks.iter().flat_map(|b| b.pr.iter().copied().zip(b.w.iter().copied()))
    }

    fn objective(&self, pred: &[f64]) -> f64 {
        pred.iter().zip(self.pr()).map(|(p, (y, w))| w * (p - y).abs()).sum()
    }

    /// Largest eigenvalue of `X ↦ Σ w P Tr(P X)` by power iteration.
    fn lipschitz(&self, seed: u64) -> f64 {
        let d = self.dim;
        let mut x = random_hermitian(d, seed ^ 0x5eed);
        let mut lam = 0.0;
        let w: Vec<f64> = self.pr().map(|(_, w)| w).collect();
        for _ in 0..40 {
            let nrm = x.norm();
            if nrm == 0.0 {
                return 0.0;
            }
            x /= Complex64::new(nrm, 0.0);
            let pred = self.predict(&x);
            let c: Vec<f64> = pred.iter().zip(&w).map(|(p, w)| p * w).collect();
            let y = self.adjoint(&c);
            lam = y.norm();
            x = y;
        }
        lam
    }
}

fn random_hermitian(d: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    hermitize(&(&g * g.adjoint()))
}

/// Seeded random full-rank starting state.
fn initial_state(d: usize, seed: u64) -> DMatrix<Complex64> {
    let m = random_hermitian(d, seed);
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    m / Complex64::new(tr, 0.0)
}

const STAGE_ITERS: usize = 150;
const SMOOTHING_SHRINK: f64 = 0.25;
const SMOOTHING_START: f64 = 0.1;
const SMOOTHING_FLOOR: f64 = 1e-6;
const STALL_WINDOW: usize = 200;

/// Weighted ℓ1 fit of a physical density matrix to quadrature data.
pub fn estimate(data: &QuadratureDataset, cfg: &EstimatorConfig) -> Result<Estimate> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    cfg.validate()?;
    if let Some(s) = data.samples.iter().find(|s| !(s.weight > 0.0) || !s.x.is_finite() || !s.pr.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad sample {s:?}: weights must be positive and values finite")));
    }
    crate::homodyne::check_angles(&data.samples.iter().map(|s| s.theta_deg).collect::<Vec<_>>())?;
    let problem = Problem::new(data, cfg.dim);
    let residual = |pred: &[f64]| -> Vec<f64> { pred.iter().zip(problem.pr()).map(|(p, (y, _))| p - y).collect() };

    let lip = problem.lipschitz(cfg.seed).max(f64::MIN_POSITIVE);
    let scale = problem.pr().map(|(y, _)| y.abs()).fold(0.0, f64::max).max(1e-12);
    let mu_floor = SMOOTHING_FLOOR * scale;
    let mut mu = SMOOTHING_START * scale;

    let mut x = initial_state(cfg.dim, cfg.seed);
    let mut pred_x = problem.predict(&x);
    let initial = problem.objective(&pred_x);
    if !initial.is_finite() {
        return Err(Error::Diverged("objective is not finite at the starting point".into()));
    }
    let mut best = (initial, x.clone());
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let (mut y, mut pred_y) = (x.clone(), pred_x.clone());
    let mut t = 1.0f64;
    let mut stage_iter = 0;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let coeffs: Vec<f64> =
            residual(&pred_y).iter().zip(problem.pr()).map(|(r, (_, w))| w * (r / mu).clamp(-1.0, 1.0)).collect();
        let grad = problem.adjoint(&coeffs);
        let eta = cfg.step * mu / lip;
        let x_next = project_spectraplex(&(&y - grad * Complex64::new(eta, 0.0)));
        let pred_next = problem.predict(&x_next);
        let f = problem.objective(&pred_next);
        if !f.is_finite() {
            return Err(Error::Diverged(format!("objective became non-finite at iteration {iterations}")));
        }
        if f < best.0 {
            best = (f, x_next.clone());
        }
        trace.push(best.0);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        y = &x_next + (&x_next - &x) * Complex64::new(beta, 0.0);
        pred_y = pred_next.iter().zip(&pred_x).map(|(a, b)| a + beta * (a - b)).collect();
        // y leaves the feasible set; the next projection brings it back
        x = x_next;
        pred_x = pred_next;
        t = t_next;

        stage_iter += 1;
        if mu > mu_floor && stage_iter >= STAGE_ITERS {
            mu = (mu * SMOOTHING_SHRINK).max(mu_floor);
            stage_iter = 0;
            // restart momentum from the best point for the new smoothing level
            x = best.1.clone();
            pred_x = problem.predict(&x);
            y = x.clone();
            pred_y = pred_x.clone();
            t = 1.0;
        } else if mu <= mu_floor && stage_iter > STALL_WINDOW {
            let old = trace[trace.len() - 1 - STALL_WINDOW];
            if old - best.0 <= cfg.tol_gap * best.0 {
                break;
            }
        }
    }
    if best.0 >= initial && initial > 0.0 {
        return Err(Error::Diverged(format!(
            "objective {initial:.6e} not improved in {iterations} iterations"
        )));
    }
    let rho = DensityMatrix::new(best.1, Source::Estimator)?;
    let min_eig = rho.meta.min_eig;
    let trace_residual = (rho.trace() - 1.0).abs();
    Ok(Estimate { rho, objective: best.0, objective_trace: trace, iterations, trace_residual, min_eig })
}

/// Exact ℓ1 objective of a given state on a dataset.
pub fn objective(data: &QuadratureDataset, rho: &DensityMatrix) -> f64 {
    let problem = Problem::new(data, rho.dim());
    problem.objective(&problem.predict(rho.matrix()))
}
