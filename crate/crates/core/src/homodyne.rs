//! Balanced homodyne detection: rotated-quadrature distributions as line integrals
//! of the Wigner function, plus additive Gaussian noise on the histogram.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::grid::Grid1D;
use crate::phase_space::{check_two_mode_axis, WignerGrid, WignerGrid2};
use crate::states::hermite_functions;

/// Angle cap per mode for two-mode sinograms.
pub const MAX_TWO_MODE_ANGLES: usize = 12;

/// Quadrature distributions `pr(x, θ)`, one column per angle.
///
/// Angles are kept in degrees, the unit they are specified and written in, so that
/// files round-trip exactly; radians are derived where needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub xgrid: Grid1D,
    pub thetas_deg: Vec<f64>,
    /// column-major: `values[t * xgrid.points + i]`
    pub values: Vec<f64>,
    pub noise_sigma: f64,
}

impl Sinogram {
    pub fn angle_count(&self) -> usize {
        self.thetas_deg.len()
    }

    pub fn thetas_rad(&self) -> Vec<f64> {
        self.thetas_deg.iter().map(|d| d.to_radians()).collect()
    }

    pub fn column(&self, t: usize) -> &[f64] {
        let n = self.xgrid.points;
        &self.values[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn at(&self, i: usize, t: usize) -> f64 {
        self.values[t * self.xgrid.points + i]
    }

    /// `∫ pr(x, θ) dx` for every angle.
    pub fn column_integrals(&self) -> Vec<f64> {
        (0..self.angle_count()).map(|t| self.xgrid.integrate(self.column(t))).collect()
    }

    /// `a·self + b·other` on identical grids; the noise level is carried from `self`.
    pub fn combine(&self, a: f64, other: &Sinogram, b: f64) -> Result<Sinogram> {
        if !self.xgrid.same_as(&other.xgrid) || self.thetas_deg != other.thetas_deg {
            return Err(Error::GridMismatch("sinograms have different grids or angles".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Sinogram { values, ..self.clone() })
    }
}

/// Evenly spaced integer-degree angles `0, 180/n, ...` below 180.
pub fn uniform_angles_deg(n: usize) -> Vec<f64> {
    (0..n).map(|k| 180.0 * k as f64 / n as f64).collect()
}

pub(crate) fn check_angles(thetas_deg: &[f64]) -> Result<()> {
    if thetas_deg.is_empty() {
        return Err(Error::EmptyAngles);
    }
    if let Some(&bad) = thetas_deg.iter().find(|t| !(**t >= 0.0 && **t < 180.0)) {
        return Err(Error::AngleOutOfRange(bad));
    }
    Ok(())
}

/// Bilinear interpolation with zero outside the grid.
#[inline]
fn bilinear(values: &[f64], qgrid: &Grid1D, pgrid: &Grid1D, q: f64, p: f64) -> f64 {
    let (Some((i, fq)), Some((j, fp))) = (qgrid.locate(q), pgrid.locate(p)) else {
        return 0.0;
    };
    let np = pgrid.points;
    let r0 = i * np + j;
    let r1 = r0 + np;
    let top = values[r0] * (1.0 - fp) + values[r0 + 1] * fp;
    let bottom = values[r1] * (1.0 - fp) + values[r1 + 1] * fp;
    top * (1.0 - fq) + bottom * fq
}

/// Line integrals of a `(q, p)` sampled plane along `{x(cosθ, sinθ) + s(−sinθ, cosθ)}`.
fn project_plane(values: &[f64], qgrid: &Grid1D, pgrid: &Grid1D, theta: f64, xs: &[f64], out: &mut [f64]) {
    let h = 0.5 * qgrid.spacing().min(pgrid.spacing());
    let reach = [qgrid.q_min.abs(), qgrid.q_max.abs()]
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
        .hypot([pgrid.q_min.abs(), pgrid.q_max.abs()].iter().fold(0.0f64, |a, &b| a.max(b)));
    let ksteps = (reach / h).ceil() as i64;
    let (s, c) = theta.sin_cos();
    for (x, o) in xs.iter().zip(out.iter_mut()) {
        let (q0, p0) = (x * c, x * s);
        let mut acc = 0.0;
        // endpoints lie outside the grid, where the interpolant vanishes, so the
        // trapezoid rule reduces to a plain sum
        for k in -ksteps..=ksteps {
            let t = k as f64 * h;
            acc += bilinear(values, qgrid, pgrid, q0 - t * s, p0 + t * c);
        }
        *o = acc * h;
    }
}

/// `pr(x, θ) = ∫ W(x cosθ − s sinθ, x sinθ + s cosθ) ds` by bilinear interpolation.
pub fn radon_transform(w: &WignerGrid, thetas_deg: &[f64], xgrid: &Grid1D) -> Result<Sinogram> {
    check_angles(thetas_deg)?;
    let xs = xgrid.values();
    let nx = xs.len();
    let mut values = vec![0.0; nx * thetas_deg.len()];
    for (t, deg) in thetas_deg.iter().enumerate() {
        project_plane(&w.values, &w.qgrid, &w.pgrid, deg.to_radians(), &xs, &mut values[t * nx..(t + 1) * nx]);
    }
    Ok(Sinogram { xgrid: *xgrid, thetas_deg: thetas_deg.to_vec(), values, noise_sigma: 0.0 })
}

/// Adds iid `N(0, σ²)` noise to every histogram value, deterministically in `seed`.
pub fn add_noise(s: &Sinogram, sigma: f64, seed: u64) -> Result<Sinogram> {
    if !(sigma >= 0.0) {
        return Err(Error::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(s.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let values = s.values.iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(Sinogram { values, noise_sigma: s.noise_sigma.hypot(sigma), ..s.clone() })
}

/// Joint distributions `pr(x₁, θ₁, x₂, θ₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram2 {
    pub xgrid1: Grid1D,
    pub xgrid2: Grid1D,
    pub thetas1_deg: Vec<f64>,
    pub thetas2_deg: Vec<f64>,
    /// `values[((t1 * T2 + t2) * N1 + i1) * N2 + i2]`
    pub values: Vec<f64>,
    pub noise_sigma: f64,
}

impl Sinogram2 {
    pub fn slice(&self, t1: usize, t2: usize) -> &[f64] {
        let n = self.xgrid1.points * self.xgrid2.points;
        let k = t1 * self.thetas2_deg.len() + t2;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice_integral(&self, t1: usize, t2: usize) -> f64 {
        let (w1, w2) = (self.xgrid1.trapezoid_weights(), self.xgrid2.trapezoid_weights());
        let n2 = w2.len();
        self.slice(t1, t2).iter().enumerate().map(|(k, v)| v * w1[k / n2] * w2[k % n2]).sum()
    }
}

fn check_two_mode_angles(thetas: &[f64]) -> Result<()> {
    check_angles(thetas)?;
    if thetas.len() > MAX_TWO_MODE_ANGLES {
        return Err(Error::GridTooLarge(format!(
            "two-mode sinograms are limited to {MAX_TWO_MODE_ANGLES} angles per mode, got {}",
            thetas.len()
        )));
    }
    Ok(())
}

/// Double line integral over the `(p₁θ₁, p₂θ₂)` directions.
///
/// Bilinear interpolation in each mode plane makes the 4-D integrand separable, so mode 2
/// is projected at every mode-1 node first and the result is projected over mode 1.
pub fn radon_two_mode(
    w: &WignerGrid2,
    thetas1_deg: &[f64],
    thetas2_deg: &[f64],
    xgrid1: &Grid1D,
    xgrid2: &Grid1D,
) -> Result<Sinogram2> {
    for g in w.grids().iter().chain([xgrid1, xgrid2]) {
        check_two_mode_axis(g)?;
    }
    check_two_mode_angles(thetas1_deg)?;
    check_two_mode_angles(thetas2_deg)?;
    let [n0, n1, n2, n3] = w.shape();
    let (xs1, xs2) = (xgrid1.values(), xgrid2.values());
    let (m1, m2) = (xs1.len(), xs2.len());
    let (t1n, t2n) = (thetas1_deg.len(), thetas2_deg.len());
    let mut values = vec![0.0; t1n * t2n * m1 * m2];
    let plane2 = n2 * n3;
    let mut inner = vec![0.0; n0 * n1 * m2];
    let mut plane1 = vec![0.0; n0 * n1];
    let mut column = vec![0.0; m1];
    for (t2, d2) in thetas2_deg.iter().enumerate() {
        // inner[(a, b), x2]: mode-2 projection at each mode-1 node
        for ab in 0..n0 * n1 {
            let block = &w.values[ab * plane2..(ab + 1) * plane2];
            project_plane(block, &w.q2, &w.p2, d2.to_radians(), &xs2, &mut inner[ab * m2..(ab + 1) * m2]);
        }
        for (t1, d1) in thetas1_deg.iter().enumerate() {
            for i2 in 0..m2 {
                for ab in 0..n0 * n1 {
                    plane1[ab] = inner[ab * m2 + i2];
                }
                project_plane(&plane1, &w.q1, &w.p1, d1.to_radians(), &xs1, &mut column);
                let base = (t1 * t2n + t2) * m1 * m2;
                for i1 in 0..m1 {
                    values[base + i1 * m2 + i2] = column[i1];
                }
            }
        }
    }
    Ok(Sinogram2 {
        xgrid1: *xgrid1,
        xgrid2: *xgrid2,
        thetas1_deg: thetas1_deg.to_vec(),
        thetas2_deg: thetas2_deg.to_vec(),
        values,
        noise_sigma: 0.0,
    })
}

/// `Σₘₙ ρₘₙ e^{i(n−m)θ} ψₘ(x)ψₙ(x)`, clamped at zero from below.
pub fn quadrature_pdf_from_density(rho: &DensityMatrix, x: f64, theta_rad: f64) -> f64 {
    let d = rho.dim();
    let psi = hermite_functions(x, d - 1);
    let mut total = 0.0;
    for m in 0..d {
        total += rho.entry(m, m).re * psi[m] * psi[m];
        for n in m + 1..d {
            let phase = Complex64::from_polar(1.0, (n as f64 - m as f64) * theta_rad);
            // the (n, m) term is the conjugate of the (m, n) term
            total += 2.0 * (rho.entry(m, n) * phase).re * psi[m] * psi[n];
        }
    }
    total.max(0.0)
}

/// Sinogram computed directly from a density matrix.
pub fn sinogram_from_density(rho: &DensityMatrix, thetas_deg: &[f64], xgrid: &Grid1D) -> Result<Sinogram> {
    check_angles(thetas_deg)?;
    let mut values = Vec::with_capacity(thetas_deg.len() * xgrid.points);
    for deg in thetas_deg {
        for x in xgrid.values() {
            values.push(quadrature_pdf_from_density(rho, x, deg.to_radians()));
        }
    }
    Ok(Sinogram { xgrid: *xgrid, thetas_deg: thetas_deg.to_vec(), values, noise_sigma: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Source;
    use crate::phase_space::{wigner_from_wavefunction, wigner_two_mode};
    use crate::states::{fock_coefficients, make_two_mode_squeezed, make_wavefunction, StateSpec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn exact_wigner(spec: StateSpec, g: Grid1D) -> WignerGrid {
        wigner_from_wavefunction(&make_wavefunction(&spec, &g).unwrap(), &g).unwrap()
    }

    fn mean(s: &Sinogram, t: usize) -> f64 {
        let xs = s.xgrid.values();
        let f: Vec<f64> = xs.iter().zip(s.column(t)).map(|(x, v)| x * v).collect();
        s.xgrid.integrate(&f) / s.xgrid.integrate(s.column(t))
    }

    #[test]
    fn vacuum_marginal() {
        let g = Grid1D::standard();
        let s = radon_transform(&exact_wigner(StateSpec::vacuum(), g), &[0.0, 37.0, 90.0, 151.0], &g).unwrap();
        for t in 0..4 {
            for (i, x) in g.values().iter().enumerate() {
                assert!((s.at(i, t) - (-x * x).exp() / PI.sqrt()).abs() < 1e-3);
            }
            assert!((s.column_integrals()[t] - 1.0).abs() < 2e-3);
        }
    }

    #[test]
    fn fock_columns_are_angle_independent() {
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let s = radon_transform(&exact_wigner(StateSpec::fock(3), g), &[0.0, 90.0], &g).unwrap();
        let err = s.column(0).iter().zip(s.column(1)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn coherent_mean_oscillates() {
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let spec = StateSpec::coherent(Complex64::new(0.8, 0.5));
        let (q0, p0) = spec.displacement();
        let thetas = [0.0, 30.0, 90.0, 135.0];
        let s = radon_transform(&exact_wigner(spec, g), &thetas, &g).unwrap();
        for (t, deg) in thetas.iter().enumerate() {
            let th: f64 = deg.to_radians();
            assert!((mean(&s, t) - (q0 * th.cos() + p0 * th.sin())).abs() < 2e-3, "theta {deg}");
        }
        let s1 = radon_transform(&exact_wigner(StateSpec::coherent(Complex64::new(1.0, 0.0)), g), &[0.0, 90.0], &g)
            .unwrap();
        assert!((mean(&s1, 0) - 2f64.sqrt()).abs() < 2e-3);
        assert!(mean(&s1, 1).abs() < 2e-3);
    }

    #[test]
    fn angle_errors() {
        let g = Grid1D::standard();
        let w = exact_wigner(StateSpec::vacuum(), g);
        assert!(matches!(radon_transform(&w, &[], &g), Err(Error::EmptyAngles)));
        assert!(matches!(radon_transform(&w, &[180.0], &g), Err(Error::AngleOutOfRange(_))));
        assert!(matches!(radon_transform(&w, &[-1.0], &g), Err(Error::AngleOutOfRange(_))));
    }

    #[test]
    fn oracle_equivalence_with_density_route() {
        // bilinear bias scales as Δ²; fringes of the cat need Δ = 0.05
        let g = Grid1D::symmetric(6.0, 241).unwrap();
        let thetas = [0.0, 45.0, 100.0];
        for spec in [
            StateSpec::vacuum(),
            StateSpec::coherent(Complex64::new(0.7, -0.6)),
            StateSpec::fock(2),
            StateSpec::cat(Complex64::new(1.2, 0.3), 0.7),
        ] {
            let rho = DensityMatrix::from_pure(&fock_coefficients(&spec, 20).unwrap()).unwrap();
            let a = radon_transform(&exact_wigner(spec, g), &thetas, &g).unwrap();
            let b = sinogram_from_density(&rho, &thetas, &g).unwrap();
            let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 2e-3, "{:?}: {err}", spec.kind);
        }
    }

    #[test]
    fn quarter_turn_covariance() {
        // W'(q, p) = W(p, −q) is W rotated by +90°, so pr'(x, θ) = pr(x, θ − 90°)
        let g = Grid1D::symmetric(6.0, 121).unwrap();
        let w = exact_wigner(StateSpec::coherent(Complex64::new(0.9, 0.4)), g);
        let n = g.points;
        let rotated = WignerGrid::from_fn(g, g, |_, _| 0.0);
        let mut rotated = rotated;
        for i in 0..n {
            for j in 0..n {
                rotated.values[i * n + j] = w.at(j, n - 1 - i);
            }
        }
        let a = radon_transform(&rotated, &[90.0, 120.0], &g).unwrap();
        let b = radon_transform(&w, &[0.0, 30.0], &g).unwrap();
        let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn density_route_examples() {
        let vac = DensityMatrix::diagonal(&[1.0], Source::Exact).unwrap();
        for th in [0.0, 0.7, 2.5] {
            assert!((quadrature_pdf_from_density(&vac, 0.0, th) - PI.powf(-0.5)).abs() < 1e-12);
        }
        let one = DensityMatrix::diagonal(&[0.0, 1.0], Source::Exact).unwrap();
        assert!(quadrature_pdf_from_density(&one, 0.0, 1.1).abs() < 1e-15);
        let c = fock_coefficients(&StateSpec::coherent(Complex64::new(1.0, 0.0)), 20).unwrap();
        let rho = DensityMatrix::from_pure(&c).unwrap();
        let xs: Vec<f64> = (0..2001).map(|k| -5.0 + k as f64 * 0.005).collect();
        let best = xs
            .iter()
            .copied()
            .max_by(|a, b| quadrature_pdf_from_density(&rho, *a, 0.0).total_cmp(&quadrature_pdf_from_density(&rho, *b, 0.0)))
            .unwrap();
        assert!((best - 2f64.sqrt()).abs() < 6e-3);
    }

    #[test]
    fn noise_behaviour() {
        let g = Grid1D::standard();
        let s = radon_transform(&exact_wigner(StateSpec::vacuum(), g), &uniform_angles_deg(6), &g).unwrap();
        assert_eq!(add_noise(&s, 0.0, 9).unwrap(), s);
        assert!(matches!(add_noise(&s, -0.1, 9), Err(Error::NegativeSigma(_))));
        let a = add_noise(&s, 0.01, 42).unwrap();
        assert_eq!(a, add_noise(&s, 0.01, 42).unwrap());
        assert_ne!(a.values, add_noise(&s, 0.01, 43).unwrap().values);
        assert_eq!(a.noise_sigma, 0.01);
        // column sums of raw values: deviation std ≈ σ√points
        let mut devs = Vec::new();
        for seed in 0..100 {
            let n = add_noise(&s, 0.01, seed).unwrap();
            for t in 0..6 {
                let d: f64 = n.column(t).iter().zip(s.column(t)).map(|(x, y)| x - y).sum();
                devs.push(d);
            }
        }
        let var = devs.iter().map(|d| d * d).sum::<f64>() / devs.len() as f64;
        let expect = 0.01 * (g.points as f64).sqrt();
        assert!((var.sqrt() / expect - 1.0).abs() < 0.1);
    }

    #[test]
    fn noise_golden_prefix() {
        let g = Grid1D::new(-1.0, 1.0, 3).unwrap();
        let s = Sinogram { xgrid: g, thetas_deg: vec![0.0], values: vec![0.0; 3], noise_sigma: 0.0 };
        let a = add_noise(&s, 0.01, 7).unwrap();
        let again = add_noise(&s, 0.01, 7).unwrap();
        assert_eq!(a.values, again.values);
        assert!(a.values.iter().all(|v| v.abs() < 0.06));
    }

    #[test]
    fn two_mode_product_vacuum_factorizes() {
        let g = Grid1D::symmetric(3.4, 16).unwrap();
        let psi = make_two_mode_squeezed(0.0, &g, &g).unwrap();
        let w = wigner_two_mode(&psi, &g, &g).unwrap();
        let (th1, th2) = ([0.0, 45.0], [0.0, 120.0]);
        let s = radon_two_mode(&w, &th1, &th2, &g, &g).unwrap();
        // product of single-mode projections of the vacuum sampled on the same grid
        let vac = WignerGrid::from_fn(g, g, |q, p| (-q * q - p * p).exp() / PI);
        let single = radon_transform(&vac, &[0.0, 45.0, 120.0], &g).unwrap();
        let col = |deg: f64| single.column([0.0, 45.0, 120.0].iter().position(|d| *d == deg).unwrap());
        let xs = g.values();
        for (t1, d1) in th1.iter().enumerate() {
            for (t2, d2) in th2.iter().enumerate() {
                let sl = s.slice(t1, t2);
                let (c1, c2) = (col(*d1), col(*d2));
                for (i, x1) in xs.iter().enumerate() {
                    for (j, x2) in xs.iter().enumerate() {
                        let e = (sl[i * 16 + j] - c1[i] * c2[j]).abs();
                        assert!(e < 1e-3, "{e}");
                        let gauss = (-x1 * x1 - x2 * x2).exp() / PI;
                        assert!((sl[i * 16 + j] - gauss).abs() < 3e-2);
                    }
                }
            }
        }
    }

    #[test]
    fn two_mode_correlation_and_normalization() {
        let g = Grid1D::symmetric(3.4, 16).unwrap();
        let zeta = 0.5;
        let w = wigner_two_mode(&make_two_mode_squeezed(zeta, &g, &g).unwrap(), &g, &g).unwrap();
        let thetas = uniform_angles_deg(4);
        let s = radon_two_mode(&w, &thetas, &thetas, &g, &g).unwrap();
        for t1 in 0..4 {
            for t2 in 0..4 {
                assert!((s.slice_integral(t1, t2) - 1.0).abs() < 2e-2);
            }
        }
        let xs = g.values();
        let wts = g.trapezoid_weights();
        let sl = s.slice(0, 0);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for i in 0..16 {
            for j in 0..16 {
                let m = wts[i] * wts[j] * sl[i * 16 + j];
                a += m * xs[i] * xs[i];
                b += m * xs[j] * xs[j];
                c += m * xs[i] * xs[j];
            }
        }
        let rho = c / (a * b).sqrt();
        assert!((rho + (2.0 * zeta).tanh()).abs() < 3e-2, "{rho}");
    }

    #[test]
    fn two_mode_guards() {
        let big = Grid1D::symmetric(3.0, 33).unwrap();
        let g = Grid1D::symmetric(3.0, 8).unwrap();
        let w = WignerGrid2::zeros(g, g, g, g);
        assert!(matches!(radon_two_mode(&w, &[0.0], &[0.0], &big, &g), Err(Error::GridTooLarge(_))));
        let many = uniform_angles_deg(13);
        assert!(matches!(radon_two_mode(&w, &many, &[0.0], &g, &g), Err(Error::GridTooLarge(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn noise_is_seed_deterministic(seed in any::<u64>(), sigma in 0.0f64..0.1) {
            let g = Grid1D::new(-2.0, 2.0, 9).unwrap();
            let s = Sinogram { xgrid: g, thetas_deg: vec![0.0, 90.0], values: vec![0.1; 18], noise_sigma: 0.0 };
            prop_assert_eq!(add_noise(&s, sigma, seed).unwrap(), add_noise(&s, sigma, seed).unwrap());
        }

        #[test]
        fn coherent_columns_normalized(re in -1.0f64..1.0, im in -1.0f64..1.0, deg in 0.0f64..180.0) {
            let g = Grid1D::symmetric(6.0, 121).unwrap();
            let w = exact_wigner(StateSpec::coherent(Complex64::new(re, im)), g);
            let s = radon_transform(&w, &[deg], &g).unwrap();
            prop_assert!((s.column_integrals()[0] - 1.0).abs() < 2e-3);
        }
    }
}
