//! Filtered back-projection with a band-limited ramp kernel.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::homodyne::{Sinogram, Sinogram2};
use crate::phase_space::{check_two_mode_axis, overlap, WignerGrid, WignerGrid2};

/// Oversampling of the filtered-projection lattice relative to the sinogram `x` grid.
const FILTER_OVERSAMPLE: usize = 8;

/// `K(x) = ½ ∫_{−k_c}^{k_c} |ξ| e^{iξx} dξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub k_c: f64,
}

impl Kernel {
    pub fn new(k_c: f64) -> Result<Self> {
        if !(k_c > 0.0 && k_c.is_finite()) {
            return Err(Error::InvalidCutoff(k_c));
        }
        Ok(Self { k_c })
    }

    /// Nyquist cutoff `π/Δx` of a sampling grid.
    pub fn nyquist(xgrid: &Grid1D) -> Self {
        Self { k_c: PI / xgrid.spacing() }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        kernel_eval(self, x)
    }
}

/// `(cos(k_c x) + k_c x sin(k_c x) − 1)/x²`, with the series `k_c²/2 − k_c⁴x²/8` near 0.
#[inline]
pub fn kernel_eval(k: &Kernel, x: f64) -> f64 {
    let kc = k.k_c;
    if x.abs() < 1e-6 {
        return 0.5 * kc * kc - kc.powi(4) * x * x / 8.0;
    }
    // cos u − 1 written as −2 sin²(u/2) keeps the small-u cancellation benign
    let u = kc * x;
    let half = (0.5 * u).sin();
    (u * u.sin() - 2.0 * half * half) / (x * x)
}

/// Catmull-Rom interpolation of `f` sampled at `t0 + k h`; zero outside.
#[inline]
fn cubic_at(f: &[f64], t0: f64, h: f64, t: f64) -> f64 {
    let u = (t - t0) / h;
    let i = u.floor();
    let fr = u - i;
    let i = i as isize;
    if i < 1 || i + 2 >= f.len() as isize {
        return 0.0;
    }
    let i = i as usize;
    let (p0, p1, p2, p3) = (f[i - 1], f[i], f[i + 1], f[i + 2]);
    p1 + 0.5
        * fr
        * (p2 - p0 + fr * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + fr * (3.0 * (p1 - p2) + p3 - p0)))
}

fn max_radius(qgrid: &Grid1D, pgrid: &Grid1D) -> f64 {
    let q = qgrid.q_min.abs().max(qgrid.q_max.abs());
    let p = pgrid.q_min.abs().max(pgrid.q_max.abs());
    q.hypot(p)
}

fn check_sinogram(angles: usize, k: &Kernel) -> Result<()> {
    if angles < 2 {
        return Err(Error::TooFewAngles(angles));
    }
    Kernel::new(k.k_c)?;
    Ok(())
}

/// Back-projection without the final renormalization; linear in the sinogram.
pub fn filtered_backprojection_raw(s: &Sinogram, k: &Kernel, qgrid: &Grid1D, pgrid: &Grid1D) -> Result<WignerGrid> {
    check_sinogram(s.angle_count(), k)?;
    let xg = s.xgrid;
    let dx = xg.spacing();
    let h = dx / FILTER_OVERSAMPLE as f64;
    let wx = xg.trapezoid_weights();
    // filtered projections live on t_j = t0 + j h, aligned with the x grid and wide
    // enough for every rotated coordinate of the output grid
    let reach = max_radius(qgrid, pgrid) + 3.0 * h;
    let below = ((xg.q_min + reach) / h).ceil().max(2.0) as usize;
    let above = ((reach - xg.q_max) / h).ceil().max(2.0) as usize;
    let nx = xg.points;
    let nt = below + (nx - 1) * FILTER_OVERSAMPLE + 1 + above;
    let t0 = xg.q_min - below as f64 * h;
    // K at lattice offsets: t_j − x_i = (j − below − i·m) h
    let span = nt + nx * FILTER_OVERSAMPLE;
    let table: Vec<f64> = (0..2 * span + 1).map(|k_| k.eval((k_ as f64 - span as f64) * h)).collect();

    let thetas = s.thetas_rad();
    let dtheta = PI / thetas.len() as f64;
    let qs = qgrid.values();
    let ps = pgrid.values();
    let np = ps.len();
    let mut out = vec![0.0; qs.len() * np];
    let mut filtered = vec![0.0; nt];
    for (t, &th) in thetas.iter().enumerate() {
        let col = s.column(t);
        for (j, f) in filtered.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..nx {
                let off = j as isize - below as isize - (i * FILTER_OVERSAMPLE) as isize;
                acc += wx[i] * col[i] * table[(off + span as isize) as usize];
            }
            *f = acc;
        }
        let (sn, cs) = th.sin_cos();
        for (a, q) in qs.iter().enumerate() {
            let row = &mut out[a * np..(a + 1) * np];
            for (b, p) in ps.iter().enumerate() {
                row[b] += cubic_at(&filtered, t0, h, q * cs + p * sn);
            }
        }
    }
    let scale = dtheta / (2.0 * PI * PI);
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(WignerGrid { qgrid: *qgrid, pgrid: *pgrid, values: out })
}

/// Filtered back-projection renormalized to unit integral. `k = None` uses `π/Δx`.
///
/// The result may take unphysical values; repair happens downstream.
pub fn filtered_backprojection(s: &Sinogram, k: Option<Kernel>, qgrid: &Grid1D, pgrid: &Grid1D) -> Result<WignerGrid> {
    let k = k.unwrap_or_else(|| Kernel::nyquist(&s.xgrid));
    let w = filtered_backprojection_raw(s, &k, qgrid, pgrid)?;
    Ok(normalize(w))
}

fn normalize(w: WignerGrid) -> WignerGrid {
    let total = w.integral();
    if total.abs() > 1e-12 {
        w.scaled(1.0 / total)
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub k_c: f64,
    pub overlap: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSweep {
    pub rows: Vec<CutoffRow>,
    /// cutoff with the smallest maximum absolute error
    pub best_k_c: f64,
}

/// Reconstruction quality against a known truth for each cutoff.
pub fn sweep_cutoff(s: &Sinogram, truth: &WignerGrid, k_c_list: &[f64]) -> Result<CutoffSweep> {
    if k_c_list.is_empty() {
        return Err(Error::InvalidConfig("empty cutoff list".into()));
    }
    let mut rows = Vec::with_capacity(k_c_list.len());
    for &k_c in k_c_list {
        let w = filtered_backprojection(s, Some(Kernel::new(k_c)?), &truth.qgrid, &truth.pgrid)?;
        rows.push(CutoffRow { k_c, overlap: overlap(&w, truth)?, max_abs_error: w.max_abs_diff(truth)? });
    }
    let best_k_c = rows.iter().min_by(|a, b| a.max_abs_error.total_cmp(&b.max_abs_error)).unwrap().k_c;
    Ok(CutoffSweep { rows, best_k_c })
}

/// `K(t − xᵢ) wᵢ` for every output node `(q, p)` in row-major order.
fn kernel_rows(k: &Kernel, theta: f64, qgrid: &Grid1D, pgrid: &Grid1D, xgrid: &Grid1D) -> Vec<f64> {
    let (xs, wx) = (xgrid.values(), xgrid.trapezoid_weights());
    let (sn, cs) = theta.sin_cos();
    let mut rows = Vec::with_capacity(qgrid.points * pgrid.points * xs.len());
    for q in qgrid.values() {
        for p in pgrid.values() {
            let t = q * cs + p * sn;
            rows.extend(xs.iter().zip(&wx).map(|(x, w)| w * k.eval(t - x)));
        }
    }
    rows
}

/// Product-kernel back-projection onto the four output axes, renormalized to unit integral.
pub fn filtered_backprojection_two_mode(
    s: &Sinogram2,
    k1: &Kernel,
    k2: &Kernel,
    q1: &Grid1D,
    p1: &Grid1D,
    q2: &Grid1D,
    p2: &Grid1D,
) -> Result<WignerGrid2> {
    for g in [q1, p1, q2, p2, &s.xgrid1, &s.xgrid2] {
        check_two_mode_axis(g)?;
    }
    check_sinogram(s.thetas1_deg.len(), k1)?;
    check_sinogram(s.thetas2_deg.len(), k2)?;
    let (m1, m2) = (s.xgrid1.points, s.xgrid2.points);
    let (o1, o2) = (q1.points * p1.points, q2.points * p2.points);
    let rows1: Vec<Vec<f64>> =
        s.thetas1_deg.iter().map(|d| kernel_rows(k1, d.to_radians(), q1, p1, &s.xgrid1)).collect();
    let rows2: Vec<Vec<f64>> =
        s.thetas2_deg.iter().map(|d| kernel_rows(k2, d.to_radians(), q2, p2, &s.xgrid2)).collect();
    let mut out = vec![0.0; o1 * o2];
    let mut half = vec![0.0; o1 * m2];
    for (t1, a) in rows1.iter().enumerate() {
        for (t2, b) in rows2.iter().enumerate() {
            let pr = s.slice(t1, t2);
            // half[(q1,p1), x2] = Σ_{x1} A[(q1,p1), x1] pr[x1, x2]
            half.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..o1 {
                let arow = &a[r * m1..(r + 1) * m1];
                let hrow = &mut half[r * m2..(r + 1) * m2];
                for (i1, av) in arow.iter().enumerate() {
                    let prow = &pr[i1 * m2..(i1 + 1) * m2];
                    for (h, pv) in hrow.iter_mut().zip(prow) {
                        *h += av * pv;
                    }
                }
            }
            for r in 0..o1 {
                let hrow = &half[r * m2..(r + 1) * m2];
                let orow = &mut out[r * o2..(r + 1) * o2];
                for (c, o) in orow.iter_mut().enumerate() {
                    let brow = &b[c * m2..(c + 1) * m2];
                    *o += hrow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
    }
    let d1 = PI / s.thetas1_deg.len() as f64;
    let d2 = PI / s.thetas2_deg.len() as f64;
    let scale = d1 * d2 / (4.0 * PI.powi(4));
    out.iter_mut().for_each(|v| *v *= scale);
    let mut w = WignerGrid2 { q1: *q1, p1: *p1, q2: *q2, p2: *p2, values: out };
    let total = w.integral();
    if total.abs() > 1e-12 {
        w.values.iter_mut().for_each(|v| *v /= total);
    }
    Ok(w)
}
