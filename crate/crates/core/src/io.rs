//! File formats: CSV grids and sinograms, JSON density matrices, the projector-bank
//! cache, and PGM/PPM heatmaps.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every CSV
//! format parses back bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{QuadratureDataset, Sample};
use crate::fock::{DensityMatrix, DensityMeta, ProjectorBank};
use crate::grid::Grid1D;
use crate::homodyne::Sinogram;
use crate::phase_space::WignerGrid;

const BANK_MAGIC: &[u8; 4] = b"CVTB";
const BANK_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::BadFile(msg.into())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| bad(format!("not an integer: {s:?}")))
}

fn join(values: impl Iterator<Item = f64>) -> String {
    let mut line = String::new();
    for (k, v) in values.enumerate() {
        if k > 0 {
            line.push(',');
        }
        let _ = write!(line, "{v:?}");
    }
    line
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

// ---------- Wigner CSV ----------

/// Header `wigner,q_min,q_max,q_points,p_min,p_max,p_points`, then one row per `q`.
pub fn wigner_to_csv(w: &WignerGrid) -> String {
    let (q, p) = (w.qgrid, w.pgrid);
    let mut out = format!(
        "wigner,{:?},{:?},{},{:?},{:?},{}\n",
        q.q_min, q.q_max, q.points, p.q_min, p.q_max, p.points
    );
    for i in 0..q.points {
        out.push_str(&join(w.values[i * p.points..(i + 1) * p.points].iter().copied()));
        out.push('\n');
    }
    out
}

pub fn wigner_from_csv(text: &str) -> Result<WignerGrid> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty Wigner file"))?.split(',').collect();
    if header.len() != 7 || header[0] != "wigner" {
        return Err(bad("Wigner CSV header must be wigner,q_min,q_max,q_points,p_min,p_max,p_points"));
    }
    let qgrid = Grid1D::new(parse_f64(header[1])?, parse_f64(header[2])?, parse_usize(header[3])?)
        .map_err(|e| bad(e.to_string()))?;
    let pgrid = Grid1D::new(parse_f64(header[4])?, parse_f64(header[5])?, parse_usize(header[6])?)
        .map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::with_capacity(qgrid.points * pgrid.points);
    let mut rows = 0;
    for line in lines {
        let row: Vec<f64> = line.split(',').map(parse_f64).collect::<Result<_>>()?;
        if row.len() != pgrid.points {
            return Err(bad(format!("row {rows} has {} values, expected {}", row.len(), pgrid.points)));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != qgrid.points {
        return Err(bad(format!("expected {} rows, found {rows}", qgrid.points)));
    }
    Ok(WignerGrid { qgrid, pgrid, values })
}

// ---------- Sinogram CSV ----------

/// First row: corner cell `sigma=<noise>` then the angles in degrees; following rows:
/// `x`, then `pr(x, θ)` per angle. The last `x` is written as the grid's `q_max`.
pub fn sinogram_to_csv(s: &Sinogram) -> String {
    let mut out = format!("sigma={:?},{}\n", s.noise_sigma, join(s.thetas_deg.iter().copied()));
    let n = s.xgrid.points;
    for i in 0..n {
        let x = if i + 1 == n { s.xgrid.q_max } else { s.xgrid.value(i) };
        let row = std::iter::once(x).chain((0..s.angle_count()).map(|t| s.at(i, t)));
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}

pub fn sinogram_from_csv(text: &str) -> Result<Sinogram> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty sinogram file"))?.split(',').collect();
    let sigma = header[0]
        .strip_prefix("sigma=")
        .ok_or_else(|| bad("sinogram corner cell must be sigma=<value>"))
        .and_then(parse_f64)?;
    let thetas_deg: Vec<f64> = header[1..].iter().map(|s| parse_f64(s)).collect::<Result<_>>()?;
    let nt = thetas_deg.len();
    let mut xs = Vec::new();
    let mut rows = Vec::new();
    for line in lines {
        let row: Vec<f64> = line.split(',').map(parse_f64).collect::<Result<_>>()?;
        if row.len() != nt + 1 {
            return Err(bad(format!("sinogram row has {} cells, expected {}", row.len(), nt + 1)));
        }
        xs.push(row[0]);
        rows.push(row[1..].to_vec());
    }
    if xs.len() < 2 {
        return Err(bad("sinogram needs at least two x rows"));
    }
    let xgrid = Grid1D::new(xs[0], xs[xs.len() - 1], xs.len()).map_err(|e| bad(e.to_string()))?;
    let n = xs.len();
    let mut values = vec![0.0; n * nt];
    for (i, row) in rows.iter().enumerate() {
        for t in 0..nt {
            values[t * n + i] = row[t];
        }
    }
    Ok(Sinogram { xgrid, thetas_deg, values, noise_sigma: sigma })
}

// ---------- quadrature dataset CSV ----------

pub fn dataset_to_csv(d: &QuadratureDataset) -> String {
    let mut out = String::from("x,theta_deg,pr,weight\n");
    for s in &d.samples {
        out.push_str(&join([s.x, s.theta_deg, s.pr, s.weight].into_iter()));
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<QuadratureDataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("x,theta_deg,pr,weight") {
        return Err(bad("dataset CSV header must be x,theta_deg,pr,weight"));
    }
    let mut samples = Vec::new();
    for line in lines {
        let row: Vec<f64> = line.split(',').map(parse_f64).collect::<Result<_>>()?;
        if row.len() != 4 {
            return Err(bad("dataset rows need 4 cells"));
        }
        samples.push(Sample { x: row[0], theta_deg: row[1], pr: row[2], weight: row[3] });
    }
    Ok(QuadratureDataset { samples })
}

// ---------- density matrix JSON ----------

#[derive(Serialize, Deserialize)]
struct DensityJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    meta: DensityMeta,
}

pub fn density_to_json(rho: &DensityMatrix) -> Result<String> {
    let d = rho.dim();
    let part = |f: fn(Complex64) -> f64| (0..d).map(|m| (0..d).map(|n| f(rho.entry(m, n))).collect()).collect();
    let j = DensityJson { dim: d, re: part(|c| c.re), im: part(|c| c.im), meta: rho.meta };
    Ok(serde_json::to_string_pretty(&j)?)
}

pub fn density_from_json(text: &str) -> Result<DensityMatrix> {
    let j: DensityJson = serde_json::from_str(text)?;
    let d = j.dim;
    if j.re.len() != d || j.im.len() != d || j.re.iter().chain(&j.im).any(|r| r.len() != d) {
        return Err(bad("density matrix arrays do not match dim"));
    }
    let m = DMatrix::from_fn(d, d, |a, b| Complex64::new(j.re[a][b], j.im[a][b]));
    let mut rho = DensityMatrix::new(m, j.meta.source).map_err(|e| bad(e.to_string()))?;
    rho.meta = j.meta;
    Ok(rho)
}

// ---------- projector bank cache ----------

fn grid_bytes(g: &Grid1D, out: &mut Vec<u8>) {
    out.extend_from_slice(&g.q_min.to_le_bytes());
    out.extend_from_slice(&g.q_max.to_le_bytes());
    out.extend_from_slice(&(g.points as u64).to_le_bytes());
}

/// `bank_d<dim>_<hash>.bin`, hashing the exact grid parameters.
pub fn bank_cache_file_name(dim: usize, qgrid: &Grid1D, pgrid: &Grid1D) -> String {
    let mut key = Vec::new();
    grid_bytes(qgrid, &mut key);
    grid_bytes(pgrid, &mut key);
    format!("bank_d{dim}_{}.bin", &sha256_hex(&key)[..16])
}

/// `CVTB`, version, dim, both grids, then `re, im` pairs of the upper-triangle grids.
pub fn write_bank(path: &Path, bank: &ProjectorBank) -> Result<()> {
    let (q, p) = bank.grids();
    let mut buf = Vec::new();
    buf.extend_from_slice(BANK_MAGIC);
    buf.extend_from_slice(&BANK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(bank.dim() as u64).to_le_bytes());
    grid_bytes(&q, &mut buf);
    grid_bytes(&p, &mut buf);
    for grid in bank.raw() {
        for v in grid {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    // write then rename so a concurrent reader never sees a partial file
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n).ok_or_else(|| bad("truncated projector bank file"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn grid(&mut self) -> Result<Grid1D> {
        let (a, b, n) = (self.f64()?, self.f64()?, self.u64()? as usize);
        Grid1D::new(a, b, n).map_err(|e| bad(e.to_string()))
    }
}

pub fn read_bank(path: &Path) -> Result<ProjectorBank> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != BANK_MAGIC {
        return Err(bad("not a projector bank file"));
    }
    let version = cur.u32()?;
    if version != BANK_VERSION {
        return Err(bad(format!("unsupported bank version {version}")));
    }
    let dim = cur.u64()? as usize;
    if dim == 0 || dim > crate::fock::MAX_BANK_DIM {
        return Err(bad(format!("bank dimension {dim} out of range")));
    }
    let (q, p) = (cur.grid()?, cur.grid()?);
    let npts = q.points * p.points;
    let count = dim * (dim + 1) / 2;
    if buf.len() != cur.pos + count * npts * 16 {
        return Err(bad("projector bank payload has the wrong size"));
    }
    let mut wigners = Vec::with_capacity(count);
    for _ in 0..count {
        let mut g = Vec::with_capacity(npts);
        for _ in 0..npts {
            g.push(Complex64::new(cur.f64()?, cur.f64()?));
        }
        wigners.push(g);
    }
    ProjectorBank::from_parts(dim, q, p, wigners)
}

// ---------- heatmaps ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    /// linear black (min) to white (max), binary PGM
    Gray,
    /// blue (negative) through white (zero) to red (positive), binary PPM
    Signed,
}

impl std::str::FromStr for Palette {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" => Ok(Palette::Gray),
            "signed" => Ok(Palette::Signed),
            _ => Err(Error::InvalidConfig(format!("unknown palette {s:?} (gray|signed)"))),
        }
    }
}

/// Image rows run from `p_max` (top) to `p_min`; columns run along `q`.
pub fn render_heatmap(w: &WignerGrid, palette: Palette) -> Vec<u8> {
    let (nq, np) = (w.qgrid.points, w.pgrid.points);
    let pixel = |row: usize, col: usize| w.at(col, np - 1 - row);
    match palette {
        Palette::Gray => {
            let (lo, hi) = (w.min(), w.max());
            let span = if hi > lo { hi - lo } else { 1.0 };
            let mut out = format!("P5\n{nq} {np}\n255\n").into_bytes();
            for r in 0..np {
                for c in 0..nq {
                    out.push((255.0 * (pixel(r, c) - lo) / span).round().clamp(0.0, 255.0) as u8);
                }
            }
            out
        }
        Palette::Signed => {
            let scale = w.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let mut out = format!("P6\n{nq} {np}\n255\n").into_bytes();
            for r in 0..np {
                for c in 0..nq {
                    let t = (pixel(r, c) / scale).clamp(-1.0, 1.0);
                    let fade = (255.0 * (1.0 - t.abs())).round() as u8;
                    let rgb = if t < 0.0 { [fade, fade, 255] } else { [255, fade, fade] };
                    out.extend_from_slice(&rgb);
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Source;
    use crate::phase_space::wigner_from_wavefunction;
    use crate::states::{make_wavefunction, StateSpec};
    use proptest::prelude::*;

    fn exact(spec: StateSpec) -> WignerGrid {
        let g = Grid1D::symmetric(5.0, 41).unwrap();
        wigner_from_wavefunction(&make_wavefunction(&spec, &g).unwrap(), &g).unwrap()
    }

    #[test]
    fn wigner_csv_round_trip() {
        let w = exact(StateSpec::fock(1));
        assert_eq!(wigner_from_csv(&wigner_to_csv(&w)).unwrap(), w);
        assert!(wigner_from_csv("wigner,0,1,2\n").is_err());
    }

    #[test]
    fn sinogram_csv_round_trip() {
        let g = Grid1D::new(-5.0, 5.0, 100).unwrap();
        let values: Vec<f64> = (0..300).map(|k| (k as f64 * 0.37).sin() / 7.0).collect();
        let s = Sinogram { xgrid: g, thetas_deg: vec![0.0, 1.0, 90.5], values, noise_sigma: 0.02 };
        let back = sinogram_from_csv(&sinogram_to_csv(&s)).unwrap();
        assert_eq!(back, s);
        assert!(back.xgrid.same_as(&g));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let d = QuadratureDataset {
            samples: vec![
                Sample { x: -0.1, theta_deg: 15.0, pr: 0.3, weight: 1.0 / 3.0 },
                Sample { x: 2.5e-7, theta_deg: 179.0, pr: 0.0, weight: 0.01 },
            ],
        };
        assert_eq!(dataset_from_csv(&dataset_to_csv(&d)).unwrap(), d);
    }

    #[test]
    fn density_json_keeps_meta() {
        let mut rho = DensityMatrix::diagonal(&[0.7, 0.3], Source::Fbp).unwrap();
        rho.meta.min_eig = -0.25;
        let back = density_from_json(&density_to_json(&rho).unwrap()).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn bank_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid1D::symmetric(4.0, 21).unwrap();
        let bank = ProjectorBank::load_or_build(3, &g, &g, Some(dir.path())).unwrap();
        let path = dir.path().join(bank_cache_file_name(3, &g, &g));
        assert!(path.exists());
        let loaded = read_bank(&path).unwrap();
        assert_eq!(loaded.raw(), bank.raw());
        let again = ProjectorBank::load_or_build(3, &g, &g, Some(dir.path())).unwrap();
        assert_eq!(again.raw(), bank.raw());
        assert_ne!(bank_cache_file_name(3, &g, &g), bank_cache_file_name(4, &g, &g));
        fs::write(&path, b"CVTBjunk").unwrap();
        assert!(read_bank(&path).is_err());
    }

    #[test]
    fn heatmap_examples() {
        let vac = exact(StateSpec::vacuum());
        let img = render_heatmap(&vac, Palette::Gray);
        let header = b"P5\n41 41\n255\n";
        assert_eq!(&img[..header.len()], header);
        let px = &img[header.len()..];
        let brightest = px.iter().enumerate().max_by_key(|(_, v)| **v).unwrap().0;
        assert_eq!((brightest / 41, brightest % 41), (20, 20));
        assert_eq!(img, render_heatmap(&vac, Palette::Gray));

        let f1 = render_heatmap(&exact(StateSpec::fock(1)), Palette::Signed);
        let header = b"P6\n41 41\n255\n";
        let px = &f1[header.len()..];
        let centre = &px[(20 * 41 + 20) * 3..(20 * 41 + 20) * 3 + 3];
        assert!(centre[2] == 255 && centre[0] < 128, "{centre:?}");
    }

    #[test]
    fn heatmap_golden_digest() {
        // 3×2 grid with known values: gray bytes are fixed by the linear map
        let g = Grid1D::new(0.0, 2.0, 3).unwrap();
        let p = Grid1D::new(0.0, 1.0, 2).unwrap();
        let w = WignerGrid { qgrid: g, pgrid: p, values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0] };
        let img = render_heatmap(&w, Palette::Gray);
        assert_eq!(&img[b"P5\n3 2\n255\n".len()..], &[51, 153, 255, 0, 102, 204]);
    }

    proptest! {
        #[test]
        fn csv_floats_round_trip(v in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 4)) {
            let g = Grid1D::new(-1.0, 1.0, 2).unwrap();
            let w = WignerGrid { qgrid: g, pgrid: g, values: v };
            prop_assert_eq!(wigner_from_csv(&wigner_to_csv(&w)).unwrap(), w);
        }
    }
}
