use std::path::{Path, PathBuf};
use std::time::Instant;

use cvtomo::estimator::{estimate, objective, repair, EstimatorConfig, EstimatorReport, QuadratureDataset};
use cvtomo::fock::{choose_truncation, density_from_wigner, fidelity, Target, MAX_BANK_DIM};
use cvtomo::gaussian::{covariance_from_wigner, covariance_of, is_physical, ppt_verdict, CovarianceState, Physicality, PptReport};
use cvtomo::homodyne::{add_noise, radon_transform};
use cvtomo::io::{
    density_from_json, density_to_json, render_heatmap, sinogram_from_csv, sinogram_to_csv, wigner_from_csv,
    wigner_to_csv, Palette,
};
use cvtomo::phase_space::{marginal, overlap, purity, wigner_from_wavefunction, Axis};
use cvtomo::reconstruction::{filtered_backprojection, sweep_cutoff, Kernel};
use cvtomo::states::{fock_coefficients, make_wavefunction, StateKind};
use cvtomo::{DensityMatrix, ProjectorBank, Sinogram, Source, StateSpec, WignerGrid};
use serde::Serialize;

use crate::config::{PipelineConfig, Setting};
use crate::error::{CliError, CliResult};
use crate::manifest::{Metrics, RunManifest};

pub const WIGNER: &str = "wigner.csv";
pub const COVARIANCE: &str = "covariance.json";
pub const SINOGRAM: &str = "sinogram.csv";
pub const RECON: &str = "recon_wigner.csv";
pub const RECON_REPORT: &str = "recon_report.json";
pub const RHO_FBP: &str = "rho_fbp.json";
pub const RHO_EST: &str = "rho_est.json";
pub const EST_REPORT: &str = "estimator_report.json";
pub const ANALYSIS: &str = "analysis.json";
pub const SWEEP_CSV: &str = "cutoff_sweep.csv";
pub const SWEEP_JSON: &str = "cutoff_sweep.json";
pub const PPT_REPORT: &str = "ppt_report.json";

/// Truncation used when the state gives no usable tail estimate.
pub const FALLBACK_DIM: usize = 20;
const TRUNCATION_TOL: f64 = 1e-8;
const BANK_CACHE_ENV: &str = "CV_TOMO_CACHE";

pub fn image_name(stem: &str, palette: Palette) -> String {
    match palette {
        Palette::Gray => format!("{stem}.pgm"),
        Palette::Signed => format!("{stem}.ppm"),
    }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join(name), bytes))
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", dir.join(name).display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(dir, name, text.as_bytes())
}

fn read_upstream(dir: &Path, name: &str, stage: &'static str) -> CliResult<String> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Missing { path, stage },
        _ => CliError::BadInput { path, reason: e.to_string() },
    })
}

fn read_optional(dir: &Path, name: &str) -> CliResult<Option<String>> {
    match read_upstream(dir, name, "") {
        Ok(text) => Ok(Some(text)),
        Err(CliError::Missing { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn parse<T>(dir: &Path, name: &str, r: cvtomo::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::BadInput { path: dir.join(name), reason: e.to_string() })
}

fn load_wigner(dir: &Path, name: &str, stage: &'static str) -> CliResult<WignerGrid> {
    parse(dir, name, wigner_from_csv(&read_upstream(dir, name, stage)?))
}

fn load_sinogram(dir: &Path) -> CliResult<Sinogram> {
    parse(dir, SINOGRAM, sinogram_from_csv(&read_upstream(dir, SINOGRAM, "measure")?))
}

fn load_density(dir: &Path, name: &str, stage: &'static str) -> CliResult<DensityMatrix> {
    parse(dir, name, density_from_json(&read_upstream(dir, name, stage)?))
}

fn require_single_mode(cfg: &PipelineConfig, stage: &str) -> CliResult<()> {
    if cfg.state.kind == StateKind::TwoModeSqueezed {
        return Err(CliError::Config(format!(
            "`{stage}` works on single-mode states; two-mode states support generate, ppt and analyze --ppt"
        )));
    }
    Ok(())
}

pub fn resolve_dim(cfg: &PipelineConfig) -> CliResult<usize> {
    let dim = match cfg.dim {
        Setting::Value(d) => d,
        Setting::Auto => match choose_truncation(&cfg.state, TRUNCATION_TOL) {
            Ok(d) => d.min(MAX_BANK_DIM),
            Err(cvtomo::Error::UnsupportedKind(_)) => FALLBACK_DIM,
            Err(e) => return Err(e.into()),
        },
    };
    if dim == 0 || dim > MAX_BANK_DIM {
        return Err(CliError::Config(format!("dim must be in 1..={MAX_BANK_DIM}, got {dim}")));
    }
    Ok(dim)
}

fn kernel(cfg: &PipelineConfig, s: &Sinogram) -> CliResult<Kernel> {
    Ok(match cfg.k_c {
        Setting::Auto => Kernel::nyquist(&s.xgrid),
        Setting::Value(k) => Kernel::new(k)?,
    })
}

fn bank(cfg: &PipelineConfig, dim: usize) -> CliResult<ProjectorBank> {
    let cache = std::env::var_os(BANK_CACHE_ENV).map(PathBuf::from);
    Ok(ProjectorBank::load_or_build(dim, &cfg.grid.q, &cfg.grid.p, cache.as_deref())?)
}

fn millis(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn finish(
    cfg: &PipelineConfig,
    stage: &str,
    outputs: &[(&str, bool)],
    start: Instant,
    metrics: Metrics,
) -> CliResult<()> {
    let dir = &cfg.out_dir;
    let mut m = RunManifest::load(dir)?;
    let stale: Vec<String> = m
        .stale_files(dir)
        .into_iter()
        .filter(|f| !outputs.iter().any(|(name, _)| name == f))
        .collect();
    if !stale.is_empty() {
        eprintln!("cvtomo: warning: changed since recorded in the manifest: {}", stale.join(", "));
    }
    m.record(dir, stage, cfg, outputs, millis(start), metrics)?;
    m.save(dir)
}

pub fn generate(cfg: &PipelineConfig) -> CliResult<()> {
    let start = Instant::now();
    let dir = &cfg.out_dir;
    if cfg.state.kind == StateKind::TwoModeSqueezed {
        write_json(dir, COVARIANCE, &covariance_of(&cfg.state)?)?;
        println!("generate: two-mode squeezed vacuum ζ={} → {}", cfg.state.zeta, dir.join(COVARIANCE).display());
        return finish(cfg, "generate", &[(COVARIANCE, true)], start, Metrics::default());
    }
    let psi = make_wavefunction(&cfg.state, &cfg.grid.q)?;
    let w = wigner_from_wavefunction(&psi, &cfg.grid.p)?;
    let img = image_name("wigner", cfg.palette);
    write_file(dir, WIGNER, wigner_to_csv(&w).as_bytes())?;
    write_file(dir, &img, &render_heatmap(&w, cfg.palette))?;
    let mut outputs = vec![(WIGNER, true), (img.as_str(), true)];
    if cfg.state.kind.is_gaussian() {
        write_json(dir, COVARIANCE, &covariance_of(&cfg.state)?)?;
        outputs.push((COVARIANCE, true));
    }
    println!(
        "generate: {} on {}×{} grid, integral {:.6}, min {:.4}, max {:.4}",
        cfg.state.kind.name(),
        w.qgrid.points,
        w.pgrid.points,
        w.integral(),
        w.min(),
        w.max()
    );
    finish(cfg, "generate", &outputs, start, Metrics::default())
}

pub fn measure(cfg: &PipelineConfig) -> CliResult<()> {
    require_single_mode(cfg, "measure")?;
    let start = Instant::now();
    let dir = &cfg.out_dir;
    let w = load_wigner(dir, WIGNER, "generate")?;
    let clean = radon_transform(&w, &cfg.angles_deg, &w.qgrid)?;
    let s = add_noise(&clean, cfg.noise_sigma, cfg.seed)?;
    write_file(dir, SINOGRAM, sinogram_to_csv(&s).as_bytes())?;
    println!("measure: {} angles × {} points, σ = {}", s.angle_count(), s.xgrid.points, s.noise_sigma);
    finish(cfg, "measure", &[(SINOGRAM, true)], start, Metrics::default())
}

#[derive(Debug, Serialize)]
struct ReconReport {
    k_c: f64,
    integral: f64,
    min: f64,
    max: f64,
    overlap: Option<f64>,
    max_abs_error: Option<f64>,
    dim: usize,
    fbp_min_eig: f64,
    runtime_ms: u64,
}

pub fn reconstruct(cfg: &PipelineConfig) -> CliResult<()> {
    require_single_mode(cfg, "reconstruct")?;
    let start = Instant::now();
    let dir = &cfg.out_dir;
    let s = load_sinogram(dir)?;
    let k = kernel(cfg, &s)?;
    let recon = filtered_backprojection(&s, Some(k), &cfg.grid.q, &cfg.grid.p)?;

    let truth = match read_optional(dir, WIGNER)? {
        Some(text) => Some(parse(dir, WIGNER, wigner_from_csv(&text))?),
        None => None,
    };
    let truth = truth.filter(|t| t.same_grid(&recon));
    let overlap_truth = truth.as_ref().map(|t| overlap(&recon, t)).transpose()?;
    let max_err = truth.as_ref().map(|t| recon.max_abs_diff(t)).transpose()?;

    let dim = resolve_dim(cfg)?;
    let raw = density_from_wigner(&recon, &bank(cfg, dim)?, Source::Fbp)?;

    let img = image_name("recon_wigner", cfg.palette);
    write_file(dir, RECON, wigner_to_csv(&recon).as_bytes())?;
    write_file(dir, &img, &render_heatmap(&recon, cfg.palette))?;
    write_file(dir, RHO_FBP, density_to_json(&raw)?.as_bytes())?;
    let report = ReconReport {
        k_c: k.k_c,
        integral: recon.integral(),
        min: recon.min(),
        max: recon.max(),
        overlap: overlap_truth,
        max_abs_error: max_err,
        dim,
        fbp_min_eig: raw.meta.min_eig,
        runtime_ms: millis(start),
    };
    write_json(dir, RECON_REPORT, &report)?;
    match overlap_truth {
        Some(o) => println!("reconstruct: k_c = {:.3}, overlap with truth {o:.5}, FBP min eigenvalue {:.3e}", k.k_c, raw.meta.min_eig),
        None => println!("reconstruct: k_c = {:.3}, FBP min eigenvalue {:.3e}", k.k_c, raw.meta.min_eig),
    }
    let outputs = [(RECON, true), (img.as_str(), true), (RHO_FBP, true), (RECON_REPORT, false)];
    finish(cfg, "reconstruct", &outputs, start, Metrics { overlap: overlap_truth, ..Default::default() })
}

#[derive(Debug, Serialize)]
struct EstimatorRun {
    #[serde(flatten)]
    report: EstimatorReport,
    runtime_ms: u64,
}

pub fn estimate_stage(cfg: &PipelineConfig) -> CliResult<()> {
    require_single_mode(cfg, "estimate")?;
    let start = Instant::now();
    let dir = &cfg.out_dir;
    let s = load_sinogram(dir)?;
    let data = QuadratureDataset::from_sinogram(&s, cfg.weighting);
    let ecfg = EstimatorConfig {
        dim: resolve_dim(cfg)?,
        max_iters: cfg.max_iters,
        seed: cfg.seed,
        ..Default::default()
    };
    let est = estimate(&data, &ecfg)?;
    if !est.objective.is_finite() {
        return Err(CliError::Numerical(format!("objective is {}", est.objective)));
    }
    write_file(dir, RHO_EST, density_to_json(&est.rho)?.as_bytes())?;
    let run = EstimatorRun { report: est.report(data.len()), runtime_ms: millis(start) };
    write_json(dir, EST_REPORT, &run)?;
    println!(
        "estimate: dim {}, {} samples, objective {:.4e} after {} iterations, min eigenvalue {:.2e}",
        ecfg.dim,
        data.len(),
        est.objective,
        est.iterations,
        est.min_eig
    );
    let metrics = Metrics { objective: Some(est.objective), min_eig: Some(est.min_eig), ..Default::default() };
    finish(cfg, "estimate", &[(RHO_EST, true), (EST_REPORT, false)], start, metrics)
}

#[derive(Debug, Serialize)]
struct RhoSummary {
    dim: usize,
    trace: f64,
    min_eig: f64,
    purity: f64,
    fidelity: Option<f64>,
    photon_numbers: Vec<f64>,
    mean_photon_number: f64,
    objective: Option<f64>,
}

#[derive(Debug, Serialize)]
struct WignerSummary {
    integral: f64,
    min: f64,
    purity: f64,
    overlap_with_truth: Option<f64>,
    q_marginal: Vec<f64>,
    p_marginal: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct CovarianceSummary {
    source: &'static str,
    state: CovarianceState,
    physicality: Physicality,
}

#[derive(Debug, Serialize)]
struct Analysis {
    state: StateSpec,
    /// fidelity of the estimate with the true state
    fidelity: Option<f64>,
    estimate: Option<RhoSummary>,
    /// raw FBP density after spectral repair; `raw_min_eig` is before repair
    fbp: Option<RhoSummary>,
    fbp_raw_min_eig: Option<f64>,
    reconstruction: Option<WignerSummary>,
    covariance: Option<CovarianceSummary>,
    ppt: Option<PptReport>,
}

enum Truth {
    Pure(Vec<num_complex::Complex64>),
    Mixed(DensityMatrix),
}

/// The true state in the Fock basis: exact coefficients where available, else projected from `wigner.csv`.
fn truth_in_fock(cfg: &PipelineConfig, dim: usize, truth_w: Option<&WignerGrid>) -> CliResult<Option<Truth>> {
    match fock_coefficients(&cfg.state, dim) {
        Ok(c) => return Ok(Some(Truth::Pure(c))),
        Err(cvtomo::Error::UnsupportedKind(_)) => {}
        Err(e) => return Err(e.into()),
    }
    let Some(w) = truth_w else { return Ok(None) };
    let bank = ProjectorBank::load_or_build(dim, &w.qgrid, &w.pgrid, std::env::var_os(BANK_CACHE_ENV).map(PathBuf::from).as_deref())?;
    Ok(Some(Truth::Mixed(density_from_wigner(w, &bank, Source::Exact)?)))
}

fn summarize(rho: &DensityMatrix, truth: Option<&Truth>, objective: Option<f64>) -> CliResult<RhoSummary> {
    let fid = match truth {
        Some(Truth::Pure(c)) => Some(fidelity(rho, Target::Pure(c))?),
        Some(Truth::Mixed(m)) => Some(fidelity(rho, Target::Mixed(m))?),
        None => None,
    };
    let diag = rho.diag();
    let mean = diag.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    Ok(RhoSummary {
        dim: rho.dim(),
        trace: rho.trace(),
        min_eig: rho.meta.min_eig,
        purity: rho.purity(),
        fidelity: fid,
        photon_numbers: diag,
        mean_photon_number: mean,
        objective,
    })
}

pub fn analyze(cfg: &PipelineConfig, ppt: bool) -> CliResult<()> {
    let start = Instant::now();
    let dir = &cfg.out_dir;
    let two_mode = cfg.state.kind == StateKind::TwoModeSqueezed;
    let rho_est = if ppt && two_mode {
        None
    } else {
        Some(load_density(dir, RHO_EST, "estimate")?)
    };

    let truth_w = match read_optional(dir, WIGNER)? {
        Some(text) => Some(parse(dir, WIGNER, wigner_from_csv(&text))?),
        None => None,
    };
    let recon = match read_optional(dir, RECON)? {
        Some(text) => Some(parse(dir, RECON, wigner_from_csv(&text))?),
        None => None,
    };

    let mut analysis = Analysis {
        state: cfg.state,
        fidelity: None,
        estimate: None,
        fbp: None,
        fbp_raw_min_eig: None,
        reconstruction: None,
        covariance: None,
        ppt: None,
    };

    if let Some(rho) = &rho_est {
        let truth = truth_in_fock(cfg, rho.dim(), truth_w.as_ref())?;
        let objective_value = match read_optional(dir, SINOGRAM)? {
            Some(text) => {
                let s = parse(dir, SINOGRAM, sinogram_from_csv(&text))?;
                Some(objective(&QuadratureDataset::from_sinogram(&s, cfg.weighting), rho))
            }
            None => None,
        };
        let est = summarize(rho, truth.as_ref(), objective_value)?;
        analysis.fidelity = est.fidelity;
        analysis.estimate = Some(est);
        if let Some(text) = read_optional(dir, RHO_FBP)? {
            let raw = parse(dir, RHO_FBP, density_from_json(&text))?;
            let truth = if raw.dim() == rho.dim() { truth } else { truth_in_fock(cfg, raw.dim(), truth_w.as_ref())? };
            analysis.fbp_raw_min_eig = Some(raw.meta.min_eig);
            analysis.fbp = Some(summarize(&repair(&raw), truth.as_ref(), None)?);
        }
    }

    if let Some(r) = &recon {
        let ov = truth_w.as_ref().filter(|t| t.same_grid(r)).map(|t| overlap(r, t)).transpose()?;
        analysis.reconstruction = Some(WignerSummary {
            integral: r.integral(),
            min: r.min(),
            purity: purity(r),
            overlap_with_truth: ov,
            q_marginal: marginal(r, Axis::Q),
            p_marginal: marginal(r, Axis::P),
        });
        if cfg.state.kind.is_gaussian() && !two_mode {
            let cs = covariance_from_wigner(r);
            analysis.covariance = Some(CovarianceSummary { source: "reconstruction", physicality: is_physical(&cs), state: cs });
        }
    }

    if ppt || two_mode {
        let cs = match read_optional(dir, COVARIANCE)? {
            Some(text) => parse(dir, COVARIANCE, serde_json::from_str::<CovarianceState>(&text).map_err(Into::into))?,
            None => covariance_of(&cfg.state)?,
        };
        if cs.n_modes < 2 {
            return Err(CliError::Config("the PPT test needs a state with at least two modes".into()));
        }
        analysis.ppt = Some(ppt_verdict(&cs, &cfg.partition)?);
        if analysis.covariance.is_none() {
            analysis.covariance = Some(CovarianceSummary { source: "exact", physicality: is_physical(&cs), state: cs });
        }
    }

    write_json(dir, ANALYSIS, &analysis)?;
    if let Some(f) = analysis.fidelity {
        println!("analyze: estimator fidelity {f:.5}");
    }
    if let Some(f) = analysis.fbp.as_ref().and_then(|s| s.fidelity) {
        println!("analyze: repaired FBP fidelity {f:.5}");
    }
    if let Some(p) = &analysis.ppt {
        println!("analyze: PPT min symplectic eigenvalue {:.6} → {:?}", p.min_symplectic_eig, p.verdict);
    }
    finish(cfg, "analyze", &[(ANALYSIS, true)], start, Metrics { fidelity: analysis.fidelity, ..Default::default() })
}

pub fn sweep(cfg: &PipelineConfig) -> CliResult<()> {
    require_single_mode(cfg, "sweep-cutoff")?;
    let start = Instant::now();
    let dir = &cfg.out_dir;
    let s = load_sinogram(dir)?;
    let truth = load_wigner(dir, WIGNER, "generate")?;
    let result = sweep_cutoff(&s, &truth, &cfg.k_c_list)?;
    let mut csv = String::from("k_c,overlap,max_abs_error\n");
    for r in &result.rows {
        csv.push_str(&format!("{:?},{:?},{:?}\n", r.k_c, r.overlap, r.max_abs_error));
    }
    write_file(dir, SWEEP_CSV, csv.as_bytes())?;
    write_json(dir, SWEEP_JSON, &result)?;
    println!("sweep-cutoff: {} cutoffs, best k_c = {}", result.rows.len(), result.best_k_c);
    finish(cfg, "sweep-cutoff", &[(SWEEP_CSV, true), (SWEEP_JSON, true)], start, Metrics::default())
}

pub fn ppt_stage(cfg: &PipelineConfig) -> CliResult<()> {
    let start = Instant::now();
    let dir = &cfg.out_dir;
    let cs = match read_optional(dir, COVARIANCE)? {
        Some(text) => parse(dir, COVARIANCE, serde_json::from_str::<CovarianceState>(&text).map_err(Into::into))?,
        None => covariance_of(&cfg.state)?,
    };
    let report = ppt_verdict(&cs, &cfg.partition)?;
    write_json(dir, PPT_REPORT, &report)?;
    println!("ppt: min symplectic eigenvalue {:.6} → {:?}", report.min_symplectic_eig, report.verdict);
    finish(cfg, "ppt", &[(PPT_REPORT, true)], start, Metrics::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn auto_dim_follows_the_state() {
        let cfg = PipelineConfig { state: StateSpec::fock(3), ..Default::default() };
        assert_eq!(resolve_dim(&cfg).unwrap(), 4);
        let cfg = PipelineConfig { state: StateSpec::squeezed_vacuum(0.3), ..Default::default() };
        assert_eq!(resolve_dim(&cfg).unwrap(), FALLBACK_DIM);
        let cfg = PipelineConfig { state: StateSpec::coherent(Complex64::new(1.0, 0.0)), ..Default::default() };
        assert_eq!(resolve_dim(&cfg).unwrap(), 12);
    }

    #[test]
    fn pinned_dim_is_bounded() {
        let cfg = PipelineConfig { dim: Setting::Value(MAX_BANK_DIM + 1), ..Default::default() };
        assert_eq!(resolve_dim(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn image_extension_tracks_palette() {
        assert_eq!(image_name("wigner", Palette::Gray), "wigner.pgm");
        assert_eq!(image_name("wigner", Palette::Signed), "wigner.ppm");
    }

    #[test]
    fn missing_upstream_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        match read_upstream(dir.path(), SINOGRAM, "measure").unwrap_err() {
            CliError::Missing { stage, .. } => assert_eq!(stage, "measure"),
            e => panic!("unexpected {e:?}"),
        }
    }
}
