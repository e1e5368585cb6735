use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use cvtomo::estimator::Weighting;
use cvtomo::homodyne::uniform_angles_deg;
use cvtomo::io::Palette;
use cvtomo::states::StateKind;
use cvtomo::{Grid1D, StateSpec};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// A parameter that is either derived automatically or pinned by the user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting<T> {
    Auto,
    Value(T),
}

impl<T: FromStr> FromStr for Setting<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Setting::Auto);
        }
        s.parse().map(Setting::Value).map_err(|e| format!("expected `auto` or a value: {e}"))
    }
}

impl<T: Serialize> Serialize for Setting<T> {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            Setting::Auto => ser.serialize_str("auto"),
            Setting::Value(v) => v.serialize(ser),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Setting<T> {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(de)?;
        if v.as_str().is_some_and(|s| s.eq_ignore_ascii_case("auto")) {
            return Ok(Setting::Auto);
        }
        serde_json::from_value(v).map(Setting::Value).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPair {
    pub q: Grid1D,
    pub p: Grid1D,
}

/// Everything a pipeline stage may need; every stage reads the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub state: StateSpec,
    pub grid: GridPair,
    pub angles_deg: Vec<f64>,
    pub noise_sigma: f64,
    pub k_c: Setting<f64>,
    pub dim: Setting<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub weighting: Weighting,
    pub palette: Palette,
    pub max_iters: usize,
    pub k_c_list: Vec<f64>,
    /// 0-based modes transposed by the PPT test
    pub partition: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let g = Grid1D::standard();
        Self {
            state: StateSpec::vacuum(),
            grid: GridPair { q: g, p: g },
            angles_deg: uniform_angles_deg(180),
            noise_sigma: 0.01,
            k_c: Setting::Auto,
            dim: Setting::Auto,
            seed: 0,
            out_dir: PathBuf::from("run"),
            weighting: Weighting::Density,
            palette: Palette::Gray,
            max_iters: 3000,
            k_c_list: vec![2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 25.0],
            partition: vec![0],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> CliResult<()> {
        for g in [&self.grid.q, &self.grid.p] {
            Grid1D::new(g.q_min, g.q_max, g.points)?;
        }
        if self.angles_deg.is_empty() {
            return Err(CliError::Config("angles_deg is empty".into()));
        }
        if let Some(a) = self.angles_deg.iter().find(|a| !(0.0..180.0).contains(*a)) {
            return Err(CliError::Config(format!("angle {a} deg outside [0, 180)")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CliError::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if let Setting::Value(k) = self.k_c {
            if !(k > 0.0 && k.is_finite()) {
                return Err(CliError::Config(format!("k_c must be positive, got {k}")));
            }
        }
        if self.max_iters == 0 {
            return Err(CliError::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    match s {
        "density" => Ok(Weighting::Density),
        "unit" => Ok(Weighting::Unit),
        _ => Err(format!("unknown weighting {s:?} (density|unit)")),
    }
}

/// Flags shared by every subcommand. Values from `--config` take precedence.
#[derive(Debug, Clone, Default, Args)]
pub struct StageArgs {
    /// JSON file with PipelineConfig keys; overrides the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// directory holding stage files and manifest.json
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// vacuum | coherent | squeezed_vacuum | displaced_squeezed | fock | cat | two_mode_squeezed
    #[arg(long)]
    pub state: Option<StateKind>,
    /// Re α
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Im α
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_im: Option<f64>,
    /// squeezing parameter ζ
    #[arg(long, allow_hyphen_values = true)]
    pub zeta: Option<f64>,
    /// photon number of a Fock state
    #[arg(long)]
    pub n: Option<usize>,
    /// relative phase of a cat state (radians)
    #[arg(long, allow_hyphen_values = true)]
    pub cat_phase: Option<f64>,
    /// lower end of both phase-space axes
    #[arg(long, allow_hyphen_values = true)]
    pub grid_min: Option<f64>,
    /// upper end of both phase-space axes
    #[arg(long, allow_hyphen_values = true)]
    pub grid_max: Option<f64>,
    /// nodes per axis
    #[arg(long)]
    pub points: Option<usize>,
    /// number of uniformly spaced angles in [0, 180)
    #[arg(long, conflicts_with = "angles_deg")]
    pub angles: Option<usize>,
    /// explicit angle list in degrees
    #[arg(long, value_delimiter = ',')]
    pub angles_deg: Option<Vec<f64>>,
    /// additive Gaussian noise on the sinogram
    #[arg(long)]
    pub sigma: Option<f64>,
    /// back-projection cutoff, or `auto` for the grid Nyquist limit
    #[arg(long)]
    pub k_c: Option<Setting<f64>>,
    /// Fock truncation, or `auto` from the state's tail mass
    #[arg(long)]
    pub dim: Option<Setting<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// estimator sample weights: density | unit
    #[arg(long, value_parser = parse_weighting)]
    pub weighting: Option<Weighting>,
    /// heatmap palette: gray | signed
    #[arg(long)]
    pub palette: Option<Palette>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// cutoffs tried by sweep-cutoff
    #[arg(long, value_delimiter = ',')]
    pub k_c_list: Option<Vec<f64>>,
    /// modes transposed by the PPT test (0-based)
    #[arg(long, value_delimiter = ',')]
    pub partition: Option<Vec<usize>>,
}

impl StageArgs {
    /// Defaults, then flags, then the `--config` file on top.
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = self.flag_config()?;
        if let Some(path) = &self.config {
            cfg = overlay_file(cfg, path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn flag_config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(kind) = self.state {
            let alpha = Complex64::new(self.alpha.unwrap_or(0.0), self.alpha_im.unwrap_or(0.0));
            let zeta = self.zeta.unwrap_or(0.0);
            cfg.state = match kind {
                StateKind::Vacuum => StateSpec::vacuum(),
                StateKind::Coherent => StateSpec::coherent(alpha),
                StateKind::SqueezedVacuum => StateSpec::squeezed_vacuum(zeta),
                StateKind::DisplacedSqueezed => StateSpec::displaced_squeezed(alpha, zeta),
                StateKind::Fock => StateSpec::fock(self.n.unwrap_or(0)),
                StateKind::Cat => StateSpec::cat(alpha, self.cat_phase.unwrap_or(0.0)),
                StateKind::TwoModeSqueezed => StateSpec::two_mode_squeezed(zeta),
            };
        }
        if self.grid_min.is_some() || self.grid_max.is_some() || self.points.is_some() {
            let d = Grid1D::standard();
            let g = Grid1D::new(
                self.grid_min.unwrap_or(d.q_min),
                self.grid_max.unwrap_or(d.q_max),
                self.points.unwrap_or(d.points),
            )?;
            cfg.grid = GridPair { q: g, p: g };
        }
        if let Some(n) = self.angles {
            cfg.angles_deg = uniform_angles_deg(n);
        }
        if let Some(a) = &self.angles_deg {
            cfg.angles_deg = a.clone();
        }
        if let Some(v) = self.sigma {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.k_c {
            cfg.k_c = v;
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.weighting {
            cfg.weighting = v;
        }
        if let Some(v) = self.palette {
            cfg.palette = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = &self.k_c_list {
            cfg.k_c_list = v.clone();
        }
        if let Some(v) = &self.partition {
            cfg.partition = v.clone();
        }
        Ok(cfg)
    }
}

/// Top-level keys of the file replace the corresponding values wholesale.
fn overlay_file(cfg: PipelineConfig, path: &Path) -> CliResult<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let file: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    overlay(cfg, file)
}

fn overlay(cfg: PipelineConfig, file: Value) -> CliResult<PipelineConfig> {
    let Value::Object(file) = file else {
        return Err(CliError::Config("config must be a JSON object".into()));
    };
    let mut merged = serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let base = merged.as_object_mut().expect("config serializes to an object");
    for (k, v) in file {
        base.insert(k, v);
    }
    serde_json::from_value(merged).map_err(|e| CliError::Config(format!("bad config: {e}")))
}
