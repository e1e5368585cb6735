use std::collections::BTreeMap;
use std::path::Path;

use cvtomo::io::sha256_file;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// A stage output. Files carrying wall-clock timings are listed without a hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub outputs: Vec<OutputFile>,
    pub runtime_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_eig: Option<f64>,
}

impl Metrics {
    fn absorb(&mut self, other: Metrics) {
        self.overlap = other.overlap.or(self.overlap);
        self.fidelity = other.fidelity.or(self.fidelity);
        self.objective = other.objective.or(self.objective);
        self.min_eig = other.min_eig.or(self.min_eig);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// configuration of the most recent stage
    pub config: Option<PipelineConfig>,
    pub stages: BTreeMap<String, StageRecord>,
    pub metrics: Metrics,
}

impl RunManifest {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| CliError::BadInput { path, reason: e.to_string() }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(CliError::BadInput { path, reason: e.to_string() }),
        }
    }

    /// `outputs` are `(file name, hashed)` pairs relative to `dir`.
    pub fn record(
        &mut self,
        dir: &Path,
        stage: &str,
        cfg: &PipelineConfig,
        outputs: &[(&str, bool)],
        runtime_ms: u64,
        metrics: Metrics,
    ) -> CliResult<()> {
        let mut files = Vec::with_capacity(outputs.len());
        for &(name, hashed) in outputs {
            let sha256 = if hashed {
                Some(sha256_file(&dir.join(name)).map_err(|e| CliError::Config(e.to_string()))?)
            } else {
                None
            };
            files.push(OutputFile { path: name.to_string(), sha256 });
        }
        self.config = Some(cfg.clone());
        self.stages.insert(stage.to_string(), StageRecord { outputs: files, runtime_ms });
        self.metrics.absorb(metrics);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        crate::stages::write_file(dir, MANIFEST, text.as_bytes())
    }

    /// Names of listed files that are missing or no longer match their hash.
    pub fn stale_files(&self, dir: &Path) -> Vec<String> {
        let mut stale = Vec::new();
        for rec in self.stages.values() {
            for out in &rec.outputs {
                let path = dir.join(&out.path);
                let ok = match &out.sha256 {
                    Some(h) => sha256_file(&path).is_ok_and(|actual| &actual == h),
                    None => path.exists(),
                };
                if !ok {
                    stale.push(out.path.clone());
                }
            }
        }
        stale
    }
}
