use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PipelineError, Stage};
use crate::client::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

/// Everything needed to repeat a run: config, input digests, seed, version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub inputs: Vec<InputDigest>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub stages_completed: Vec<Stage>,
    pub error: Option<String>,
}

pub fn file_sha256(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

impl RunManifest {
    pub fn start(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let mut inputs = Vec::new();
        for p in std::iter::once(&cfg.inputs.proverbs).chain(cfg.inputs.annotations.as_ref()) {
            inputs.push(InputDigest { path: p.display().to_string(), sha256: file_sha256(p)? });
        }
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs,
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            status: RunStatus::Running,
            stages_completed: Vec::new(),
            error: None,
        })
    }

    pub fn finish(&mut self) {
        self.status = RunStatus::Succeeded;
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
    }

    pub fn fail(&mut self, e: &PipelineError) {
        self.status = RunStatus::Failed;
        self.error = Some(e.to_string());
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(self).expect("serializable manifest");
        text.push('\n');
        write_atomic(path, text.as_bytes()).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
    }
}
