use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::annotation::{AgreementOptions, DEFAULT_MIN_MEAN_CORR};
use crate::client::InferenceConfig;
use crate::corpus::FileFormat;
use crate::dialect::MatchThreshold;
use crate::evaluation::{DistributionTarget, FailurePolicy};
use crate::geomap::Grouping;
use crate::prompting::{LabelMode, Technique};
use crate::shots::{DynPoolMode, DEFAULT_DYN_POOL};
use crate::Sentiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Iaa,
    Ordinalize,
    SelectShots,
    Predict,
    Evaluate,
    MatchDialects,
    Map,
}

impl Stage {
    /// Execution order.
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Iaa,
        Stage::Ordinalize,
        Stage::SelectShots,
        Stage::Predict,
        Stage::Evaluate,
        Stage::MatchDialects,
        Stage::Map,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Iaa => "iaa",
            Stage::Ordinalize => "ordinalize",
            Stage::SelectShots => "select-shots",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::MatchDialects => "match-dialects",
            Stage::Map => "map",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim())
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    pub proverbs: PathBuf,
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    /// Inferred from the extension when absent.
    #[serde(default)]
    pub format: Option<FileFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IaaConfig {
    pub min_mean_corr: f64,
    pub exclude_flagged: bool,
}

impl Default for IaaConfig {
    fn default() -> Self {
        IaaConfig { min_mean_corr: DEFAULT_MIN_MEAN_CORR, exclude_flagged: true }
    }
}

impl IaaConfig {
    pub fn options(&self) -> AgreementOptions {
        AgreementOptions { min_mean_corr: self.min_mean_corr, exclude_flagged: self.exclude_flagged }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Trigram,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotsConfig {
    pub dyn_pool: usize,
    pub dyn_mode: DynPoolMode,
    pub embedder: EmbedderKind,
    pub embed_url: Option<String>,
    pub embed_dim: usize,
}

impl Default for ShotsConfig {
    fn default() -> Self {
        ShotsConfig {
            dyn_pool: DEFAULT_DYN_POOL,
            dyn_mode: DynPoolMode::PerClass,
            embedder: EmbedderKind::Trigram,
            embed_url: None,
            embed_dim: 512,
        }
    }
}

/// Which proverbs the predict stage sends to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictTarget {
    /// Proverbs with at least one sentiment vote.
    Annotated,
    Standard,
    Localized,
    #[default]
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// Technique tags such as `z0`, `zb10`, `zp`, `fs2-lvs`.
    pub techniques: Vec<String>,
    pub target: PredictTarget,
    pub label_mode: LabelMode,
    pub templates_dir: Option<PathBuf>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            techniques: vec!["z0".into()],
            target: PredictTarget::All,
            label_mode: LabelMode::Tolerant,
            templates_dir: None,
        }
    }
}

impl PredictConfig {
    pub fn parsed_techniques(&self) -> Result<Vec<Technique>, PipelineError> {
        self.techniques
            .iter()
            .map(|t| t.parse::<Technique>().map_err(|e| PipelineError::Config(format!("predict.techniques: {e}"))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub keyword: String,
    pub label: Sentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Falls back to `MODEL_API_URL`.
    pub url: Option<String>,
    pub auth_header: String,
    pub auth_prefix: String,
    /// Rules for the mock backend, tried in order.
    pub rules: Vec<MockRule>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            url: None,
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub failure_policy: FailurePolicy,
    pub distribution_target: DistributionTarget,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DialectConfig {
    pub threshold: MatchThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub grouping: Grouping,
    /// `gold` for labels carried over from matched standards, or a
    /// technique tag for model predictions on localized proverbs.
    pub sources: Vec<String>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { grouping: Grouping::Auto, sources: vec!["gold".into()] }
    }
}

fn default_seed() -> u64 {
    13
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    pub inputs: InputsConfig,
    #[serde(default)]
    pub iaa: IaaConfig,
    #[serde(default)]
    pub shots: ShotsConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub dialect: DialectConfig,
    #[serde(default)]
    pub map: MapConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a TOML config; relative paths are taken from the config's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.inputs.proverbs);
        if let Some(p) = self.inputs.annotations.as_mut() {
            fix(p);
        }
        if let Some(p) = self.cache_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.predict.templates_dir.as_mut() {
            fix(p);
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn wants(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Checks that every requested stage has what it needs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let needs_annotations = [Stage::Iaa, Stage::Ordinalize, Stage::SelectShots, Stage::Evaluate];
        if self.inputs.annotations.is_none() {
            if let Some(st) = needs_annotations.iter().find(|s| self.wants(**s)) {
                return Err(PipelineError::Config(format!("stage `{st}` needs inputs.annotations, which is not set")));
            }
        }
        let techniques = self.predict.parsed_techniques()?;
        if self.wants(Stage::Predict) {
            if techniques.is_empty() {
                return Err(PipelineError::Config("predict.techniques is empty".into()));
            }
            let few_shot = techniques.iter().any(|t| matches!(t, Technique::FewShot { .. }));
            if few_shot && self.inputs.annotations.is_none() {
                return Err(PipelineError::Config("few-shot techniques need inputs.annotations for the shot pool".into()));
            }
            self.inference.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            if self.backend.kind == BackendKind::Mock && self.backend.rules.is_empty() {
                return Err(PipelineError::Config("the mock backend needs at least one backend.rules entry".into()));
            }
        }
        if let MatchThreshold::Normalized(t) = self.dialect.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(PipelineError::Config(format!("dialect.threshold {t} is outside [0, 1]")));
            }
        }
        for src in &self.map.sources {
            if src != "gold" && src.parse::<Technique>().is_err() {
                return Err(PipelineError::Config(format!("map.sources: {src:?} is neither `gold` nor a technique tag")));
            }
        }
        Ok(())
    }
}
