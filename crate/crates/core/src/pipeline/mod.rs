//! Stage functions over files, and a config-driven runner chaining them.
//!
//! Every stage reads the artifacts of earlier stages from the output
//! directory, so any stage can also be invoked on its own.

mod config;
mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotation::{
    agreement_report, map_emotions_to_sentiment, ordinalize, self_agreement, write_ordinal_csv, AgreementOptions,
    AgreementReport, AnnotationError, AnnotationMatrix, EmotionSentimentMap, OrdinalRow, SelfAgreement,
};
use crate::client::{
    Backend, ClientError, CorpusPredictions, FailureStage, HttpBackend, HttpBackendConfig, ModelClient,
    PredictionRecord, ResponseCache, RuleMockBackend,
};
use crate::corpus::{
    load_annotations, load_proverbs, topic_frequencies, write_annotations, write_proverbs, Corpus, CorpusError,
    FileFormat, Proverb, Variety,
};
use crate::dialect::{diff_entry, load_matches, match_corpora, render_html, write_matches, DialectError, MatchResult, MatchThreshold};
use crate::evaluation::{
    evaluate_distributions, evaluate_labels, gold_from_corpus, load_predictions, render_batch_table,
    render_distribution_table, render_shots_table, write_predictions, DistributionEvalReport, DistributionTarget,
    EvalError, EvalReport, FailurePolicy, GoldItem,
};
use crate::geomap::{aggregate_regions, emit_geojson, write_region_csv, GeoError, Grouping, Layer, Skipped};
use crate::prompting::{LabelMode, PromptBuilder, PromptError, PromptSpec, Technique, Templates};
use crate::shots::{
    low_variance_selection, random_pick, CachedEmbedder, DynOptions, Embedder, HttpEmbedder, ShotCandidate, ShotError,
    ShotSelector, ShotSet, ShotStrategy, TrigramEmbedder,
};
use crate::{Real, Sentiment};

pub use config::{
    BackendConfig, BackendKind, DialectConfig, EmbedderKind, EvaluateConfig, IaaConfig, InputsConfig, MapConfig,
    MockRule, PipelineConfig, PredictConfig, PredictTarget, ShotsConfig, Stage,
};
pub use manifest::{file_sha256, write_atomic, InputDigest, RunManifest, RunStatus};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("stage `{stage}` failed; partial artifacts are in {}: {source}", artifacts.display())]
    Stage {
        stage: Stage,
        artifacts: PathBuf,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// 2 configuration, 3 data, 4 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Backend(_) => 4,
            PipelineError::Stage { source, .. } => source.exit_code(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Data(format!("{}: {e}", path.display()))
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(CorpusError, AnnotationError, EvalError, DialectError, GeoError);

impl From<ShotError> for PipelineError {
    fn from(e: ShotError) -> Self {
        match e {
            ShotError::BadK(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<PromptError> for PipelineError {
    fn from(e: PromptError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<ClientError> for PipelineError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Config(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Backend(e.to_string()),
        }
    }
}

/// File layout of one output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RunPaths { dir: dir.into() }
    }

    pub fn proverbs(&self) -> PathBuf {
        self.dir.join("proverbs.jsonl")
    }
    pub fn annotations(&self) -> PathBuf {
        self.dir.join("annotations.jsonl")
    }
    pub fn ingest_summary(&self) -> PathBuf {
        self.dir.join("ingest.json")
    }
    pub fn agreement(&self) -> PathBuf {
        self.dir.join("agreement.json")
    }
    pub fn ordinal(&self) -> PathBuf {
        self.dir.join("ordinal.csv")
    }
    pub fn shots(&self) -> PathBuf {
        self.dir.join("shots.json")
    }
    pub fn predictions(&self, tag: &str) -> PathBuf {
        self.dir.join("predictions").join(format!("{tag}.jsonl"))
    }
    pub fn evaluation_json(&self) -> PathBuf {
        self.dir.join("evaluation.json")
    }
    pub fn evaluation_txt(&self) -> PathBuf {
        self.dir.join("evaluation.txt")
    }
    pub fn matches(&self) -> PathBuf {
        self.dir.join("matches.csv")
    }
    pub fn dialect_diff(&self) -> PathBuf {
        self.dir.join("dialect_diff.html")
    }
    pub fn geojson(&self, source: &str, layer: Layer) -> PathBuf {
        self.dir.join("maps").join(format!("{source}_{layer}.geojson"))
    }
    pub fn regions(&self, source: &str) -> PathBuf {
        self.dir.join("maps").join(format!("{source}_regions.csv"))
    }
    pub fn map_skipped(&self, source: &str) -> PathBuf {
        self.dir.join("maps").join(format!("{source}_skipped.json"))
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
}

fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), PipelineError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("serializable artifact");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::io(path, e))
}

// ---- ingest ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub n_proverbs: usize,
    pub n_standard: usize,
    pub n_localized: usize,
    pub n_annotations: usize,
    pub annotators: Vec<String>,
    pub top_topics: Vec<(String, usize)>,
}

/// Loads and validates raw input files.
pub fn ingest(proverbs: &Path, annotations: Option<&Path>, format: Option<FileFormat>) -> Result<Corpus, PipelineError> {
    let fmt = |p: &Path| format.unwrap_or_else(|| FileFormat::from_path(p));
    let ps = load_proverbs(proverbs, fmt(proverbs))?;
    let anns = match annotations {
        Some(a) => load_annotations(a, fmt(a))?,
        None => Vec::new(),
    };
    Ok(Corpus::new(ps, anns)?)
}

pub fn summarize(corpus: &Corpus) -> IngestSummary {
    IngestSummary {
        n_proverbs: corpus.proverbs.len(),
        n_standard: corpus.of_variety(Variety::Standard).count(),
        n_localized: corpus.of_variety(Variety::Localized).count(),
        n_annotations: corpus.annotations.len(),
        annotators: corpus.annotator_ids.clone(),
        top_topics: topic_frequencies(corpus, 10),
    }
}

/// Writes the validated corpus as JSONL plus a summary.
pub fn write_ingested(corpus: &Corpus, paths: &RunPaths) -> Result<IngestSummary, PipelineError> {
    std::fs::create_dir_all(&paths.dir).map_err(|e| PipelineError::io(&paths.dir, e))?;
    write_proverbs(&paths.proverbs(), &corpus.proverbs, FileFormat::Jsonl)?;
    write_annotations(&paths.annotations(), &corpus.annotations, FileFormat::Jsonl)?;
    let summary = summarize(corpus);
    write_json(&paths.ingest_summary(), &summary)?;
    Ok(summary)
}

/// Reads the corpus written by [`write_ingested`].
pub fn load_ingested(paths: &RunPaths) -> Result<Corpus, PipelineError> {
    let p = paths.proverbs();
    if !p.exists() {
        return Err(PipelineError::Data(format!("{} is missing; run the ingest stage first", p.display())));
    }
    let a = paths.annotations();
    ingest(&p, a.exists().then_some(a.as_path()), Some(FileFormat::Jsonl))
}

// ---- iaa ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub sentiment: AgreementReport<Real>,
    /// Agreement on sentiment derived from the chosen emotions.
    pub emotion_sentiment: Option<AgreementReport<Real>>,
    pub self_agreement: Option<SelfAgreement<Real>>,
}

impl IaaReport {
    pub fn excluded(&self, opts: &AgreementOptions) -> Vec<String> {
        if opts.exclude_flagged {
            self.sentiment.flagged_annotators.clone()
        } else {
            Vec::new()
        }
    }
}

pub fn iaa(corpus: &Corpus, opts: &AgreementOptions) -> Result<IaaReport, PipelineError> {
    if corpus.annotations.is_empty() {
        return Err(PipelineError::Data("agreement needs annotations, none were loaded".into()));
    }
    let matrix = AnnotationMatrix::from_records(&corpus.annotations, |r| r.sentiment);
    let sentiment = agreement_report(&matrix, opts)?;
    let map = EmotionSentimentMap::default();
    let emo = AnnotationMatrix::from_records(&corpus.annotations, |r| {
        (!r.emotions.is_empty()).then(|| map_emotions_to_sentiment(&r.emotions, &map).ok()).flatten()
    });
    let emotion_sentiment = if emo.items.is_empty() {
        None
    } else {
        agreement_report(&emo, opts).map_err(|e| log::warn!("emotion-derived agreement skipped: {e}")).ok()
    };
    let self_agreement = self_agreement(&corpus.annotations, &corpus.annotations, &map)
        .map_err(|e| log::warn!("self-agreement skipped: {e}"))
        .ok();
    Ok(IaaReport { sentiment, emotion_sentiment, self_agreement })
}

/// Flagged annotators recorded by an earlier agreement run, if any.
pub fn excluded_annotators(paths: &RunPaths, opts: &AgreementOptions) -> Result<Vec<String>, PipelineError> {
    let path = paths.agreement();
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(read_json::<IaaReport>(&path)?.excluded(opts))
}

// ---- ordinalize ----

pub fn ordinal_stage(corpus: &Corpus, excluded: &[String], out: &Path) -> Result<Vec<OrdinalRow>, PipelineError> {
    let rows = ordinalize(corpus, excluded)?;
    if rows.is_empty() {
        return Err(PipelineError::Data("no proverb has sentiment votes".into()));
    }
    ensure_parent(out)?;
    write_ordinal_csv(out, &rows)?;
    Ok(rows)
}

// ---- select-shots ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotsArtifact {
    pub seed: u64,
    /// Annotated proverbs with their ratings; the pool every strategy draws from.
    pub pool: Vec<ShotCandidate>,
    /// Corpus-level selections keyed by technique tag, for inspection.
    pub selections: BTreeMap<String, ShotSet>,
}

pub fn shot_pool(corpus: &Corpus, excluded: &[String]) -> Vec<ShotCandidate> {
    corpus
        .annotations_by_proverb()
        .into_iter()
        .filter_map(|(p, recs)| {
            let ratings: Vec<Sentiment> = recs
                .into_iter()
                .filter(|r| !excluded.contains(&r.annotator_id))
                .filter_map(|r| r.sentiment)
                .collect();
            (!ratings.is_empty()).then(|| ShotCandidate { id: p.id.clone(), text: p.text.clone(), ratings })
        })
        .collect()
}

pub fn select_shots(corpus: &Corpus, excluded: &[String], seed: u64) -> Result<ShotsArtifact, PipelineError> {
    let pool = shot_pool(corpus, excluded);
    if pool.is_empty() {
        return Err(PipelineError::Data("no annotated proverbs to draw shots from".into()));
    }
    let mut selections = BTreeMap::new();
    for k in 1..=3 {
        let shots: Vec<_> = pool
            .iter()
            .map(|c| crate::shots::Shot { id: c.id.clone(), text: c.text.clone(), label: c.gold() })
            .collect();
        let picks = [
            (ShotStrategy::Rp, random_pick(&shots, k, seed, None)),
            (ShotStrategy::Lvs, low_variance_selection(&pool, k, None)),
        ];
        for (strategy, pick) in picks {
            let tag = Technique::FewShot { k, strategy }.tag();
            match pick {
                Ok(set) => {
                    selections.insert(tag, set);
                }
                Err(e) => log::warn!("{tag}: {e}"),
            }
        }
    }
    Ok(ShotsArtifact { seed, pool, selections })
}

// ---- predict ----

pub fn make_backend(cfg: &PipelineConfig) -> Result<Box<dyn Backend>, PipelineError> {
    match cfg.backend.kind {
        BackendKind::Mock => {
            let rules = cfg.backend.rules.iter().map(|r| (r.keyword.clone(), r.label)).collect();
            let mock = RuleMockBackend::new(rules).map_err(|e| PipelineError::Config(format!("backend.rules: {e}")))?;
            Ok(Box::new(mock))
        }
        BackendKind::Http => {
            let env = HttpBackendConfig::from_env();
            let url = cfg
                .backend
                .url
                .clone()
                .or_else(|| env.as_ref().map(|e| e.url.clone()))
                .ok_or_else(|| PipelineError::Config("http backend needs backend.url or MODEL_API_URL".into()))?;
            Ok(Box::new(HttpBackend::new(HttpBackendConfig {
                url,
                api_key: env.and_then(|e| e.api_key),
                auth_header: cfg.backend.auth_header.clone(),
                auth_prefix: cfg.backend.auth_prefix.clone(),
                timeout_secs: cfg.inference.timeout_secs,
            })))
        }
    }
}

pub fn make_embedder(cfg: &ShotsConfig, timeout_secs: u64) -> Result<Box<dyn Embedder>, PipelineError> {
    Ok(match cfg.embedder {
        EmbedderKind::Trigram => {
            if cfg.embed_dim < 8 {
                return Err(PipelineError::Config("shots.embed_dim must be at least 8".into()));
            }
            Box::new(CachedEmbedder::new(TrigramEmbedder { dim: cfg.embed_dim }))
        }
        EmbedderKind::Http => {
            let url = cfg
                .embed_url
                .clone()
                .ok_or_else(|| PipelineError::Config("shots.embed_url is required for the http embedder".into()))?;
            Box::new(CachedEmbedder::new(HttpEmbedder::new(url, cfg.embed_dim, Duration::from_secs(timeout_secs))))
        }
    })
}

pub fn select_targets(corpus: &Corpus, target: PredictTarget) -> Vec<Proverb> {
    let annotated: std::collections::HashSet<&str> =
        corpus.annotations.iter().filter(|a| a.sentiment.is_some()).map(|a| a.proverb_id.as_str()).collect();
    corpus
        .proverbs
        .iter()
        .filter(|p| match target {
            PredictTarget::All => true,
            PredictTarget::Standard => p.variety == Variety::Standard,
            PredictTarget::Localized => p.variety == Variety::Localized,
            PredictTarget::Annotated => annotated.contains(p.id.as_str()),
        })
        .cloned()
        .collect()
}

/// Settings shared by every technique in one predict run.
pub struct PredictSettings<'a> {
    pub pool: Option<&'a [ShotCandidate]>,
    pub seed: u64,
    pub shots: &'a ShotsConfig,
    pub label_mode: LabelMode,
    pub timeout_secs: u64,
}

/// Runs each technique over `proverbs`. Item failures stay in the records;
/// a technique where every item failed at the backend is a backend error.
pub fn predict(
    client: &ModelClient<'_>,
    proverbs: &[Proverb],
    techniques: &[Technique],
    settings: &PredictSettings<'_>,
) -> Result<Vec<(String, CorpusPredictions<Real>)>, PipelineError> {
    let mut out = Vec::new();
    for &technique in techniques {
        let spec = PromptSpec::new(technique);
        let selector = match technique {
            Technique::FewShot { k, strategy } => {
                let pool = settings
                    .pool
                    .ok_or_else(|| PipelineError::Config(format!("{} needs a shot pool", spec.tag())))?;
                Some(ShotSelector {
                    strategy,
                    k,
                    seed: settings.seed,
                    pool: pool.to_vec(),
                    dyn_options: DynOptions { pool_size: settings.shots.dyn_pool, mode: settings.shots.dyn_mode },
                    embedder: make_embedder(settings.shots, settings.timeout_secs)?,
                })
            }
            _ => None,
        };
        let provider = selector.as_ref().map(|s| s as &dyn crate::shots::ShotProvider);
        let result = client.predict_corpus::<Real>(proverbs, &spec, provider, settings.label_mode)?;
        let backend_failures: Vec<_> =
            result.failures().filter(|(_, f)| f.stage == FailureStage::Backend).collect();
        if !result.records.is_empty() && backend_failures.len() == result.records.len() {
            return Err(PipelineError::Backend(format!("{}: {}", spec.tag(), backend_failures[0].1.message)));
        }
        if result.n_failed() > 0 {
            log::warn!("{}: {} of {} items failed", spec.tag(), result.n_failed(), result.records.len());
        }
        out.push((spec.tag(), result));
    }
    Ok(out)
}

// ---- evaluate ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArtifact {
    pub model: String,
    pub labels: BTreeMap<String, EvalReport<Real>>,
    pub distributions: BTreeMap<String, DistributionEvalReport<Real>>,
}

pub fn evaluate(
    gold: &[GoldItem],
    runs: &[(String, Vec<PredictionRecord<Real>>)],
    model: &str,
    policy: FailurePolicy,
    target: DistributionTarget,
) -> Result<EvaluationArtifact, PipelineError> {
    let mut labels = BTreeMap::new();
    let mut distributions = BTreeMap::new();
    for (tag, records) in runs {
        labels.insert(tag.clone(), evaluate_labels(gold, records, policy)?);
        let technique: Option<Technique> = tag.parse().ok();
        if technique == Some(Technique::Zp) {
            distributions.insert(tag.clone(), evaluate_distributions(gold, records, target, policy)?);
        }
    }
    Ok(EvaluationArtifact { model: model.to_string(), labels, distributions })
}

/// Text tables for a set of evaluations, one block per table kind.
pub fn render_evaluation(artifact: &EvaluationArtifact) -> String {
    let model = artifact.model.as_str();
    let mut shots = Vec::new();
    let mut batches = Vec::new();
    for (tag, report) in &artifact.labels {
        match tag.parse::<Technique>() {
            Ok(Technique::Zb { .. }) => batches.push((model, tag.as_str(), report)),
            Ok(Technique::Zp) => {}
            _ => shots.push((model, tag.as_str(), report)),
        }
    }
    let mut out = String::new();
    if !shots.is_empty() {
        out.push_str("Weighted F1 by shot setting\n\n");
        out.push_str(&render_shots_table(&shots));
    }
    if !artifact.distributions.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("Percentage prediction\n\n");
        let rows: Vec<_> = artifact.distributions.values().map(|r| (model, r)).collect();
        out.push_str(&render_distribution_table(&rows));
    }
    if !batches.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("Weighted F1 by batch size\n\n");
        out.push_str(&render_batch_table(&batches));
    }
    out
}

// ---- match-dialects ----

pub fn match_dialects(
    corpus: &Corpus,
    threshold: MatchThreshold,
    matches_out: &Path,
    diff_out: &Path,
) -> Result<Vec<MatchResult<Real>>, PipelineError> {
    let standards: Vec<Proverb> = corpus.of_variety(Variety::Standard).cloned().collect();
    let localized: Vec<Proverb> = corpus.of_variety(Variety::Localized).cloned().collect();
    let matches = match_corpora::<Real>(&standards, &localized, threshold)?;
    ensure_parent(matches_out)?;
    write_matches(matches_out, &matches)?;
    let by_id: HashMap<&str, &Proverb> = corpus.proverbs.iter().map(|p| (p.id.as_str(), p)).collect();
    let entries: Vec<_> = matches
        .iter()
        .map(|m| diff_entry(by_id[m.standard_id.as_str()], by_id[m.localized_id.as_str()]))
        .collect();
    ensure_parent(diff_out)?;
    std::fs::write(diff_out, render_html(&entries)).map_err(|e| PipelineError::io(diff_out, e))?;
    Ok(matches)
}

// ---- map ----

/// Localized proverbs labelled with the gold label of their matched standard.
pub fn gold_map_labels<'a>(
    corpus: &'a Corpus,
    matches: &[MatchResult<Real>],
    gold: &[GoldItem],
) -> Vec<(&'a Proverb, Sentiment)> {
    let gold_by_id: HashMap<&str, Sentiment> = gold.iter().map(|g| (g.proverb_id.as_str(), g.label)).collect();
    let match_by_loc: HashMap<&str, &str> =
        matches.iter().map(|m| (m.localized_id.as_str(), m.standard_id.as_str())).collect();
    corpus
        .of_variety(Variety::Localized)
        .filter_map(|p| {
            let std = match_by_loc.get(p.id.as_str())?;
            Some((p, *gold_by_id.get(std)?))
        })
        .collect()
}

/// Localized proverbs labelled by a model.
pub fn predicted_map_labels<'a>(corpus: &'a Corpus, records: &[PredictionRecord<Real>]) -> Vec<(&'a Proverb, Sentiment)> {
    let by_id: HashMap<&str, Sentiment> = records
        .iter()
        .filter_map(|r| Some((r.proverb_id.as_str(), r.prediction.as_ref()?.label()?)))
        .collect();
    corpus
        .of_variety(Variety::Localized)
        .filter_map(|p| Some((p, *by_id.get(p.id.as_str())?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub source: String,
    pub n_regions: usize,
    pub n_mapped: usize,
    pub skipped: Vec<Skipped>,
}

pub fn write_map(
    items: &[(&Proverb, Sentiment)],
    grouping: Grouping,
    source: &str,
    paths: &RunPaths,
) -> Result<MapSummary, PipelineError> {
    let agg = aggregate_regions::<Real>(items, grouping)?;
    for layer in [Layer::Positive, Layer::Negative] {
        let path = paths.geojson(source, layer);
        ensure_parent(&path)?;
        emit_geojson(&agg.regions, layer, &path)?;
    }
    write_region_csv(&paths.regions(source), &agg.regions)?;
    let summary = MapSummary {
        source: source.to_string(),
        n_regions: agg.regions.len(),
        n_mapped: agg.regions.iter().map(|r| r.n).sum(),
        skipped: agg.skipped,
    };
    write_json(&paths.map_skipped(source), &summary.skipped)?;
    Ok(summary)
}

// ---- runner ----

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub stages: Vec<Stage>,
    pub ingest: Option<IngestSummary>,
    pub n_ordinal: Option<usize>,
    pub evaluation: Option<EvaluationArtifact>,
    pub n_matches: Option<usize>,
    pub maps: Vec<MapSummary>,
    pub backend_calls: usize,
}

/// Runs the configured stages with the backend the config names.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let backend = if cfg.wants(Stage::Predict) { Some(make_backend(cfg)?) } else { None };
    run_pipeline_with(cfg, backend.as_deref())
}

/// Runs the configured stages. `backend` is required only for predict.
pub fn run_pipeline_with(cfg: &PipelineConfig, backend: Option<&dyn Backend>) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let paths = RunPaths::new(&cfg.output_dir);
    std::fs::create_dir_all(&paths.dir).map_err(|e| PipelineError::io(&paths.dir, e))?;
    let mut manifest = RunManifest::start(cfg)?;
    manifest.write(&paths.manifest())?;

    let mut summary = RunSummary::default();
    for stage in Stage::ALL.into_iter().filter(|s| cfg.wants(*s)) {
        log::info!("stage {stage}");
        let result = run_stage(stage, cfg, &paths, backend, &mut summary);
        if let Err(e) = result {
            manifest.fail(&e);
            manifest.write(&paths.manifest())?;
            return Err(PipelineError::Stage { stage, artifacts: paths.dir.clone(), source: Box::new(e) });
        }
        summary.stages.push(stage);
        manifest.stages_completed.push(stage);
    }
    manifest.finish();
    manifest.write(&paths.manifest())?;
    Ok(summary)
}

fn run_stage(
    stage: Stage,
    cfg: &PipelineConfig,
    paths: &RunPaths,
    backend: Option<&dyn Backend>,
    summary: &mut RunSummary,
) -> Result<(), PipelineError> {
    let opts = cfg.iaa.options();
    match stage {
        Stage::Ingest => {
            let corpus = ingest(&cfg.inputs.proverbs, cfg.inputs.annotations.as_deref(), cfg.inputs.format)?;
            summary.ingest = Some(write_ingested(&corpus, paths)?);
        }
        Stage::Iaa => {
            let corpus = load_ingested(paths)?;
            write_json(&paths.agreement(), &iaa(&corpus, &opts)?)?;
        }
        Stage::Ordinalize => {
            let corpus = load_ingested(paths)?;
            let excluded = excluded_annotators(paths, &opts)?;
            summary.n_ordinal = Some(ordinal_stage(&corpus, &excluded, &paths.ordinal())?.len());
        }
        Stage::SelectShots => {
            let corpus = load_ingested(paths)?;
            let excluded = excluded_annotators(paths, &opts)?;
            write_json(&paths.shots(), &select_shots(&corpus, &excluded, cfg.seed)?)?;
        }
        Stage::Predict => {
            let backend = backend.ok_or_else(|| PipelineError::Config("predict needs a backend".into()))?;
            let corpus = load_ingested(paths)?;
            let techniques = cfg.predict.parsed_techniques()?;
            let few_shot = techniques.iter().any(|t| matches!(t, Technique::FewShot { .. }));
            let shots: Option<ShotsArtifact> = if few_shot {
                let p = paths.shots();
                if !p.exists() {
                    return Err(PipelineError::Data(format!(
                        "{} is missing; few-shot prediction needs the select-shots stage",
                        p.display()
                    )));
                }
                Some(read_json(&p)?)
            } else {
                None
            };
            let builder = match &cfg.predict.templates_dir {
                Some(dir) => PromptBuilder { templates: Templates::from_dir(dir)?, ..PromptBuilder::default() },
                None => PromptBuilder::default(),
            };
            let cache = ResponseCache::open(&cfg.cache_dir()).map_err(|e| PipelineError::io(&cfg.cache_dir(), e))?;
            let client = ModelClient::new(backend, cfg.inference.clone(), cache)?.with_builder(builder);
            let targets = select_targets(&corpus, cfg.predict.target);
            let settings = PredictSettings {
                pool: shots.as_ref().map(|s| s.pool.as_slice()),
                seed: cfg.seed,
                shots: &cfg.shots,
                label_mode: cfg.predict.label_mode,
                timeout_secs: cfg.inference.timeout_secs,
            };
            for (tag, result) in predict(&client, &targets, &techniques, &settings)? {
                let path = paths.predictions(&tag);
                ensure_parent(&path)?;
                write_predictions(&path, &result.records)?;
            }
            summary.backend_calls += client.attempts();
        }
        Stage::Evaluate => {
            let corpus = load_ingested(paths)?;
            let excluded = excluded_annotators(paths, &opts)?;
            let gold = gold_from_corpus(&corpus, &excluded);
            let mut runs = Vec::new();
            for technique in cfg.predict.parsed_techniques()? {
                let tag = technique.tag();
                let path = paths.predictions(&tag);
                if !path.exists() {
                    return Err(PipelineError::Data(format!("{} is missing; run the predict stage first", path.display())));
                }
                runs.push((tag, load_predictions::<Real>(&path)?));
            }
            let artifact = evaluate(
                &gold,
                &runs,
                &cfg.inference.model_name,
                cfg.evaluate.failure_policy,
                cfg.evaluate.distribution_target,
            )?;
            write_json(&paths.evaluation_json(), &artifact)?;
            let txt = paths.evaluation_txt();
            std::fs::write(&txt, render_evaluation(&artifact)).map_err(|e| PipelineError::io(&txt, e))?;
            summary.evaluation = Some(artifact);
        }
        Stage::MatchDialects => {
            let corpus = load_ingested(paths)?;
            let matches = match_dialects(&corpus, cfg.dialect.threshold, &paths.matches(), &paths.dialect_diff())?;
            log::info!("{} localized proverbs matched", matches.len());
            summary.n_matches = Some(matches.len());
        }
        Stage::Map => {
            let corpus = load_ingested(paths)?;
            for source in &cfg.map.sources {
                let items = if source == "gold" {
                    let m = paths.matches();
                    if !m.exists() {
                        return Err(PipelineError::Data(format!("{} is missing; the gold map needs match-dialects", m.display())));
                    }
                    let matches = load_matches::<Real>(&m)?;
                    let excluded = excluded_annotators(paths, &opts)?;
                    gold_map_labels(&corpus, &matches, &gold_from_corpus(&corpus, &excluded))
                } else {
                    let p = paths.predictions(source);
                    if !p.exists() {
                        return Err(PipelineError::Data(format!("{} is missing; run predict with {source}", p.display())));
                    }
                    predicted_map_labels(&corpus, &load_predictions::<Real>(&p)?)
                };
                summary.maps.push(write_map(&items, cfg.map.grouping, source, paths)?);
            }
        }
    }
    Ok(())
}
