//! Prompt execution against model backends, with a response cache,
//! retries and bounded parallelism.

mod backend;
mod cache;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Proverb;
use crate::prompting::{parse_response, LabelMode, ModelPrediction, PredictionKind, PromptBuilder, PromptSpec, Technique};
use crate::shots::ShotProvider;
use crate::Scalar;

pub use backend::{extract_text, Backend, BackendError, ChatMessage, ChatRequest, HttpBackend, HttpBackendConfig};
pub use cache::{cache_key, sha256_hex, CacheEntry, ResponseCache, CACHE_FILE};
pub use mock::{MockError, RuleMockBackend, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            model_name: "mock".into(),
            temperature: 0.7,
            top_p: 0.9,
            max_tokens: 256,
            timeout_secs: 60,
            max_retries: 3,
            parallelism: 4,
            backoff_ms: 500,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: &str| Err(ClientError::Config(m.to_string()));
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite value >= 0");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive");
        }
        Ok(())
    }

    pub fn request(&self, prompt: &str) -> ChatRequest {
        ChatRequest {
            model: self.model_name.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("gave up after {attempts} attempt(s): {source}")]
    Backend {
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl ClientError {
    pub fn is_config(&self) -> bool {
        matches!(self, ClientError::Config(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStage {
    Shots,
    Prompt,
    Backend,
    Parse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub stage: FailureStage,
    pub message: String,
}

/// Outcome for one input proverb, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord<T> {
    pub proverb_id: String,
    pub technique: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<ModelPrediction<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<ItemFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPredictions<T> {
    pub records: Vec<PredictionRecord<T>>,
}

impl<T> CorpusPredictions<T> {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &ItemFailure)> {
        self.records.iter().filter_map(|r| r.failure.as_ref().map(|f| (r.proverb_id.as_str(), f)))
    }

    pub fn n_failed(&self) -> usize {
        self.failures().count()
    }
}

/// Splits `n` inputs into consecutive units of at most `size`.
pub fn batch_ranges(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let size = size.max(1);
    (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect()
}

pub struct ModelClient<'a> {
    backend: &'a dyn Backend,
    config: InferenceConfig,
    cache: ResponseCache,
    builder: PromptBuilder,
    attempts: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl<'a> ModelClient<'a> {
    pub fn new(backend: &'a dyn Backend, config: InferenceConfig, cache: ResponseCache) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(ModelClient {
            backend,
            config,
            cache,
            builder: PromptBuilder::default(),
            attempts: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        })
    }

    pub fn with_builder(mut self, builder: PromptBuilder) -> Self {
        self.builder = builder;
        self
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Backend calls made so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::SeqCst)
    }

    /// Sends one prompt, consulting the cache first and retrying transient
    /// failures with exponential backoff.
    pub fn predict_one(&self, technique: &str, prompt: &str) -> Result<String, ClientError> {
        if prompt.trim().is_empty() {
            return Err(ClientError::EmptyPrompt);
        }
        let model = &self.config.model_name;
        if let Some(hit) = self.cache.get(&cache_key(model, technique, prompt)) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let request = self.config.request(prompt);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.attempts.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete(&request) {
                Ok(text) => {
                    self.cache.put(model, technique, prompt, &text)?;
                    return Ok(text);
                }
                Err(e) if e.is_transient() && attempt <= self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                }
                Err(source) => return Err(ClientError::Backend { attempts: attempt, source }),
            }
        }
    }

    /// Runs `spec` over every proverb. Output is aligned with the input;
    /// item-level problems are recorded, only configuration errors abort.
    pub fn predict_corpus<T: Scalar>(
        &self,
        proverbs: &[Proverb],
        spec: &PromptSpec,
        shots: Option<&dyn ShotProvider>,
        mode: LabelMode,
    ) -> Result<CorpusPredictions<T>, ClientError> {
        spec.technique.validate().map_err(|e| ClientError::Config(e.to_string()))?;
        if matches!(spec.technique, Technique::FewShot { .. }) && shots.is_none() {
            return Err(ClientError::Config(format!("{} needs a shot provider", spec.tag())));
        }
        let tag = spec.tag();
        let units = batch_ranges(proverbs.len(), spec.technique.inputs_per_prompt());
        let slots: Vec<Mutex<Option<Vec<PredictionRecord<T>>>>> = units.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.parallelism.min(units.len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let u = next.fetch_add(1, Ordering::SeqCst);
                    let Some(range) = units.get(u) else { break };
                    let out = self.run_unit(&proverbs[range.clone()], spec, &tag, shots, mode);
                    *slots[u].lock().expect("slot lock") = Some(out);
                });
            }
        });
        let records = slots
            .into_iter()
            .flat_map(|s| s.into_inner().expect("slot lock").expect("every unit ran"))
            .collect();
        Ok(CorpusPredictions { records })
    }

    fn run_unit<T: Scalar>(
        &self,
        unit: &[Proverb],
        spec: &PromptSpec,
        tag: &str,
        shots: Option<&dyn ShotProvider>,
        mode: LabelMode,
    ) -> Vec<PredictionRecord<T>> {
        let fail = |stage, message: String| {
            unit.iter()
                .map(|p| PredictionRecord {
                    proverb_id: p.id.clone(),
                    technique: tag.to_string(),
                    prediction: None,
                    failure: Some(ItemFailure { stage, message: message.clone() }),
                })
                .collect::<Vec<_>>()
        };
        let shot_set = match shots {
            Some(provider) if matches!(spec.technique, Technique::FewShot { .. }) => match provider.shots_for(&unit[0].id, &unit[0].text) {
                Ok(s) => Some(s),
                Err(e) => return fail(FailureStage::Shots, e.to_string()),
            },
            _ => None,
        };
        let texts: Vec<&str> = unit.iter().map(|p| p.text.as_str()).collect();
        let prompt = match self.builder.build(spec, &texts, shot_set.as_ref()) {
            Ok(p) => p,
            Err(e) => return fail(FailureStage::Prompt, e.to_string()),
        };
        let response = match self.predict_one(tag, &prompt) {
            Ok(r) => r,
            Err(e) => return fail(FailureStage::Backend, e.to_string()),
        };
        let parsed = match parse_response::<T>(spec, &response, unit.len(), mode) {
            Ok(p) => p,
            Err(e) => return fail(FailureStage::Parse, format!("{e} (response: {response:?})")),
        };
        let per_item: Vec<ModelPrediction<T>> = match parsed.kind {
            PredictionKind::Labels { labels } => labels
                .into_iter()
                .map(|label| ModelPrediction { kind: PredictionKind::Label { label }, raw: response.clone() })
                .collect(),
            _ => vec![parsed],
        };
        unit.iter()
            .zip(per_item)
            .map(|(p, pred)| PredictionRecord {
                proverb_id: p.id.clone(),
                technique: tag.to_string(),
                prediction: Some(pred),
                failure: None,
            })
            .collect()
    }
}
