use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::backend::{Backend, BackendError, ChatRequest};
use super::cache::sha256_hex;
use crate::corpus::{normalize_with, NormalizeOptions};
use crate::Sentiment;

/// Deterministic offline backend: the first keyword found in a proverb
/// decides its label, otherwise the default label applies.
///
/// The prompt kind is recognised from the stock templates, so custom
/// templates should keep the `Proverb: ` marker and the numbered batch list.
#[derive(Debug, Clone)]
pub struct RuleMockBackend {
    rules: Vec<(String, Sentiment)>,
    default: Sentiment,
    calls: std::sync::Arc<AtomicUsize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MockError {
    #[error("rule table is empty")]
    NoRules,
    #[error("rule keyword {0:?} is blank")]
    BlankKeyword(String),
}

impl RuleMockBackend {
    /// Rules are tried in order; unmatched proverbs are `Ambiguous`.
    pub fn new(rules: Vec<(String, Sentiment)>) -> Result<Self, MockError> {
        Self::with_default(rules, Sentiment::Ambiguous)
    }

    pub fn with_default(rules: Vec<(String, Sentiment)>, default: Sentiment) -> Result<Self, MockError> {
        if rules.is_empty() {
            return Err(MockError::NoRules);
        }
        let rules = rules
            .into_iter()
            .map(|(k, s)| {
                let norm = normalize_with(&k, NormalizeOptions::MATCHING);
                if norm.is_empty() {
                    Err(MockError::BlankKeyword(k))
                } else {
                    Ok((norm, s))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(RuleMockBackend { rules, default, calls: Default::default() })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn classify(&self, proverb: &str) -> Sentiment {
        let text = normalize_with(proverb, NormalizeOptions::MATCHING);
        self.rules
            .iter()
            .find(|(k, _)| text.contains(k.as_str()))
            .map(|(_, s)| *s)
            .unwrap_or(self.default)
    }

    fn respond(&self, prompt: &str) -> String {
        if prompt.starts_with("You are given") {
            let payload = prompt.rsplit("\n\n").next().unwrap_or("");
            let labels: Vec<&str> = payload
                .lines()
                .filter_map(strip_number)
                .map(|p| self.classify(p).as_str())
                .collect();
            return labels.join(", ");
        }
        let query = prompt.rsplit("Proverb: ").next().unwrap_or(prompt);
        let label = self.classify(query);
        if prompt.contains("Percentages must sum to 100") {
            let pct = |s: Sentiment| if s == label { 100 } else { 0 };
            format!(
                "Positive: {}% Negative: {}% Ambiguous: {}%",
                pct(Sentiment::Positive),
                pct(Sentiment::Negative),
                pct(Sentiment::Ambiguous)
            )
        } else {
            label.as_str().to_string()
        }
    }
}

fn strip_number(line: &str) -> Option<&str> {
    let (num, rest) = line.split_once(". ")?;
    (!num.is_empty() && num.chars().all(|c| c.is_ascii_digit())).then_some(rest)
}

impl Backend for RuleMockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.respond(request.prompt()))
    }
}

/// Replays scripted outcomes per prompt. Each prompt's queue is consumed in
/// order and its last outcome repeats; unscripted prompts get the fallback.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Mutex<HashMap<String, VecDeque<Result<String, BackendError>>>>,
    fallback: Option<String>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(fallback: Option<String>) -> Self {
        ScriptedBackend { fallback, ..Default::default() }
    }

    pub fn script(self, prompt: &str, outcomes: Vec<Result<String, BackendError>>) -> Self {
        self.script.lock().expect("script lock").insert(sha256_hex(prompt.as_bytes()), outcomes.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut script = self.script.lock().expect("script lock");
        match script.get_mut(&sha256_hex(request.prompt().as_bytes())) {
            Some(queue) if queue.len() > 1 => queue.pop_front().expect("non-empty"),
            Some(queue) if !queue.is_empty() => queue[0].clone(),
            _ => self
                .fallback
                .clone()
                .ok_or_else(|| BackendError::Status { status: 404, body: "unscripted prompt".into() }),
        }
    }
}
