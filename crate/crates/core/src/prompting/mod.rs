//! Prompt templates for every prompting technique, and strict parsing of
//! the model responses they ask for.

mod parse;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::shots::{ShotSet, ShotStrategy};

pub use parse::{
    parse_batch_labels, parse_label, parse_percentages, parse_response, Distribution, LabelMode, ModelPrediction,
    ParseError, PredictionKind,
};

pub const BATCH_SIZES: [usize; 3] = [10, 20, 30];

pub const Z0_TEMPLATE: &str =
    "Classify the sentiment of the given proverb as Negative, Positive, or Ambiguous.\n\nProverb: {proverb}";

pub const ZB_TEMPLATE: &str = "You are given {batch_number} proverbs.\n\
Classify each proverb strictly as one of: Positive, Negative, Ambiguous.\n\
Return the results ONLY in this exact format (no explanations, no extra text):\n\
Positive, Negative, Ambiguous\n\n{proverb}";

pub const ZP_TEMPLATE: &str = "Estimate the percentage of how you would classify the given proverb as Positive, \
Negative, or Ambiguous. Percentages must sum to 100. Return strictly in this format: Positive: XX% Negative: XX% \
Ambiguous: XX%\n\nProverb: {proverb}";

pub const FEW_SHOT_TEMPLATE: &str = "Considering the example(s), classify the sentiment of the given proverb as \
Negative, Positive, or Ambiguous.\n\n{examples}\n\nProverb: {proverb}";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("batch size must be one of 10, 20, 30; got {0}")]
    BadBatchSize(usize),
    #[error("few-shot k must be 1, 2 or 3; got {0}")]
    BadK(usize),
    #[error("technique {technique} expects {expected} proverb(s), got {got}")]
    WrongProverbCount { technique: String, expected: String, got: usize },
    #[error("technique {0} takes shots but none were given")]
    MissingShots(String),
    #[error("technique {0} does not take shots")]
    UnexpectedShots(String),
    #[error("shot set has k={got}, technique wants k={expected}")]
    ShotCountMismatch { expected: usize, got: usize },
    #[error("unknown technique {0:?}")]
    UnknownTechnique(String),
    #[error("template {path}: {message}")]
    Template { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Technique {
    Z0,
    Zb { batch_size: usize },
    Zp,
    FewShot { k: usize, strategy: ShotStrategy },
}

impl Technique {
    pub fn batch(batch_size: usize) -> Result<Self, PromptError> {
        if BATCH_SIZES.contains(&batch_size) {
            Ok(Technique::Zb { batch_size })
        } else {
            Err(PromptError::BadBatchSize(batch_size))
        }
    }

    pub fn few_shot(k: usize, strategy: ShotStrategy) -> Result<Self, PromptError> {
        if (1..=3).contains(&k) {
            Ok(Technique::FewShot { k, strategy })
        } else {
            Err(PromptError::BadK(k))
        }
    }

    /// Short stable identifier, e.g. `z0`, `zb20`, `zp`, `fs2-lvs`.
    pub fn tag(&self) -> String {
        match self {
            Technique::Z0 => "z0".into(),
            Technique::Zb { batch_size } => format!("zb{batch_size}"),
            Technique::Zp => "zp".into(),
            Technique::FewShot { k, strategy } => format!("fs{k}-{}", strategy.tag()),
        }
    }

    /// Number of proverbs per prompt.
    pub fn inputs_per_prompt(&self) -> usize {
        match self {
            Technique::Zb { batch_size } => *batch_size,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        match *self {
            Technique::Zb { batch_size } => Technique::batch(batch_size).map(|_| ()),
            Technique::FewShot { k, strategy } => Technique::few_shot(k, strategy).map(|_| ()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for Technique {
    type Err = PromptError;

    /// Parses the output of [`Technique::tag`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let unknown = || PromptError::UnknownTechnique(s.clone());
        match s.as_str() {
            "z0" => Ok(Technique::Z0),
            "zp" => Ok(Technique::Zp),
            _ if s.starts_with("zb") => Technique::batch(s[2..].parse().map_err(|_| unknown())?),
            _ if s.starts_with("fs") => {
                let (k, strategy) = s[2..].split_once('-').ok_or_else(unknown)?;
                Technique::few_shot(k.parse().map_err(|_| unknown())?, strategy.parse().map_err(|_| unknown())?)
            }
            _ => Err(unknown()),
        }
    }
}

/// Language of the proverb payload; instructions are always English.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadLanguage {
    #[default]
    Greek,
    English,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub technique: Technique,
    #[serde(default)]
    pub language: PayloadLanguage,
}

impl PromptSpec {
    pub fn new(technique: Technique) -> Self {
        PromptSpec { technique, language: PayloadLanguage::Greek }
    }

    /// Technique tag, suffixed with `-en` for English payloads.
    pub fn tag(&self) -> String {
        match self.language {
            PayloadLanguage::Greek => self.technique.tag(),
            PayloadLanguage::English => format!("{}-en", self.technique.tag()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotOrder {
    /// Positive, Negative, Ambiguous, repeating.
    #[default]
    Interleaved,
    /// All of one class before the next.
    Grouped,
}

/// Prompt templates with `{proverb}`, `{batch_number}` and `{examples}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub z0: String,
    pub zb: String,
    pub zp: String,
    pub few_shot: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            z0: Z0_TEMPLATE.into(),
            zb: ZB_TEMPLATE.into(),
            zp: ZP_TEMPLATE.into(),
            few_shot: FEW_SHOT_TEMPLATE.into(),
        }
    }
}

impl Templates {
    /// Overrides defaults with `z0.txt`, `zb.txt`, `zp.txt`, `few_shot.txt`
    /// from `dir` where present. A trailing newline in a file is dropped.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Templates::default();
        for (name, slot) in [
            ("z0.txt", &mut t.z0),
            ("zb.txt", &mut t.zb),
            ("zp.txt", &mut t.zp),
            ("few_shot.txt", &mut t.few_shot),
        ] {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Template {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if !body.contains("{proverb}") {
                return Err(PromptError::Template {
                    path: path.display().to_string(),
                    message: "missing {proverb} placeholder".into(),
                });
            }
            *slot = body.strip_suffix('\n').unwrap_or(&body).to_string();
        }
        Ok(t)
    }
}

/// Single pass over the template, so substituted text is never re-scanned.
fn render(template: &str, batch_number: Option<usize>, examples: Option<&str>, proverb: &str) -> String {
    let batch = batch_number.map(|n| n.to_string());
    let mut out = String::with_capacity(template.len() + proverb.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let value = tail.find('}').and_then(|end| {
            let v = match &tail[1..end] {
                "proverb" => Some(proverb),
                "examples" => examples,
                "batch_number" => batch.as_deref(),
                _ => None,
            };
            v.map(|v| (v, end))
        });
        match value {
            Some((v, end)) => {
                out.push_str(v);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// `Proverb: <text>\nSentiment: <label>` blocks separated by blank lines.
pub fn render_examples(shots: &ShotSet, order: ShotOrder) -> String {
    let list = match order {
        ShotOrder::Interleaved => shots.interleaved(),
        ShotOrder::Grouped => shots.grouped(),
    };
    list.iter()
        .map(|s| format!("Proverb: {}\nSentiment: {}", s.text, s.label))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone, Default)]
pub struct PromptBuilder {
    pub templates: Templates,
    pub shot_order: ShotOrder,
}

impl PromptBuilder {
    pub fn new(templates: Templates, shot_order: ShotOrder) -> Self {
        PromptBuilder { templates, shot_order }
    }

    /// Instantiates the template for `spec`. Zb takes between 1 and
    /// batch_size proverbs (a final short batch is stated as its real size);
    /// all other techniques take exactly one.
    pub fn build(&self, spec: &PromptSpec, proverbs: &[&str], shots: Option<&ShotSet>) -> Result<String, PromptError> {
        let t = spec.technique;
        t.validate()?;
        let count_err = |expected: String| PromptError::WrongProverbCount {
            technique: t.tag(),
            expected,
            got: proverbs.len(),
        };
        match (t, shots) {
            (Technique::FewShot { .. }, None) => return Err(PromptError::MissingShots(t.tag())),
            (Technique::FewShot { k, .. }, Some(s)) if s.k != k => {
                return Err(PromptError::ShotCountMismatch { expected: k, got: s.k })
            }
            (Technique::FewShot { .. }, Some(_)) => {}
            (_, Some(_)) => return Err(PromptError::UnexpectedShots(t.tag())),
            (_, None) => {}
        }
        match t {
            Technique::Zb { batch_size } => {
                if proverbs.is_empty() || proverbs.len() > batch_size {
                    return Err(count_err(format!("1..={batch_size}")));
                }
                let numbered = proverbs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| format!("{}. {}", i + 1, p))
                    .collect::<Vec<_>>()
                    .join("\n");
                Ok(render(&self.templates.zb, Some(proverbs.len()), None, &numbered))
            }
            _ if proverbs.len() != 1 => Err(count_err("1".into())),
            Technique::Z0 => Ok(render(&self.templates.z0, None, None, proverbs[0])),
            Technique::Zp => Ok(render(&self.templates.zp, None, None, proverbs[0])),
            Technique::FewShot { .. } => {
                let examples = render_examples(shots.expect("checked above"), self.shot_order);
                Ok(render(&self.templates.few_shot, None, Some(&examples), proverbs[0]))
            }
        }
    }
}

/// [`PromptBuilder::build`] with the default templates and interleaved shots.
pub fn build_prompt(spec: &PromptSpec, proverbs: &[&str], shots: Option<&ShotSet>) -> Result<String, PromptError> {
    PromptBuilder::default().build(spec, proverbs, shots)
}
