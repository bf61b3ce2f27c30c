use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use paremia::client::InferenceConfig;
use paremia::corpus::FileFormat;
use paremia::evaluation::DistributionTarget;
use paremia::geomap::Grouping;
use paremia::pipeline::{BackendKind, MockRule, PredictTarget};
use paremia::prompting::Technique;
use paremia::Sentiment;

#[derive(Debug, Parser)]
#[command(name = "paremia", version, about = "Proverb sentiment analytics pipeline")]
pub struct Cli {
    /// Pipeline config (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for random shot selection.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory of the model response cache.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Model backend.
    #[arg(long, global = true, value_parser = parse_backend)]
    pub backend: Option<BackendKind>,
    /// Log filter, e.g. `warn`, `info`, `paremia=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub verbosity: String,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse()
}

fn parse_technique(s: &str) -> Result<Technique, String> {
    s.parse::<Technique>().map_err(|e| e.to_string())
}

fn parse_target(s: &str) -> Result<PredictTarget, String> {
    match s {
        "annotated" => Ok(PredictTarget::Annotated),
        "standard" => Ok(PredictTarget::Standard),
        "localized" => Ok(PredictTarget::Localized),
        "all" => Ok(PredictTarget::All),
        other => Err(format!("unknown target {other:?}")),
    }
}

fn parse_dist_target(s: &str) -> Result<DistributionTarget, String> {
    match s {
        "fractions" => Ok(DistributionTarget::Fractions),
        "one-hot" | "onehot" => Ok(DistributionTarget::OneHot),
        other => Err(format!("unknown distribution target {other:?}")),
    }
}

/// `place`, `auto`, or `grid:<degrees>`.
fn parse_grouping(s: &str) -> Result<Grouping, String> {
    match s {
        "place" => Ok(Grouping::ByPlace),
        "auto" => Ok(Grouping::Auto),
        _ => s
            .strip_prefix("grid:")
            .and_then(|d| d.parse::<f64>().ok())
            .map(Grouping::ByGrid)
            .ok_or_else(|| format!("expected place, auto or grid:<degrees>, got {s:?}")),
    }
}

/// `keyword=Label` rule for the mock backend.
#[derive(Debug, Clone)]
pub struct RuleArg(pub MockRule);

impl FromStr for RuleArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (k, l) = s.rsplit_once('=').ok_or_else(|| format!("expected keyword=Label, got {s:?}"))?;
        let label: Sentiment = l.parse().map_err(|e: paremia::sentiment::UnknownSentiment| e.to_string())?;
        Ok(RuleArg(MockRule { keyword: k.to_string(), label }))
    }
}

#[derive(Debug, Args, Default)]
pub struct InferenceArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Maximum concurrent requests.
    #[arg(long)]
    pub parallelism: Option<usize>,
}

impl InferenceArgs {
    pub fn apply(&self, cfg: &mut InferenceConfig) {
        if let Some(m) = &self.model {
            cfg.model_name = m.clone();
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.top_p {
            cfg.top_p = v;
        }
        if let Some(v) = self.max_tokens {
            cfg.max_tokens = v;
        }
        if let Some(v) = self.timeout {
            cfg.timeout_secs = v;
        }
        if let Some(v) = self.max_retries {
            cfg.max_retries = v;
        }
        if let Some(v) = self.parallelism {
            cfg.parallelism = v;
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate raw proverb and annotation files and store them as JSONL.
    Ingest {
        #[arg(long)]
        proverbs: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<FileFormat>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Inter-annotator agreement on sentiment and emotion-derived sentiment.
    Iaa {
        /// Directory written by `ingest`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        min_mean_corr: Option<f64>,
        /// Keep flagged annotators in the summary statistics.
        #[arg(long)]
        keep_flagged: bool,
    },
    /// Vote counts, soft scores and six-level ordinal labels.
    Ordinalize {
        #[arg(long)]
        input: PathBuf,
        /// Agreement report whose flagged annotators are dropped.
        #[arg(long)]
        agreement: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the shot pool and corpus-level RP/LVS selections.
    SelectShots {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        agreement: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prompt a model for every target proverb.
    Predict {
        #[arg(long)]
        input: PathBuf,
        /// Technique tag (z0, zb10, zb20, zb30, zp, fs<k>-<rp|lvs|dyn>); repeatable.
        #[arg(long = "technique", value_parser = parse_technique)]
        techniques: Vec<Technique>,
        #[arg(long, value_parser = parse_target)]
        target: Option<PredictTarget>,
        /// Shot pool written by `select-shots`.
        #[arg(long)]
        shots: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Mock backend rule `keyword=Label`; repeatable.
        #[arg(long = "rule")]
        rules: Vec<RuleArg>,
        /// Directory with z0.txt, zb.txt, zp.txt or few_shot.txt overrides.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Score prediction files against annotator gold.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Predictions JSONL; repeatable.
        #[arg(long = "predictions", required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        agreement: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the text tables.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Score failed items as this label instead of excluding them.
        #[arg(long)]
        fallback: Option<Sentiment>,
        /// Gold side for percentage predictions: fractions or one-hot.
        #[arg(long, value_parser = parse_dist_target)]
        target: Option<DistributionTarget>,
    },
    /// Link localized proverbs to standard ones by edit distance.
    MatchDialects {
        #[arg(long)]
        input: PathBuf,
        /// Maximum normalized distance.
        #[arg(long, conflicts_with = "max_distance")]
        threshold: Option<f64>,
        /// Maximum raw edit distance instead of a normalized one.
        #[arg(long)]
        max_distance: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// HTML diff report.
        #[arg(long)]
        diff: Option<PathBuf>,
        /// Also print colored alignments.
        #[arg(long)]
        ansi: bool,
    },
    /// Regional positive and negative GeoJSON layers.
    Map {
        #[arg(long)]
        input: PathBuf,
        /// `gold` or a technique tag.
        #[arg(long, default_value = "gold")]
        source: String,
        #[arg(long)]
        matches: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// place, auto or grid:<degrees>.
        #[arg(long, value_parser = parse_grouping)]
        grouping: Option<Grouping>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the stages listed in --config.
    Run,
}
