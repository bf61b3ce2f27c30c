//! `paremia`: run the proverb sentiment pipeline, whole or stage by stage.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use paremia::client::{InferenceConfig, ModelClient, ResponseCache};
use paremia::dialect::{diff_entry, load_matches, render_ansi, MatchThreshold};
use paremia::evaluation::{gold_from_corpus, load_predictions, write_predictions, DistributionTarget, FailurePolicy};
use paremia::geomap::Grouping;
use paremia::pipeline::{self, PipelineConfig, PipelineError, RunPaths};
use paremia::prompting::{PromptBuilder, Technique, Templates};
use paremia::Real;

use args::{Cli, Command, InferenceArgs};

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.verbosity).format_timestamp(None).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Config file merged with the global flags; defaults when no file is given.
struct Settings {
    config: Option<PipelineConfig>,
    seed: u64,
}

impl Settings {
    fn load(cli: &Cli) -> Result<Self, PipelineError> {
        let mut config = cli.config.as_deref().map(PipelineConfig::load).transpose()?;
        if let Some(cfg) = config.as_mut() {
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(dir) = &cli.cache_dir {
                cfg.cache_dir = Some(dir.clone());
            }
            if let Some(kind) = cli.backend {
                cfg.backend.kind = kind;
            }
        }
        let seed = cli.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(13);
        Ok(Settings { config, seed })
    }

    fn or_default<T: Clone>(&self, pick: impl Fn(&PipelineConfig) -> T, default: T) -> T {
        self.config.as_ref().map(pick).unwrap_or(default)
    }
}

fn agreement_opts(s: &Settings, min_mean_corr: Option<f64>, keep_flagged: bool) -> paremia::annotation::AgreementOptions {
    let mut opts = s.or_default(|c| c.iaa.options(), Default::default());
    if let Some(m) = min_mean_corr {
        opts.min_mean_corr = m;
    }
    if keep_flagged {
        opts.exclude_flagged = false;
    }
    opts
}

fn excluded(input: &Path, agreement: Option<&Path>, s: &Settings) -> Result<Vec<String>, PipelineError> {
    let opts = agreement_opts(s, None, false);
    match agreement {
        Some(path) => Ok(pipeline::read_json::<pipeline::IaaReport>(path)?.excluded(&opts)),
        None => pipeline::excluded_annotators(&RunPaths::new(input), &opts),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let s = Settings::load(cli)?;
    match &cli.command {
        Command::Run => {
            let mut cfg = s.config.clone().ok_or_else(|| PipelineError::Config("`run` needs --config".into()))?;
            cfg.seed = s.seed;
            let summary = pipeline::run_pipeline(&cfg)?;
            println!("completed stages: {}", summary.stages.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "));
            if let Some(n) = summary.n_matches {
                println!("localized proverbs matched: {n}");
            }
            println!("artifacts: {}", cfg.output_dir.display());
        }
        Command::Ingest { proverbs, annotations, format, out } => {
            let corpus = pipeline::ingest(proverbs, annotations.as_deref(), *format)?;
            let summary = pipeline::write_ingested(&corpus, &RunPaths::new(out))?;
            println!(
                "{} proverbs ({} standard, {} localized), {} annotations from {} annotators",
                summary.n_proverbs,
                summary.n_standard,
                summary.n_localized,
                summary.n_annotations,
                summary.annotators.len()
            );
        }
        Command::Iaa { input, out, min_mean_corr, keep_flagged } => {
            let corpus = pipeline::load_ingested(&RunPaths::new(input))?;
            let report = pipeline::iaa(&corpus, &agreement_opts(&s, *min_mean_corr, *keep_flagged))?;
            let out = out.clone().unwrap_or_else(|| RunPaths::new(input).agreement());
            pipeline::write_json(&out, &report)?;
            let r = &report.sentiment;
            println!("kappa    {}", fmt_opt(r.kappa_mean));
            println!("alpha    {}", fmt_opt(r.alpha));
            println!("spearman {}", fmt_opt(r.spearman_mean));
            println!("pearson  {}", fmt_opt(r.pearson_mean));
            if let Some(sa) = &report.self_agreement {
                println!("self-agreement {:.2}%", sa.mean);
            }
            if !r.flagged_annotators.is_empty() {
                println!("flagged: {}", r.flagged_annotators.join(", "));
            }
        }
        Command::Ordinalize { input, agreement, out } => {
            let corpus = pipeline::load_ingested(&RunPaths::new(input))?;
            let excluded = excluded(input, agreement.as_deref(), &s)?;
            let out = out.clone().unwrap_or_else(|| RunPaths::new(input).ordinal());
            let rows = pipeline::ordinal_stage(&corpus, &excluded, &out)?;
            println!("{} proverbs written to {}", rows.len(), out.display());
        }
        Command::SelectShots { input, agreement, out } => {
            let corpus = pipeline::load_ingested(&RunPaths::new(input))?;
            let excluded = excluded(input, agreement.as_deref(), &s)?;
            let artifact = pipeline::select_shots(&corpus, &excluded, s.seed)?;
            let out = out.clone().unwrap_or_else(|| RunPaths::new(input).shots());
            pipeline::write_json(&out, &artifact)?;
            println!("pool of {} candidates; selections: {}", artifact.pool.len(), artifact.selections.keys().cloned().collect::<Vec<_>>().join(", "));
        }
        Command::Predict { input, techniques, target, shots, out_dir, rules, templates, inference } => {
            predict(&s, cli, input, techniques, *target, shots.as_deref(), out_dir.as_deref(), rules, templates.as_deref(), inference)?;
        }
        Command::Evaluate { input, predictions, agreement, out, table, fallback, target } => {
            let corpus = pipeline::load_ingested(&RunPaths::new(input))?;
            let gold = gold_from_corpus(&corpus, &excluded(input, agreement.as_deref(), &s)?);
            let mut runs = Vec::new();
            for path in predictions {
                let records = load_predictions::<Real>(path)?;
                let tag = records
                    .first()
                    .map(|r| r.technique.clone())
                    .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
                runs.push((tag, records));
            }
            let policy = fallback.map(FailurePolicy::Fallback).unwrap_or_else(|| s.or_default(|c| c.evaluate.failure_policy, FailurePolicy::Exclude));
            let target = target.unwrap_or_else(|| s.or_default(|c| c.evaluate.distribution_target, DistributionTarget::Fractions));
            let model = s.or_default(|c| c.inference.model_name.clone(), InferenceConfig::default().model_name);
            let artifact = pipeline::evaluate(&gold, &runs, &model, policy, target)?;
            let paths = RunPaths::new(input);
            pipeline::write_json(&out.clone().unwrap_or_else(|| paths.evaluation_json()), &artifact)?;
            let text = pipeline::render_evaluation(&artifact);
            let table = table.clone().unwrap_or_else(|| paths.evaluation_txt());
            std::fs::write(&table, &text).map_err(|e| PipelineError::Data(format!("{}: {e}", table.display())))?;
            print!("{text}");
        }
        Command::MatchDialects { input, threshold, max_distance, out, diff, ansi } => {
            let paths = RunPaths::new(input);
            let corpus = pipeline::load_ingested(&paths)?;
            let threshold = match (threshold, max_distance) {
                (_, Some(d)) => MatchThreshold::Absolute(*d),
                (Some(t), None) => MatchThreshold::Normalized(*t),
                (None, None) => s.or_default(|c| c.dialect.threshold, MatchThreshold::default()),
            };
            let out = out.clone().unwrap_or_else(|| paths.matches());
            let diff = diff.clone().unwrap_or_else(|| paths.dialect_diff());
            let matches = pipeline::match_dialects(&corpus, threshold, &out, &diff)?;
            println!("{} localized proverbs matched", matches.len());
            if *ansi {
                let by_id = |id: &str| corpus.proverb(id).expect("matched ids exist");
                let entries: Vec<_> = matches.iter().map(|m| diff_entry(by_id(&m.standard_id), by_id(&m.localized_id))).collect();
                print!("{}", render_ansi(&entries));
            }
        }
        Command::Map { input, source, matches, predictions, grouping, out_dir } => {
            let paths = RunPaths::new(input);
            let corpus = pipeline::load_ingested(&paths)?;
            let items = if source == "gold" {
                let m = load_matches::<Real>(&matches.clone().unwrap_or_else(|| paths.matches()))
                    .map_err(|e| PipelineError::Data(format!("match report: {e}")))?;
                let gold = gold_from_corpus(&corpus, &excluded(input, None, &s)?);
                pipeline::gold_map_labels(&corpus, &m, &gold)
            } else {
                let p = predictions.clone().unwrap_or_else(|| paths.predictions(source));
                pipeline::predicted_map_labels(&corpus, &load_predictions::<Real>(&p)?)
            };
            let grouping = grouping.unwrap_or_else(|| s.or_default(|c| c.map.grouping, Grouping::Auto));
            let out_paths = RunPaths::new(out_dir.clone().unwrap_or_else(|| input.clone()));
            let summary = pipeline::write_map(&items, grouping, source, &out_paths)?;
            println!(
                "{} regions from {} proverbs ({} skipped)",
                summary.n_regions,
                summary.n_mapped,
                summary.skipped.len()
            );
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn predict(
    s: &Settings,
    cli: &Cli,
    input: &Path,
    techniques: &[Technique],
    target: Option<pipeline::PredictTarget>,
    shots: Option<&Path>,
    out_dir: Option<&Path>,
    rules: &[args::RuleArg],
    templates: Option<&Path>,
    inference: &InferenceArgs,
) -> Result<(), PipelineError> {
    let paths = RunPaths::new(input);
    let corpus = pipeline::load_ingested(&paths)?;
    let mut cfg = match &s.config {
        Some(c) => c.clone(),
        None => PipelineConfig::from_toml(&format!("[inputs]\nproverbs = {:?}\n", paths.proverbs().display().to_string()))?,
    };
    cfg.output_dir = input.to_path_buf();
    if let Some(kind) = cli.backend {
        cfg.backend.kind = kind;
    }
    if !rules.is_empty() {
        cfg.backend.rules = rules.iter().map(|r| r.0.clone()).collect();
    }
    inference.apply(&mut cfg.inference);
    cfg.inference.validate()?;
    let techniques: Vec<Technique> = if techniques.is_empty() { cfg.predict.parsed_techniques()? } else { techniques.to_vec() };
    let pool = if techniques.iter().any(|t| matches!(t, Technique::FewShot { .. })) {
        let p: PathBuf = shots.map(Path::to_path_buf).unwrap_or_else(|| paths.shots());
        Some(pipeline::read_json::<pipeline::ShotsArtifact>(&p)?.pool)
    } else {
        None
    };
    let backend = pipeline::make_backend(&cfg)?;
    let cache_dir = cli.cache_dir.clone().unwrap_or_else(|| cfg.cache_dir());
    let cache = ResponseCache::open(&cache_dir).map_err(|e| PipelineError::Data(format!("{}: {e}", cache_dir.display())))?;
    let builder = match templates.map(Path::to_path_buf).or(cfg.predict.templates_dir.clone()) {
        Some(dir) => PromptBuilder { templates: Templates::from_dir(&dir)?, ..PromptBuilder::default() },
        None => PromptBuilder::default(),
    };
    let client = ModelClient::new(backend.as_ref(), cfg.inference.clone(), cache)?.with_builder(builder);
    let targets = pipeline::select_targets(&corpus, target.unwrap_or(cfg.predict.target));
    let settings = pipeline::PredictSettings {
        pool: pool.as_deref(),
        seed: s.seed,
        shots: &cfg.shots,
        label_mode: cfg.predict.label_mode,
        timeout_secs: cfg.inference.timeout_secs,
    };
    let out_paths = RunPaths::new(out_dir.map(Path::to_path_buf).unwrap_or_else(|| input.to_path_buf()));
    for (tag, result) in pipeline::predict(&client, &targets, &techniques, &settings)? {
        let path = out_paths.predictions(&tag);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PipelineError::Data(format!("{}: {e}", parent.display())))?;
        }
        write_predictions(&path, &result.records)?;
        println!("{tag}: {} predictions, {} failures -> {}", result.records.len() - result.n_failed(), result.n_failed(), path.display());
    }
    println!("backend calls: {}, cache hits: {}", client.attempts(), client.cache_hits());
    Ok(())
}
