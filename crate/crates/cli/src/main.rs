//! `storyeval` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or integrity error,
//! 3 partial failure (some stories could not be scored).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use storyeval::config::EngineConfig;
use storyeval::grounding::GroundingVariant;
use storyeval::pipeline::{self, PipelineError};
use storyeval::report::Format;
use storyeval::store::{self, write_if_changed, Store};
use storyeval::{Aggregation, Execution};

#[derive(Parser)]
#[command(name = "storyeval", version, about = "Reference-free visual story evaluation")]
struct Cli {
    /// Store root directory.
    #[arg(long, global = true, env = "STORYEVAL_STORE", default_value = "store")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Md,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    #[value(name = "rovist_vg")]
    RovistVg,
    Groovist,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Agg {
    PerStory,
    OfMeans,
}

#[derive(Args)]
struct ConfigArgs {
    /// Engine config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grounding variant; overrides the config file.
    #[arg(long, value_enum)]
    variant: Option<Variant>,
}

impl ConfigArgs {
    fn load(&self) -> Result<EngineConfig, Failure> {
        let cfg = match &self.config {
            Some(path) => EngineConfig::load(path).map_err(|e| Failure::data(e.to_string()))?,
            None => EngineConfig::default(),
        };
        Ok(match self.variant {
            Some(Variant::RovistVg) => cfg.with_variant(GroundingVariant::RovistVg),
            Some(Variant::Groovist) => cfg.with_variant(GroundingVariant::Groovist),
            None => cfg,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Import human stories (VIST SIS JSON) or model predictions (story JSONL).
    Ingest {
        #[arg(long, conflicts_with_all = ["pred", "model"], required_unless_present = "pred")]
        sis: Option<PathBuf>,
        #[arg(long, requires = "model")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        model: Option<String>,
        /// Replace an author's stories that are already in the store.
        #[arg(long)]
        force: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Output,
    },
    /// Write the extraction work order: every story still missing a bundle or likelihoods.
    Workorder {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: Output,
    },
    /// Score every story with complete inputs.
    Score {
        #[command(flatten)]
        config: ConfigArgs,
        /// Score on the calling thread only.
        #[arg(long)]
        sequential: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Output,
    },
    /// Render the leaderboard from cached scores.
    Compare {
        #[arg(long, value_enum, default_value = "md")]
        format: ReportFormat,
        #[arg(long, value_enum, default_value = "per-story")]
        agg: Agg,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Check bundle checksums and dims, orphan files, and missing inputs.
    Validate {
        #[arg(long, value_enum, default_value = "text")]
        format: Output,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<store::StoreError> for Failure {
    fn from(e: store::StoreError) -> Self {
        Failure::data(e.to_string())
    }
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn open_store(root: &Path) -> Result<Store, Failure> {
    Ok(Store::open(root)?)
}

fn run(cli: Cli) -> Result<(u8, String), Failure> {
    match cli.command {
        Command::Ingest {
            sis,
            pred,
            model,
            force,
            format,
        } => {
            let store = open_store(&cli.store)?;
            let summary = match (sis, pred, model) {
                (Some(path), _, _) => pipeline::ingest_sis(&store, &path, force)?,
                (None, Some(path), Some(model)) => pipeline::ingest_predictions(&store, &path, &model, force)?,
                _ => unreachable!("clap enforces --sis or --pred with --model"),
            };
            let text = match format {
                Output::Json => json(&summary),
                Output::Text => {
                    let mut s = format!("{} stories ingested for {}", summary.stories, summary.author);
                    if summary.nonstandard > 0 {
                        s.push_str(&format!("\n{} stories are not 5 images / 5 sentences", summary.nonstandard));
                    }
                    for r in &summary.rejected {
                        s.push_str(&format!("\nrejected line {} ({}): {}", r.line, r.story_id, r.reason));
                    }
                    s
                }
            };
            Ok((0, text))
        }
        Command::Workorder { out, config, format } => {
            let cfg = config.load()?;
            let store = open_store(&cli.store)?;
            let items = pipeline::work_order(&store, &cfg)?;
            write_if_changed(&out, pipeline::work_order_jsonl(&items).as_bytes())?;
            let text = match format {
                Output::Json => json(&serde_json::json!({ "items": items.len(), "out": out })),
                Output::Text => format!("{} work items written to {}", items.len(), out.display()),
            };
            Ok((0, text))
        }
        Command::Score {
            config,
            sequential,
            format,
        } => {
            let cfg = config.load()?;
            let store = open_store(&cli.store)?;
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let run = pipeline::score_store(&store, &cfg, exec)?;
            let code = if run.is_complete() { 0 } else { 3 };
            let text = match format {
                Output::Json => json(&run),
                Output::Text => {
                    let mut s = format!(
                        "{} stories scored, {} cached (config {})",
                        run.scored,
                        run.cached,
                        &run.config_hash[..12]
                    );
                    for f in &run.failures {
                        s.push_str(&format!("\nfailed {} by {} [{}]: {}", f.story_id, f.author, f.stage, f.reason));
                    }
                    s
                }
            };
            Ok((code, text))
        }
        Command::Compare { format, agg, config } => {
            let cfg = config.load()?;
            let store = open_store(&cli.store)?;
            let aggregation = match agg {
                Agg::PerStory => Aggregation::MeanOfDistances,
                Agg::OfMeans => Aggregation::DistanceOfMeans,
            };
            let comparison = pipeline::compare_store(&store, &cfg, aggregation)?;
            let format = match format {
                ReportFormat::Md => Format::Markdown,
                ReportFormat::Csv => Format::Csv,
                ReportFormat::Json => Format::Json,
            };
            Ok((0, comparison.render(format).trim_end().to_string()))
        }
        Command::Validate { format } => {
            if !cli.store.is_dir() {
                return Err(Failure::data(format!("{} is not a store directory", cli.store.display())));
            }
            let report = store::validate_store(&cli.store);
            let code = if report.violations.is_empty() { 0 } else { 2 };
            let text = match format {
                Output::Json => json(&report),
                Output::Text => {
                    let mut lines = vec![format!(
                        "{} violations, {} blocking, {} orphans",
                        report.violations.len(),
                        report.blocking.len(),
                        report.orphans.len()
                    )];
                    lines.extend(report.violations.iter().map(|v| format!("violation: {}", json_line(v))));
                    lines.extend(report.blocking.iter().map(|b| format!("blocking: {}", json_line(b))));
                    lines.extend(report.orphans.iter().map(|o| format!("orphan: {o}")));
                    lines.join("\n")
                }
            };
            Ok((code, text))
        }
    }
}

fn json_line(value: &impl serde::Serialize) -> String {
    serde_json::to_string(value).expect("output serializes")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok((code, text)) => {
            if !text.is_empty() {
                println!("{text}");
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
