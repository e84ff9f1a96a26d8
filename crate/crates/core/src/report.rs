//! Leaderboard rendering: Markdown, CSV, JSON, and the per-model `d_HM`
//! series for bar charts.
//!
//! Columns are always `Model, Visual Grounding, Coherence, Non-Redundancy,
//! d_HM`, rows are in rank order, and floats use 4 decimals.

use serde::Serialize;

use crate::aggregate::{Leaderboard, LeaderboardRow, TripleMeans};
use crate::config::EngineConfig;
use crate::grounding::GroundingVariant;

pub const COLUMNS: [&str; 5] = ["Model", "Visual Grounding", "Coherence", "Non-Redundancy", "d_HM"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Markdown,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected md, csv or json)")),
        }
    }
}

/// Settings printed alongside a leaderboard.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportContext {
    pub variant: GroundingVariant,
    pub config_hash: String,
    /// Set when the grounding variant is an engine-defined approximation.
    pub approximate_grounding: bool,
}

impl ReportContext {
    pub fn new(cfg: &EngineConfig) -> Self {
        Self {
            variant: cfg.grounding.variant,
            config_hash: cfg.config_hash(),
            approximate_grounding: cfg.grounding.variant == GroundingVariant::Groovist,
        }
    }
}

pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn cells(row: &LeaderboardRow) -> [String; 5] {
    [row.model_id.clone(), fmt4(row.g), fmt4(row.c), fmt4(row.r), fmt4(row.d_hm)]
}

fn notes(lb: &Leaderboard, ctx: &ReportContext) -> Vec<String> {
    let TripleMeans { g, c, r } = lb.human;
    let mut out = vec![
        format!(
            "Aggregation: {} ({}).",
            lb.aggregation.description(),
            lb.aggregation.label()
        ),
        format!(
            "Stories: {} scored for every author, {} excluded.",
            lb.story_ids.len(),
            lb.excluded_story_ids.len()
        ),
        format!("Human reference: G {}, C {}, R {}.", fmt4(g), fmt4(c), fmt4(r)),
        format!("Grounding: {}. Config: {}.", ctx.variant, &ctx.config_hash[..12.min(ctx.config_hash.len())]),
    ];
    if ctx.approximate_grounding {
        out.push("Grounding scores use the engine's threshold-filter approximation of groovist.".into());
    }
    out
}

pub fn markdown(lb: &Leaderboard, ctx: &ReportContext) -> String {
    let mut out = format!("| {} |\n|---|---:|---:|---:|---:|\n", COLUMNS.join(" | "));
    for row in &lb.rows {
        out.push_str(&format!("| {} |\n", cells(row).join(" | ")));
    }
    out.push('\n');
    for line in notes(lb, ctx) {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv(lb: &Leaderboard) -> String {
    let mut out = format!("{},aggregation\n", COLUMNS.join(","));
    for row in &lb.rows {
        let c = cells(row);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&c[0]),
            c[1],
            c[2],
            c[3],
            c[4],
            lb.aggregation.label()
        ));
    }
    out
}

/// `model,d_hm` in rank order.
pub fn dhm_series_csv(lb: &Leaderboard) -> String {
    let mut out = String::from("model,d_hm\n");
    for (model, d) in lb.dhm_series() {
        out.push_str(&format!("{},{}\n", csv_field(&model), fmt4(d)));
    }
    out
}

#[derive(Serialize)]
struct JsonRow<'a> {
    rank: usize,
    model: &'a str,
    visual_grounding: String,
    coherence: String,
    non_redundancy: String,
    d_hm: String,
    stories: usize,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    columns: [&'static str; 5],
    aggregation: &'static str,
    aggregation_description: &'static str,
    context: &'a ReportContext,
    human: [String; 3],
    rows: Vec<JsonRow<'a>>,
    dhm_series: Vec<(String, String)>,
    story_ids: &'a [String],
    excluded_story_ids: &'a [String],
}

/// Pretty JSON; numbers are the 4-decimal strings shown in the tables.
pub fn json(lb: &Leaderboard, ctx: &ReportContext) -> String {
    let report = JsonReport {
        columns: COLUMNS,
        aggregation: lb.aggregation.label(),
        aggregation_description: lb.aggregation.description(),
        context: ctx,
        human: [fmt4(lb.human.g), fmt4(lb.human.c), fmt4(lb.human.r)],
        rows: lb
            .rows
            .iter()
            .map(|r| JsonRow {
                rank: r.rank,
                model: &r.model_id,
                visual_grounding: fmt4(r.g),
                coherence: fmt4(r.c),
                non_redundancy: fmt4(r.r),
                d_hm: fmt4(r.d_hm),
                stories: r.story_count,
            })
            .collect(),
        dhm_series: lb.dhm_series().into_iter().map(|(m, d)| (m, fmt4(d))).collect(),
        story_ids: &lb.story_ids,
        excluded_story_ids: &lb.excluded_story_ids,
    };
    let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
    s.push('\n');
    s
}

pub fn render(lb: &Leaderboard, ctx: &ReportContext, format: Format) -> String {
    match format {
        Format::Markdown => markdown(lb, ctx),
        Format::Csv => csv(lb),
        Format::Json => json(lb, ctx),
    }
}
