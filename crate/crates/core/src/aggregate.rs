//! Score triples, human-to-machine distance, and leaderboards.
//!
//! For a human story H and a model story M on the same image sequence:
//!
//! ```text
//! dG = |G_H - G_M|   dC = |C_H - C_M|   dR = |R_H - R_M|
//! d_HM = (dG + dC + dR) / 3
//! ```
//!
//! R is the non-redundancy score on both sides. The corpus distance of a
//! model defaults to the mean of its per-story `d_HM`; the distance between
//! corpus-mean triples is available as [`Aggregation::DistanceOfMeans`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Author, EvaluationSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTriple {
    pub story_id: String,
    pub author: Author,
    pub g: f64,
    pub c: f64,
    pub r: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregateError {
    #[error("score {name} = {value} for story {story_id} is outside [0, 1]")]
    OutOfRange {
        story_id: String,
        name: &'static str,
        value: f64,
    },
    #[error("cannot compare story {human} with story {model}")]
    StoryMismatch { human: String, model: String },
    #[error("distance needs a human triple and a model triple, got {human} and {model}")]
    AuthorMismatch { human: String, model: String },
    #[error("no distances to aggregate")]
    Empty,
    #[error("duplicate score for story {story_id} by {author}")]
    DuplicateScore { story_id: String, author: String },
    #[error("model {model_id} is missing scores for {missing} of {total} stories")]
    TooManyMissing {
        model_id: String,
        missing: usize,
        total: usize,
    },
    #[error("no story is scored for the human and every model")]
    NoCommonStories,
}

impl ScoreTriple {
    pub fn new(story_id: impl Into<String>, author: Author, g: f64, c: f64, r: f64) -> Result<Self, AggregateError> {
        let story_id = story_id.into();
        for (name, value) in [("G", g), ("C", c), ("R", r)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AggregateError::OutOfRange { story_id, name, value });
            }
        }
        Ok(Self { story_id, author, g, c, r })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBreakdown {
    pub story_id: String,
    pub model_id: String,
    pub d_g: f64,
    pub d_c: f64,
    pub d_r: f64,
    pub d_hm: f64,
}

fn breakdown(story_id: &str, model_id: &str, h: (f64, f64, f64), m: (f64, f64, f64)) -> DistanceBreakdown {
    let d_g = (h.0 - m.0).abs();
    let d_c = (h.1 - m.1).abs();
    let d_r = (h.2 - m.2).abs();
    DistanceBreakdown {
        story_id: story_id.to_string(),
        model_id: model_id.to_string(),
        d_g,
        d_c,
        d_r,
        d_hm: (d_c + d_g + d_r) / 3.0,
    }
}

pub fn distance(h: &ScoreTriple, m: &ScoreTriple) -> Result<DistanceBreakdown, AggregateError> {
    let model_id = match (&h.author, &m.author) {
        (Author::Human, Author::Model(id)) => id,
        _ => {
            return Err(AggregateError::AuthorMismatch {
                human: h.author.to_string(),
                model: m.author.to_string(),
            })
        }
    };
    if h.story_id != m.story_id {
        return Err(AggregateError::StoryMismatch {
            human: h.story_id.clone(),
            model: m.story_id.clone(),
        });
    }
    Ok(breakdown(&h.story_id, model_id, (h.g, h.c, h.r), (m.g, m.c, m.r)))
}

/// Unweighted mean of per-story `d_HM`.
pub fn corpus_distance(breakdowns: &[DistanceBreakdown]) -> Result<f64, AggregateError> {
    if breakdowns.is_empty() {
        return Err(AggregateError::Empty);
    }
    Ok(breakdowns.iter().map(|b| b.d_hm).sum::<f64>() / breakdowns.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Aggregation {
    /// Mean over stories of the per-story distance.
    #[default]
    #[serde(rename = "per-story")]
    MeanOfDistances,
    /// Distance between the corpus-mean human triple and model triple.
    #[serde(rename = "of-means")]
    DistanceOfMeans,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::MeanOfDistances => "per-story",
            Aggregation::DistanceOfMeans => "of-means",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Aggregation::MeanOfDistances => "mean of per-story distances",
            Aggregation::DistanceOfMeans => "distance between corpus-mean scores",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-story" => Ok(Aggregation::MeanOfDistances),
            "of-means" => Ok(Aggregation::DistanceOfMeans),
            other => Err(format!("unknown aggregation `{other}` (expected per-story or of-means)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleMeans {
    pub g: f64,
    pub c: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    /// 1-based; 1 is closest to human.
    pub rank: usize,
    pub model_id: String,
    pub g: f64,
    pub c: f64,
    pub r: f64,
    pub d_hm: f64,
    pub story_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub aggregation: Aggregation,
    /// Stories every author has a score for; all means are over these.
    pub story_ids: Vec<String>,
    /// Stories dropped from every model because some author lacks a score.
    pub excluded_story_ids: Vec<String>,
    pub human: TripleMeans,
    /// Ascending `d_hm`, ties broken by model id.
    pub rows: Vec<LeaderboardRow>,
    pub breakdowns: BTreeMap<String, Vec<DistanceBreakdown>>,
}

impl Leaderboard {
    /// `(model_id, d_hm)` in rank order, for bar charts.
    pub fn dhm_series(&self) -> Vec<(String, f64)> {
        self.rows.iter().map(|r| (r.model_id.clone(), r.d_hm)).collect()
    }
}

/// Sorts rows by ascending `d_hm` (then model id) and assigns ranks.
pub fn rank_rows(mut rows: Vec<LeaderboardRow>) -> Vec<LeaderboardRow> {
    rows.sort_by(|a, b| a.d_hm.total_cmp(&b.d_hm).then_with(|| a.model_id.cmp(&b.model_id)));
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    rows
}

fn means<'a>(triples: impl Iterator<Item = &'a ScoreTriple>) -> TripleMeans {
    let (mut g, mut c, mut r, mut n) = (0.0, 0.0, 0.0, 0usize);
    for t in triples {
        g += t.g;
        c += t.c;
        r += t.r;
        n += 1;
    }
    let n = n.max(1) as f64;
    TripleMeans {
        g: g / n,
        c: c / n,
        r: r / n,
    }
}

/// Builds the leaderboard for `model_ids` over `story_ids`.
///
/// Stories lacking a score for the human side or for any model are dropped
/// for every model. A model missing more than half of `story_ids` is refused.
/// Triples for ids outside `story_ids` are ignored.
pub fn build_leaderboard(
    story_ids: &[String],
    model_ids: &[String],
    triples: &[ScoreTriple],
    aggregation: Aggregation,
) -> Result<Leaderboard, AggregateError> {
    let wanted: std::collections::BTreeSet<&str> = story_ids.iter().map(String::as_str).collect();
    let mut by_author: BTreeMap<&Author, BTreeMap<&str, &ScoreTriple>> = BTreeMap::new();
    for t in triples.iter().filter(|t| wanted.contains(t.story_id.as_str())) {
        if by_author.entry(&t.author).or_default().insert(&t.story_id, t).is_some() {
            return Err(AggregateError::DuplicateScore {
                story_id: t.story_id.clone(),
                author: t.author.to_string(),
            });
        }
    }

    let empty = BTreeMap::new();
    let human_author = Author::Human;
    let human = by_author.get(&human_author).unwrap_or(&empty);
    let model_authors: Vec<Author> = model_ids.iter().map(|m| Author::Model(m.clone())).collect();
    let total = wanted.len();
    for author in std::iter::once(&human_author).chain(&model_authors) {
        let have = by_author.get(author).map_or(0, BTreeMap::len);
        let missing = total - have;
        if missing * 2 > total {
            return Err(AggregateError::TooManyMissing {
                model_id: author.to_string(),
                missing,
                total,
            });
        }
    }

    let (common, excluded): (Vec<&str>, Vec<&str>) = wanted.iter().partition(|id| {
        human.contains_key(*id)
            && model_authors
                .iter()
                .all(|a| by_author.get(a).is_some_and(|m| m.contains_key(*id)))
    });
    if common.is_empty() {
        return Err(AggregateError::NoCommonStories);
    }

    let human_means = means(common.iter().map(|id| human[id]));
    let mut rows = Vec::with_capacity(model_ids.len());
    let mut breakdowns = BTreeMap::new();
    for author in &model_authors {
        let scored = &by_author[author];
        let model_id = author.label();
        let per_story: Vec<DistanceBreakdown> = common
            .iter()
            .map(|id| distance(human[id], scored[id]))
            .collect::<Result<_, _>>()?;
        let m = means(common.iter().map(|id| scored[id]));
        let d_hm = match aggregation {
            Aggregation::MeanOfDistances => corpus_distance(&per_story)?,
            Aggregation::DistanceOfMeans => {
                breakdown("", model_id, (human_means.g, human_means.c, human_means.r), (m.g, m.c, m.r)).d_hm
            }
        };
        rows.push(LeaderboardRow {
            rank: 0,
            model_id: model_id.to_string(),
            g: m.g,
            c: m.c,
            r: m.r,
            d_hm,
            story_count: common.len(),
        });
        breakdowns.insert(model_id.to_string(), per_story);
    }

    Ok(Leaderboard {
        aggregation,
        story_ids: common.iter().map(|s| s.to_string()).collect(),
        excluded_story_ids: excluded.iter().map(|s| s.to_string()).collect(),
        human: human_means,
        rows: rank_rows(rows),
        breakdowns,
    })
}

/// [`build_leaderboard`] over an evaluation set's ids and models.
pub fn leaderboard_for(
    eval: &EvaluationSet,
    triples: &[ScoreTriple],
    aggregation: Aggregation,
) -> Result<Leaderboard, AggregateError> {
    let model_ids: Vec<String> = eval
        .models
        .iter()
        .filter_map(|m| m.author.model_id().map(str::to_string))
        .collect();
    build_leaderboard(&eval.story_ids, &model_ids, triples, aggregation)
}
