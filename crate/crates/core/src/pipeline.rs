//! Store-level operations: ingest, work orders, scoring, and comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{build_leaderboard, AggregateError, Aggregation, Leaderboard, ScoreTriple};
use crate::coherence::{checked_story_coherence, CoherenceError, CoherenceScore, SentenceLikelihoods};
use crate::config::{EngineConfig, NounSource};
use crate::corpus::{
    import_predictions, import_vist_sis, intersect, Author, CorpusError, ImageRef, RejectedLine, StorySequence,
    StorySet,
};
use crate::exec::Execution;
use crate::grounding::{story_grounding, GroundingError, GroundingScore, RegionEmbeddings};
use crate::redundancy::{story_nonredundancy, RedundancyError, RedundancyScore};
use crate::report::{self, Format, ReportContext};
use crate::store::{write_if_changed, AuthorTerms, CachedScore, Store, StoreError, REPORTS_DIR};
use crate::textproc::{
    extract_nouns, tokenize, LexiconTagger, NounTagger, PretaggedFlags, SentenceId, TagError, TokenizedSentence,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("the store has no human stories; ingest a SIS file first")]
    NoHumanStories,
}

/// Tokens, noun flags and the noun sequence of a story.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStory {
    pub sentences: Vec<TokenizedSentence>,
    pub nouns: Vec<String>,
    /// Sentence index of each noun.
    pub positions: Vec<usize>,
}

pub fn prepare_story(story: &StorySequence, tagger: &dyn NounTagger) -> Result<PreparedStory, TagError> {
    let mut sentences = Vec::with_capacity(story.sentences.len());
    let mut nouns = Vec::new();
    let mut positions = Vec::new();
    for (index, raw) in story.sentences.iter().enumerate() {
        let mut ts = tokenize(raw);
        let id = SentenceId {
            story_id: story.story_id.clone(),
            index,
        };
        let found = extract_nouns(&mut ts, tagger, &id)?;
        positions.extend(std::iter::repeat(index).take(found.len()));
        nouns.extend(found);
        sentences.push(ts);
    }
    Ok(PreparedStory {
        sentences,
        nouns,
        positions,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Nouns(#[from] TagError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Coherence(#[from] CoherenceError),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
}

impl ScoreError {
    pub fn stage(&self) -> &'static str {
        match self {
            ScoreError::MissingInput(_) => "inputs",
            ScoreError::Store(_) => "bundle",
            ScoreError::Nouns(_) => "nouns",
            ScoreError::Grounding(_) => "grounding",
            ScoreError::Coherence(_) => "coherence",
            ScoreError::Redundancy(_) => "redundancy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoryScore {
    pub triple: ScoreTriple,
    pub grounding: GroundingScore,
    pub coherence: CoherenceScore,
    pub redundancy: RedundancyScore,
}

/// Scores one story from its regions (in image order), its author's terms
/// and its likelihoods.
pub fn score_story(
    story: &StorySequence,
    regions: &[RegionEmbeddings],
    terms: &AuthorTerms,
    likelihoods: &SentenceLikelihoods,
    cfg: &EngineConfig,
) -> Result<StoryScore, ScoreError> {
    let prepared = match cfg.nouns {
        NounSource::Lexicon => prepare_story(story, &LexiconTagger::bundled())?,
        NounSource::BundleFlags => {
            let flags = terms.noun_flags.clone().ok_or_else(|| {
                ScoreError::MissingInput(format!("bundle for story {} has no noun flags", story.story_id))
            })?;
            prepare_story(story, &PretaggedFlags::new(story.story_id.clone(), flags))?
        }
    };
    let grounding = story_grounding(&prepared.nouns, &terms.embeddings, regions, &cfg.grounding)?;
    let coherence = checked_story_coherence(likelihoods, story)?;
    let redundancy = story_nonredundancy(story, &cfg.redundancy)?;
    let triple = ScoreTriple::new(
        story.story_id.clone(),
        story.author.clone(),
        grounding.g,
        coherence.c,
        redundancy.r,
    )
    .expect("component scores lie in [0, 1]");
    Ok(StoryScore {
        triple,
        grounding,
        coherence,
        redundancy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub author: String,
    pub stories: usize,
    pub nonstandard: usize,
    pub rejected: Vec<RejectedLine>,
    /// False when the stored file already had identical content.
    pub written: bool,
}

fn save_set(store: &Store, set: &StorySet, rejected: Vec<RejectedLine>, force: bool) -> Result<IngestSummary, PipelineError> {
    let _lock = store.lock()?;
    let written = store.save_stories(set, force)?;
    Ok(IngestSummary {
        author: set.author.label().to_string(),
        stories: set.len(),
        nonstandard: set.nonstandard_count(),
        rejected,
        written,
    })
}

pub fn ingest_sis(store: &Store, path: &Path, force: bool) -> Result<IngestSummary, PipelineError> {
    let set = import_vist_sis(path)?;
    save_set(store, &set, Vec::new(), force)
}

pub fn ingest_predictions(store: &Store, path: &Path, model_id: &str, force: bool) -> Result<IngestSummary, PipelineError> {
    let import = import_predictions(path, model_id)?;
    save_set(store, &import.set, import.rejected, force)
}

/// A feature the sidecar must produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Want {
    Regions,
    Terms,
    Likelihoods,
    NounFlags,
}

/// One line of a work order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub story_id: String,
    /// `"human"` or the model id.
    pub author: String,
    pub sentences: Vec<String>,
    pub images: Vec<ImageRef>,
    /// Tokens per sentence, as the engine tokenizes them.
    pub tokens: Vec<Vec<String>>,
    /// Lexicon noun flags per sentence.
    pub noun_flags: Vec<Vec<bool>>,
    /// Nouns to embed, in order; the bundle's terms entry must list exactly these.
    pub terms: Vec<String>,
    pub positions: Vec<usize>,
    pub want: Vec<Want>,
}

/// Model stories without images take the human story's images.
fn story_images(story: &StorySequence, human: Option<&StorySet>) -> Vec<ImageRef> {
    if !story.images.is_empty() {
        return story.images.clone();
    }
    human
        .and_then(|h| h.stories.get(&story.story_id))
        .map(|h| h.images.clone())
        .unwrap_or_default()
}

fn ordered_stories<'a>(human: Option<&'a StorySet>, models: &'a [StorySet]) -> Vec<&'a StorySequence> {
    let mut all: Vec<&StorySequence> = human.iter().copied().chain(models).flat_map(|s| s.stories.values()).collect();
    all.sort_by(|a, b| (&a.story_id, &a.author).cmp(&(&b.story_id, &b.author)));
    all
}

/// Every (story, author) whose bundle or likelihoods are incomplete, ordered
/// by story id, then human before models, then model id.
pub fn work_order(store: &Store, cfg: &EngineConfig) -> Result<Vec<WorkItem>, PipelineError> {
    let (human, models) = store.load_stories()?;
    let mut likelihoods = BTreeMap::new();
    for set in human.iter().chain(&models) {
        likelihoods.insert(set.author.clone(), store.load_likelihoods(&set.author)?);
    }
    let tagger = LexiconTagger::bundled();
    let mut items = Vec::new();
    for story in ordered_stories(human.as_ref(), &models) {
        let images = story_images(story, human.as_ref());
        let manifest = store.load_bundle_manifest(&story.story_id)?;
        let label = story.author.label();
        let mut want = Vec::new();
        let have_images = manifest.as_ref().map(|m| m.image_ids()).unwrap_or_default();
        if images.is_empty() || images.iter().any(|i| !have_images.contains(i.image_id.as_str())) {
            want.push(Want::Regions);
        }
        let terms_entry = manifest.as_ref().and_then(|m| m.terms_entry(label));
        if terms_entry.is_none() {
            want.push(Want::Terms);
        }
        if cfg.nouns == NounSource::BundleFlags {
            let has_flags = matches!(
                terms_entry.map(|f| &f.role),
                Some(crate::store::FileRole::Terms { noun_flags: Some(_), .. })
            );
            if !has_flags {
                want.push(Want::NounFlags);
            }
        }
        if !likelihoods[&story.author].contains_key(&story.story_id) {
            want.push(Want::Likelihoods);
        }
        if want.is_empty() {
            continue;
        }
        let prepared = prepare_story(story, &tagger).map_err(|e| CorpusError::Integrity(e.to_string()))?;
        items.push(WorkItem {
            story_id: story.story_id.clone(),
            author: label.to_string(),
            sentences: story.sentences.clone(),
            images,
            tokens: prepared.sentences.iter().map(|s| s.tokens.clone()).collect(),
            noun_flags: prepared.sentences.iter().map(|s| s.noun_flags.clone()).collect(),
            terms: prepared.nouns,
            positions: prepared.positions,
            want,
        });
    }
    Ok(items)
}

pub fn work_order_jsonl(items: &[WorkItem]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("work items serialize") + "\n")
        .collect()
}

/// A story that could not be scored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoreFailure {
    pub story_id: String,
    pub author: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRun {
    pub config_hash: String,
    pub scored: usize,
    pub cached: usize,
    pub failures: Vec<ScoreFailure>,
}

impl ScoreRun {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const FAILURES_FILE: &str = "score_failures.jsonl";

struct Job<'a> {
    story: &'a StorySequence,
    images: Vec<String>,
    likelihoods: Option<&'a SentenceLikelihoods>,
}

fn run_job(store: &Store, job: &Job<'_>, cfg: &EngineConfig) -> Result<ScoreTriple, ScoreError> {
    let story = job.story;
    let label = story.author.label();
    let lk = job
        .likelihoods
        .ok_or_else(|| ScoreError::MissingInput(format!("no likelihoods for story {} by {label}", story.story_id)))?;
    let bundle = store
        .load_bundle(&story.story_id, Some(&[label]))?
        .ok_or_else(|| ScoreError::MissingInput(format!("no bundle for story {}", story.story_id)))?;
    let terms = bundle
        .terms
        .get(label)
        .ok_or_else(|| ScoreError::MissingInput(format!("bundle for story {} has no terms by {label}", story.story_id)))?;
    let regions = if job.images.is_empty() {
        bundle.regions.clone()
    } else {
        bundle.regions_for(&job.images)?
    };
    Ok(score_story(story, &regions, terms, lk, cfg)?.triple)
}

/// Scores every stored story not already cached under `cfg`'s hash. New
/// scores are appended to the cache even when other stories fail; failures
/// are written to `reports/score_failures.jsonl`.
pub fn score_store(store: &Store, cfg: &EngineConfig, exec: Execution) -> Result<ScoreRun, PipelineError> {
    let _lock = store.lock()?;
    let hash = cfg.config_hash();
    let (human, models) = store.load_stories()?;
    let cached: BTreeSet<(String, Author)> = store
        .load_scores()?
        .into_iter()
        .filter(|s| s.config_hash == hash)
        .map(|s| (s.story_id.clone(), s.author()))
        .collect();

    let mut likelihoods = BTreeMap::new();
    for set in human.iter().chain(&models) {
        likelihoods.insert(set.author.clone(), store.load_likelihoods(&set.author)?);
    }

    let mut hits = 0;
    let mut jobs = Vec::new();
    for story in ordered_stories(human.as_ref(), &models) {
        if cached.contains(&(story.story_id.clone(), story.author.clone())) {
            hits += 1;
            continue;
        }
        jobs.push(Job {
            story,
            images: story_images(story, human.as_ref()).into_iter().map(|i| i.image_id).collect(),
            likelihoods: likelihoods[&story.author].get(&story.story_id),
        });
    }

    let results = exec.map(&jobs, |job| run_job(store, job, cfg));

    let mut fresh: BTreeMap<Author, Vec<CachedScore>> = BTreeMap::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(triple) => fresh
                .entry(triple.author.clone())
                .or_default()
                .push(CachedScore::from_triple(&triple, &hash)),
            Err(e) => failures.push(ScoreFailure {
                story_id: job.story.story_id.clone(),
                author: job.story.author.label().to_string(),
                stage: e.stage().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    let mut scored = 0;
    for (author, scores) in &fresh {
        scored += scores.len();
        store.append_scores(author, scores)?;
    }

    failures.sort();
    let failures_path = store.root().join(REPORTS_DIR).join(FAILURES_FILE);
    if !failures.is_empty() || failures_path.exists() {
        let text: String = failures
            .iter()
            .map(|f| serde_json::to_string(f).expect("failures serialize") + "\n")
            .collect();
        write_if_changed(&failures_path, text.as_bytes())?;
    }

    Ok(ScoreRun {
        config_hash: hash,
        scored,
        cached: hits,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub leaderboard: Leaderboard,
    pub context: ReportContext,
    /// Report files rewritten by this run.
    pub written: Vec<PathBuf>,
}

impl Comparison {
    pub fn render(&self, format: Format) -> String {
        report::render(&self.leaderboard, &self.context, format)
    }
}

/// Cached triples for `cfg`, one per (story, author); the first line wins.
pub fn cached_triples(store: &Store, cfg: &EngineConfig) -> Result<Vec<ScoreTriple>, PipelineError> {
    let hash = cfg.config_hash();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in store.load_scores()? {
        if s.config_hash == hash && seen.insert((s.story_id.clone(), s.author())) {
            out.push(s.triple()?);
        }
    }
    Ok(out)
}

/// Builds the leaderboard over the stories shared by the human set and every
/// model, and writes `reports/leaderboard_<variant>_<agg>.{md,csv,json}` and
/// `reports/dhm_series_<variant>_<agg>.csv`.
pub fn compare_store(store: &Store, cfg: &EngineConfig, aggregation: Aggregation) -> Result<Comparison, PipelineError> {
    let _lock = store.lock()?;
    let (human, models) = store.load_stories()?;
    let human = human.ok_or(PipelineError::NoHumanStories)?;
    let eval = intersect(&human, &models)?;
    let model_ids: Vec<String> = eval
        .models
        .iter()
        .filter_map(|m| m.author.model_id().map(str::to_string))
        .collect();
    let triples = cached_triples(store, cfg)?;
    let leaderboard = build_leaderboard(&eval.story_ids, &model_ids, &triples, aggregation)?;
    let context = ReportContext::new(cfg);

    let dir = store.reports_dir();
    let label = format!("{}_{}", cfg.grounding.variant, aggregation.label());
    let mut written = Vec::new();
    for format in [Format::Markdown, Format::Csv, Format::Json] {
        let path = dir.join(format!("leaderboard_{label}.{}", format.extension()));
        if write_if_changed(&path, report::render(&leaderboard, &context, format).as_bytes())? {
            written.push(path);
        }
    }
    let series = dir.join(format!("dhm_series_{label}.csv"));
    if write_if_changed(&series, report::dhm_series_csv(&leaderboard).as_bytes())? {
        written.push(series);
    }
    Ok(Comparison {
        leaderboard,
        context,
        written,
    })
}
