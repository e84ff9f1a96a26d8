//! Story corpora: the VIST SIS importer, the canonical story JSONL format,
//! and alignment of human and model stories onto a common id set.
//!
//! Canonical JSONL has one story per line:
//!
//! ```text
//! {"__meta__": {"prompt": "...", "temperature": 0.7}}
//! {"story_id":"45530","sentences":["...","..."],"model_id":"AREL","images":["img1","img2"]}
//! ```
//!
//! The `__meta__` line is optional and only allowed first. `model_id` is
//! `null` for human stories.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Number of images and sentences in a canonical VIST story.
pub const CANONICAL_LENGTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Author {
    Human,
    Model(String),
}

impl Author {
    pub fn model_id(&self) -> Option<&str> {
        match self {
            Author::Human => None,
            Author::Model(id) => Some(id),
        }
    }

    /// `"human"` or the model id.
    pub fn label(&self) -> &str {
        self.model_id().unwrap_or("human")
    }

    pub fn is_human(&self) -> bool {
        matches!(self, Author::Human)
    }
}

impl std::fmt::Display for Author {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    pub uri: Option<String>,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorySequence {
    pub story_id: String,
    pub images: Vec<ImageRef>,
    pub sentences: Vec<String>,
    pub author: Author,
}

impl StorySequence {
    /// Builds a story. `images` may be empty only for model stories awaiting
    /// alignment; [`intersect`] fills them from the paired human story.
    pub fn new(
        story_id: impl Into<String>,
        sentences: Vec<String>,
        image_ids: Vec<String>,
        author: Author,
    ) -> Result<Self, CorpusError> {
        let story_id = story_id.into();
        if story_id.is_empty() {
            return Err(CorpusError::Integrity("story id is empty".into()));
        }
        if sentences.is_empty() {
            return Err(CorpusError::Integrity(format!("story {story_id} has no sentences")));
        }
        if let Some(pos) = image_ids.iter().position(String::is_empty) {
            return Err(CorpusError::Integrity(format!(
                "story {story_id} has an empty image id at position {pos}"
            )));
        }
        let images = image_ids
            .into_iter()
            .enumerate()
            .map(|(position, image_id)| ImageRef {
                image_id,
                uri: None,
                position,
            })
            .collect();
        Ok(Self {
            story_id,
            images,
            sentences,
            author,
        })
    }

    /// True unless the story has exactly five images and five sentences.
    /// Such stories are admitted; metrics are defined for two or more sentences.
    /// Model stories without image ids are judged on sentences alone.
    pub fn nonstandard_length(&self) -> bool {
        let images_off = !self.images.is_empty() && self.images.len() != CANONICAL_LENGTH;
        images_off || self.sentences.len() != CANONICAL_LENGTH
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.image_id.clone()).collect()
    }
}

/// All stories written by one author (the human annotators or one model).
#[derive(Debug, Clone, PartialEq)]
pub struct StorySet {
    pub author: Author,
    pub stories: BTreeMap<String, StorySequence>,
    /// Free-form metadata recorded verbatim, e.g. prompt and decoding parameters.
    pub provenance: Map<String, Value>,
}

/// A model's stories.
pub type PredictionSet = StorySet;

impl StorySet {
    pub fn new(author: Author) -> Self {
        Self {
            author,
            stories: BTreeMap::new(),
            provenance: Map::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.stories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stories.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.stories.keys().map(String::as_str).collect()
    }

    pub fn insert(&mut self, story: StorySequence) -> Result<(), CorpusError> {
        if story.author != self.author {
            return Err(CorpusError::Integrity(format!(
                "story {} is authored by {}, set belongs to {}",
                story.story_id, story.author, self.author
            )));
        }
        if self.stories.contains_key(&story.story_id) {
            return Err(CorpusError::DuplicateStory(story.story_id));
        }
        self.stories.insert(story.story_id.clone(), story);
        Ok(())
    }

    /// Number of stories whose length deviates from five sentences / five images.
    pub fn nonstandard_count(&self) -> usize {
        self.stories.values().filter(|s| s.nonstandard_length()).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("story {story_id}: missing or out-of-sequence sentence index {index}")]
    MissingIndex { story_id: String, index: usize },
    #[error("story {story_id}: sentence index {index} appears twice")]
    DuplicateIndex { story_id: String, index: usize },
    #[error("duplicate story id {0}")]
    DuplicateStory(String),
    #[error("duplicate model id {0}")]
    DuplicateModel(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("at least one model prediction set is required")]
    NoModels,
    #[error("the human and model story sets share no story ids")]
    EmptyIntersection,
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Converts serde_json's 1-based line/column into a byte offset in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    line_start + column.saturating_sub(1)
}

fn parse_error(text: &str, base: usize, err: &serde_json::Error) -> CorpusError {
    CorpusError::Parse {
        offset: base + byte_offset(text, err.line(), err.column()),
        message: err.to_string(),
    }
}

// VIST ids show up both as strings and as integers.
#[derive(Deserialize)]
#[serde(untagged)]
enum LooseId {
    Str(String),
    Int(u64),
}

impl LooseId {
    fn into_string(self) -> String {
        match self {
            LooseId::Str(s) => s,
            LooseId::Int(n) => n.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct SisAnnotation {
    story_id: Option<LooseId>,
    #[serde(default)]
    original_text: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    photo_flickr_id: Option<LooseId>,
    #[serde(default)]
    worker_arranged_photo_order: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SisEntry {
    Wrapped(Vec<SisAnnotation>),
    Bare(SisAnnotation),
}

#[derive(Deserialize)]
struct SisImage {
    id: LooseId,
    #[serde(default)]
    url_o: Option<String>,
    #[serde(default)]
    url_m: Option<String>,
}

#[derive(Deserialize)]
struct SisFile {
    #[serde(default)]
    images: Vec<SisImage>,
    annotations: Vec<SisEntry>,
}

/// Provenance key holding `image_id -> uri` for stories whose images have one.
pub const IMAGE_URIS_KEY: &str = "image_uris";

fn apply_image_uris(set: &mut StorySet) {
    let Some(Value::Object(uris)) = set.provenance.get(IMAGE_URIS_KEY) else {
        return;
    };
    for story in set.stories.values_mut() {
        for image in &mut story.images {
            if let Some(Value::String(uri)) = uris.get(&image.image_id) {
                image.uri = Some(uri.clone());
            }
        }
    }
}

/// Parses the public VIST SIS JSON layout into human stories.
///
/// Annotations are grouped by `story_id` and ordered by
/// `worker_arranged_photo_order`; indices must run `0..n` without gaps.
/// The sentence is `original_text`, falling back to `text`. Image URIs come
/// from the top-level `images` list (`url_o`, else `url_m`) when present.
pub fn parse_vist_sis(text: &str) -> Result<StorySet, CorpusError> {
    let file: SisFile = serde_json::from_str(text).map_err(|e| parse_error(text, 0, &e))?;
    let known_uris: BTreeMap<String, String> = file
        .images
        .into_iter()
        .filter_map(|i| Some((i.id.into_string(), i.url_o.or(i.url_m)?)))
        .collect();
    let mut grouped: BTreeMap<String, BTreeMap<usize, (String, Option<String>)>> = BTreeMap::new();
    for ann in file.annotations.into_iter().flat_map(|e| match e {
        SisEntry::Wrapped(v) => v,
        SisEntry::Bare(a) => vec![a],
    }) {
        let story_id = ann
            .story_id
            .map(LooseId::into_string)
            .ok_or_else(|| CorpusError::Integrity("annotation without story_id".into()))?;
        let index = ann
            .worker_arranged_photo_order
            .ok_or_else(|| CorpusError::MissingIndex {
                story_id: story_id.clone(),
                index: grouped.get(&story_id).map_or(0, BTreeMap::len),
            })? as usize;
        let sentence = ann
            .original_text
            .filter(|s| !s.trim().is_empty())
            .or(ann.text)
            .unwrap_or_default()
            .trim()
            .to_string();
        let image = ann.photo_flickr_id.map(LooseId::into_string);
        let slots = grouped.entry(story_id.clone()).or_default();
        if slots.insert(index, (sentence, image)).is_some() {
            return Err(CorpusError::DuplicateIndex { story_id, index });
        }
    }

    let mut set = StorySet::new(Author::Human);
    for (story_id, slots) in grouped {
        let mut sentences = Vec::with_capacity(slots.len());
        let mut images = Vec::with_capacity(slots.len());
        for (expected, (index, (sentence, image))) in slots.into_iter().enumerate() {
            if index != expected {
                return Err(CorpusError::MissingIndex { story_id, index: expected });
            }
            sentences.push(sentence);
            images.push(image.unwrap_or_else(|| format!("{story_id}/{index}")));
        }
        set.insert(StorySequence::new(story_id, sentences, images, Author::Human)?)?;
    }
    let used: Map<String, Value> = set
        .stories
        .values()
        .flat_map(|s| &s.images)
        .filter_map(|i| Some((i.image_id.clone(), Value::String(known_uris.get(&i.image_id)?.clone()))))
        .collect();
    if !used.is_empty() {
        set.provenance.insert(IMAGE_URIS_KEY.into(), Value::Object(used));
        apply_image_uris(&mut set);
    }
    Ok(set)
}

pub fn import_vist_sis(path: &Path) -> Result<StorySet, CorpusError> {
    parse_vist_sis(&read_file(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct StoryLine {
    story_id: String,
    sentences: Vec<String>,
    #[serde(default)]
    model_id: Option<String>,
    #[serde(default)]
    images: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    #[serde(rename = "__meta__")]
    meta: Map<String, Value>,
}

/// A line skipped during import, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedLine {
    /// 1-based line number.
    pub line: usize,
    pub story_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct StoryImport {
    pub set: StorySet,
    pub rejected: Vec<RejectedLine>,
}

/// Parses canonical story JSONL written by `author`.
pub fn parse_story_jsonl(text: &str, author: Author) -> Result<StoryImport, CorpusError> {
    let mut set = StorySet::new(author);
    let mut rejected = Vec::new();
    let mut offset = 0;
    let mut seen_story = false;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let base = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        if !seen_story && line.contains("\"__meta__\"") {
            if let Ok(meta) = serde_json::from_str::<MetaLine>(line) {
                set.provenance = meta.meta;
                seen_story = true;
                continue;
            }
        }
        seen_story = true;
        let parsed: StoryLine = serde_json::from_str(line).map_err(|e| parse_error(line, base, &e))?;
        if parsed.model_id.as_deref() != set.author.model_id() {
            return Err(CorpusError::Integrity(format!(
                "line {}: story {} has model_id {:?}, expected {:?}",
                i + 1,
                parsed.story_id,
                parsed.model_id,
                set.author.model_id()
            )));
        }
        if parsed.sentences.is_empty() {
            rejected.push(RejectedLine {
                line: i + 1,
                story_id: parsed.story_id,
                reason: "empty sentence list".into(),
            });
            continue;
        }
        let story = StorySequence::new(parsed.story_id, parsed.sentences, parsed.images, set.author.clone())?;
        set.insert(story)?;
    }
    apply_image_uris(&mut set);
    Ok(StoryImport { set, rejected })
}

pub fn import_predictions(path: &Path, model_id: &str) -> Result<StoryImport, CorpusError> {
    if model_id.is_empty() || model_id == "human" {
        return Err(CorpusError::Integrity(format!("`{model_id}` is not a usable model id")));
    }
    parse_story_jsonl(&read_file(path)?, Author::Model(model_id.to_string()))
}

/// Serializes a set as canonical JSONL, stories in id order.
pub fn to_story_jsonl(set: &StorySet) -> String {
    let mut out = String::new();
    if !set.provenance.is_empty() {
        let meta = serde_json::json!({ "__meta__": set.provenance });
        out.push_str(&meta.to_string());
        out.push('\n');
    }
    for story in set.stories.values() {
        let line = StoryLine {
            story_id: story.story_id.clone(),
            sentences: story.sentences.clone(),
            model_id: story.author.model_id().map(str::to_string),
            images: story.image_ids(),
        };
        out.push_str(&serde_json::to_string(&line).expect("story lines serialize"));
        out.push('\n');
    }
    out
}

/// Human and model stories restricted to their common ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    /// Sorted lexicographically.
    pub story_ids: Vec<String>,
    pub human: StorySet,
    /// Sorted by model id.
    pub models: Vec<StorySet>,
}

impl EvaluationSet {
    pub fn model(&self, model_id: &str) -> Option<&StorySet> {
        self.models.iter().find(|m| m.author.model_id() == Some(model_id))
    }

    /// Human set followed by the model sets.
    pub fn all_sets(&self) -> impl Iterator<Item = &StorySet> {
        std::iter::once(&self.human).chain(&self.models)
    }
}

/// Keeps only the story ids present in the human set and in every model set.
///
/// Output is independent of the order of `models`. Model stories without
/// image ids inherit those of the paired human story.
pub fn intersect(human: &StorySet, models: &[StorySet]) -> Result<EvaluationSet, CorpusError> {
    if !human.author.is_human() {
        return Err(CorpusError::Integrity("the reference set must be human-authored".into()));
    }
    if models.is_empty() {
        return Err(CorpusError::NoModels);
    }
    let mut seen = BTreeSet::new();
    for m in models {
        let id = m
            .author
            .model_id()
            .ok_or_else(|| CorpusError::Integrity("a model set is marked as human".into()))?;
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateModel(id.to_string()));
        }
    }

    let mut common: BTreeSet<&str> = human.ids();
    for m in models {
        let ids = m.ids();
        common.retain(|id| ids.contains(id));
    }
    if common.is_empty() {
        return Err(CorpusError::EmptyIntersection);
    }

    let restrict = |set: &StorySet| -> StorySet {
        let stories = common
            .iter()
            .map(|&id| {
                let mut story = set.stories[id].clone();
                if story.images.is_empty() {
                    story.images = human.stories[id].images.clone();
                }
                (id.to_string(), story)
            })
            .collect();
        StorySet {
            author: set.author.clone(),
            stories,
            provenance: set.provenance.clone(),
        }
    };

    let mut restricted: Vec<StorySet> = models.iter().map(restrict).collect();
    restricted.sort_by(|a, b| a.author.cmp(&b.author));
    Ok(EvaluationSet {
        story_ids: common.iter().map(|s| s.to_string()).collect(),
        human: restrict(human),
        models: restricted,
    })
}
