//! On-disk store binding stories, embedding bundles, likelihoods, cached
//! scores and reports.
//!
//! ```text
//! <root>/
//!   stories/<author>.jsonl          canonical story JSONL ("human.jsonl" for the references)
//!   bundles/<story_id>/manifest.json
//!   bundles/<story_id>/*.f32        raw little-endian f32, row-major
//!   likelihoods/<author>.jsonl      {"story_id", "provider_id", "p"}
//!   scores/<author>.jsonl           {"story_id", "model_id", "G", "C", "R", "config_hash"}
//!   reports/
//! ```
//!
//! Every file is replaced with write-to-temp-then-rename, so readers never see
//! a partial file. One process holds the write lock (`.lock`) at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::ScoreTriple;
use crate::coherence::SentenceLikelihoods;
use crate::corpus::{parse_story_jsonl, to_story_jsonl, Author, CorpusError, StorySet};
use crate::grounding::{RegionEmbeddings, TermEmbeddings};
use crate::matrix::Matrix;

pub const STORIES_DIR: &str = "stories";
pub const BUNDLES_DIR: &str = "bundles";
pub const LIKELIHOODS_DIR: &str = "likelihoods";
pub const SCORES_DIR: &str = "scores";
pub const REPORTS_DIR: &str = "reports";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
pub const TENSOR_DTYPE: &str = "f32";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
    #[error("{path}: expected {expected} bytes, found {actual}")]
    TensorLength { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: checksum mismatch (manifest {expected}, file {actual})")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("{path}: invalid tensor: {message}")]
    Tensor { path: PathBuf, message: String },
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("store is locked by another process ({0}); remove it if no process is running")]
    Locked(PathBuf),
    #[error("{0}")]
    Integrity(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Replaces `path` atomically with `bytes`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Writes only when the content differs. Returns whether a write happened.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool, StoreError> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => Ok(false),
        _ => write_atomic(path, bytes).map(|_| true),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Encodes `values` as little-endian f32.
pub fn encode_f32(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Decodes a raw little-endian f32 row-major tensor of `dims = [rows, cols]`.
///
/// The byte length must be exactly `rows * cols * 4`; when `sha256` is given
/// the content must hash to it.
pub fn decode_tensor(path: &Path, bytes: &[u8], dims: [usize; 2], sha256: Option<&str>) -> Result<Matrix, StoreError> {
    let expected = (dims[0] * dims[1] * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(StoreError::TensorLength {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    if let Some(want) = sha256 {
        let actual = sha256_hex(bytes);
        if !actual.eq_ignore_ascii_case(want) {
            return Err(StoreError::Checksum {
                path: path.to_path_buf(),
                expected: want.to_string(),
                actual,
            });
        }
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Matrix::from_f32(dims[0], dims[1], &values).map_err(|e| StoreError::Tensor {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_tensor(path: &Path, dims: [usize; 2], sha256: Option<&str>) -> Result<Matrix, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_tensor(path, &bytes, dims, sha256)
}

/// Writes `values` as a tensor file and returns its SHA-256.
pub fn write_tensor(path: &Path, values: &[f32]) -> Result<String, StoreError> {
    let bytes = encode_f32(values);
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// What a tensor file in a bundle holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum FileRole {
    /// Region embeddings of one image, `[regions, dims]`.
    Regions { image_id: String },
    /// Noun embeddings of one author's story, `[terms, dims]`.
    Terms {
        /// `"human"` or the model id.
        author: String,
        terms: Vec<String>,
        /// Sentence index of each term.
        positions: Vec<usize>,
        /// Optional per-token noun flags, one vector per sentence.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noun_flags: Option<Vec<Vec<bool>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    #[serde(flatten)]
    pub role: FileRole,
    /// File name inside the bundle directory.
    pub path: String,
    pub dims: [usize; 2],
    pub dtype: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub story_id: String,
    pub encoder_id: String,
    pub created_at: String,
    pub files: Vec<BundleFile>,
}

impl BundleManifest {
    /// Structural checks that need no file access.
    pub fn check(&self) -> Result<(), String> {
        if self.story_id.is_empty() {
            return Err("story_id is empty".into());
        }
        if !self.files.iter().any(|f| matches!(f.role, FileRole::Regions { .. })) {
            return Err("no regions entry".into());
        }
        let mut authors = BTreeSet::new();
        let mut images = BTreeSet::new();
        let mut paths = BTreeSet::new();
        for f in &self.files {
            if f.dtype != TENSOR_DTYPE {
                return Err(format!("{}: dtype {} is not {TENSOR_DTYPE}", f.path, f.dtype));
            }
            if f.path.is_empty() || f.path.contains(['/', '\\']) || f.path.starts_with('.') || f.path == MANIFEST_FILE {
                return Err(format!("{}: file names must be plain names inside the bundle", f.path));
            }
            if !paths.insert(f.path.as_str()) {
                return Err(format!("{}: listed twice", f.path));
            }
            if f.dims[1] == 0 {
                return Err(format!("{}: zero columns", f.path));
            }
            match &f.role {
                FileRole::Regions { image_id } => {
                    if f.dims[0] == 0 {
                        return Err(format!("{}: regions need at least one row", f.path));
                    }
                    if !images.insert(image_id.as_str()) {
                        return Err(format!("image {image_id} has two regions entries"));
                    }
                }
                FileRole::Terms {
                    author, terms, positions, ..
                } => {
                    if !authors.insert(author.as_str()) {
                        return Err(format!("author {author} has two terms entries"));
                    }
                    if terms.len() != f.dims[0] || positions.len() != f.dims[0] {
                        return Err(format!(
                            "{}: {} rows for {} terms and {} positions",
                            f.path,
                            f.dims[0],
                            terms.len(),
                            positions.len()
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn terms_entry(&self, author: &str) -> Option<&BundleFile> {
        self.files
            .iter()
            .find(|f| matches!(&f.role, FileRole::Terms { author: a, .. } if a == author))
    }

    pub fn image_ids(&self) -> BTreeSet<&str> {
        self.files
            .iter()
            .filter_map(|f| match &f.role {
                FileRole::Regions { image_id } => Some(image_id.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// One author's terms with their noun flags.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorTerms {
    pub embeddings: TermEmbeddings,
    pub noun_flags: Option<Vec<Vec<bool>>>,
}

/// All tensors of one story, checksum-verified.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    pub story_id: String,
    pub encoder_id: String,
    /// In manifest order.
    pub regions: Vec<RegionEmbeddings>,
    pub terms: BTreeMap<String, AuthorTerms>,
}

impl EmbeddingBundle {
    /// Regions ordered to match `image_ids`.
    pub fn regions_for(&self, image_ids: &[String]) -> Result<Vec<RegionEmbeddings>, StoreError> {
        image_ids
            .iter()
            .map(|id| {
                self.regions.iter().find(|r| &r.image_id == id).cloned().ok_or_else(|| {
                    StoreError::Integrity(format!("bundle {} has no regions for image {id}", self.story_id))
                })
            })
            .collect()
    }
}

/// A tensor to be written by [`BundleWriter`].
#[derive(Debug, Clone)]
pub struct PendingTensor {
    pub role: FileRole,
    pub file_name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

/// Writes bundles in the store's wire format; used for fixtures and tests.
#[derive(Debug, Clone)]
pub struct BundleWriter {
    pub story_id: String,
    pub encoder_id: String,
    pub created_at: String,
    pub tensors: Vec<PendingTensor>,
}

impl BundleWriter {
    pub fn new(story_id: impl Into<String>, encoder_id: impl Into<String>, created_at: impl Into<String>) -> Self {
        Self {
            story_id: story_id.into(),
            encoder_id: encoder_id.into(),
            created_at: created_at.into(),
            tensors: Vec::new(),
        }
    }

    pub fn regions(mut self, image_id: &str, rows: &[Vec<f32>]) -> Self {
        let index = self.tensors.len();
        self.tensors.push(PendingTensor {
            role: FileRole::Regions {
                image_id: image_id.to_string(),
            },
            file_name: format!("regions_{index:02}.f32"),
            rows: rows.len(),
            cols: rows.first().map_or(0, Vec::len),
            values: rows.concat(),
        });
        self
    }

    pub fn terms(
        mut self,
        author: &str,
        terms: &[&str],
        positions: &[usize],
        noun_flags: Option<Vec<Vec<bool>>>,
        cols: usize,
        rows: &[Vec<f32>],
    ) -> Self {
        self.tensors.push(PendingTensor {
            role: FileRole::Terms {
                author: author.to_string(),
                terms: terms.iter().map(|s| s.to_string()).collect(),
                positions: positions.to_vec(),
                noun_flags,
            },
            file_name: format!("terms_{}.f32", file_stem(author)),
            rows: rows.len(),
            cols,
            values: rows.concat(),
        });
        self
    }

    /// Writes tensors first, then the manifest, each atomically.
    pub fn write(self, store: &Store) -> Result<BundleManifest, StoreError> {
        let dir = store.bundle_dir(&self.story_id);
        let mut files = Vec::new();
        for t in self.tensors {
            let sha256 = write_tensor(&dir.join(&t.file_name), &t.values)?;
            files.push(BundleFile {
                role: t.role,
                path: t.file_name,
                dims: [t.rows, t.cols],
                dtype: TENSOR_DTYPE.into(),
                sha256,
            });
        }
        let manifest = BundleManifest {
            story_id: self.story_id,
            encoder_id: self.encoder_id,
            created_at: self.created_at,
            files,
        };
        manifest
            .check()
            .map_err(|message| StoreError::Manifest {
                path: dir.join(MANIFEST_FILE),
                message,
            })?;
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_FILE), format!("{json}\n").as_bytes())?;
        Ok(manifest)
    }
}

/// File-name stem for an author: `human`, or the model id with characters
/// outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn file_stem(author: &str) -> String {
    author
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

/// Directory name for a story's bundle.
pub fn bundle_dir_name(story_id: &str) -> String {
    file_stem(story_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LikelihoodLine {
    story_id: String,
    provider_id: String,
    p: Vec<f64>,
}

/// A score cache line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedScore {
    pub story_id: String,
    pub model_id: Option<String>,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub config_hash: String,
}

impl CachedScore {
    pub fn from_triple(t: &ScoreTriple, config_hash: &str) -> Self {
        Self {
            story_id: t.story_id.clone(),
            model_id: t.author.model_id().map(str::to_string),
            g: t.g,
            c: t.c,
            r: t.r,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn author(&self) -> Author {
        self.model_id.clone().map_or(Author::Human, Author::Model)
    }

    pub fn triple(&self) -> Result<ScoreTriple, StoreError> {
        ScoreTriple::new(self.story_id.clone(), self.author(), self.g, self.c, self.r)
            .map_err(|e| StoreError::Integrity(e.to_string()))
    }
}

/// Exclusive write lock on a store, released on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map(|v| (i + 1, v)).map_err(|e| StoreError::Json {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, StoreError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

impl Store {
    /// Opens a store, creating the directory layout if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = Self { root: root.into() };
        for dir in [STORIES_DIR, BUNDLES_DIR, LIKELIHOODS_DIR, SCORES_DIR, REPORTS_DIR] {
            let p = store.root.join(dir);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn lock(&self) -> Result<StoreLock, StoreError> {
        let path = self.root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Locked(path)),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }

    pub fn stories_path(&self, author: &Author) -> PathBuf {
        self.root
            .join(STORIES_DIR)
            .join(format!("{}.jsonl", file_stem(author.label())))
    }

    pub fn likelihoods_path(&self, author: &Author) -> PathBuf {
        self.root
            .join(LIKELIHOODS_DIR)
            .join(format!("{}.jsonl", file_stem(author.label())))
    }

    pub fn scores_path(&self, author: &Author) -> PathBuf {
        self.root
            .join(SCORES_DIR)
            .join(format!("{}.jsonl", file_stem(author.label())))
    }

    pub fn bundle_dir(&self, story_id: &str) -> PathBuf {
        self.root.join(BUNDLES_DIR).join(bundle_dir_name(story_id))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join(REPORTS_DIR)
    }

    /// Author recorded in an existing stories file, if any.
    fn stories_file_author(path: &Path) -> Result<Option<Author>, StoreError> {
        #[derive(Deserialize)]
        struct Probe {
            story_id: Option<String>,
            model_id: Option<String>,
        }
        for (_, probe) in read_jsonl::<Probe>(path)? {
            if probe.story_id.is_some() {
                return Ok(Some(probe.model_id.map_or(Author::Human, Author::Model)));
            }
        }
        Ok(None)
    }

    pub fn has_stories(&self, author: &Author) -> bool {
        self.stories_path(author).exists()
    }

    /// Saves a story set. Refuses to replace an existing set unless `force`,
    /// and refuses file-name collisions between different model ids.
    pub fn save_stories(&self, set: &StorySet, force: bool) -> Result<bool, StoreError> {
        let path = self.stories_path(&set.author);
        if path.exists() {
            match Self::stories_file_author(&path)? {
                Some(existing) if existing != set.author => {
                    return Err(StoreError::Integrity(format!(
                        "{} already holds stories for {existing}, cannot store {} there",
                        path.display(),
                        set.author
                    )));
                }
                _ if !force => {
                    return Err(StoreError::Integrity(format!(
                        "stories for {} are already ingested; use --force to replace them",
                        set.author
                    )));
                }
                _ => {}
            }
        }
        write_if_changed(&path, to_story_jsonl(set).as_bytes())
    }

    /// Loads every stories file: the human set (if present) and model sets sorted by id.
    pub fn load_stories(&self) -> Result<(Option<StorySet>, Vec<StorySet>), StoreError> {
        let mut human = None;
        let mut models = Vec::new();
        for path in list_files(&self.root.join(STORIES_DIR), "jsonl")? {
            let Some(author) = Self::stories_file_author(&path)? else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let import = parse_story_jsonl(&text, author.clone())?;
            match author {
                Author::Human => human = Some(import.set),
                Author::Model(_) => models.push(import.set),
            }
        }
        models.sort_by(|a, b| a.author.cmp(&b.author));
        Ok((human, models))
    }

    pub fn load_bundle_manifest(&self, story_id: &str) -> Result<Option<BundleManifest>, StoreError> {
        let path = self.bundle_dir(story_id).join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| StoreError::Manifest {
            path: path.clone(),
            message: e.to_string(),
        })?;
        manifest.check().map_err(|message| StoreError::Manifest {
            path: path.clone(),
            message,
        })?;
        if manifest.story_id != story_id {
            return Err(StoreError::Manifest {
                path,
                message: format!("manifest is for story {}", manifest.story_id),
            });
        }
        Ok(Some(manifest))
    }

    /// Loads and checksum-verifies a story's bundle. `authors` limits which
    /// terms entries are read; `None` reads all of them.
    pub fn load_bundle(&self, story_id: &str, authors: Option<&[&str]>) -> Result<Option<EmbeddingBundle>, StoreError> {
        let Some(manifest) = self.load_bundle_manifest(story_id)? else {
            return Ok(None);
        };
        let dir = self.bundle_dir(story_id);
        let mut regions = Vec::new();
        let mut terms = BTreeMap::new();
        for f in &manifest.files {
            let path = dir.join(&f.path);
            match &f.role {
                FileRole::Regions { image_id } => {
                    let matrix = read_tensor(&path, f.dims, Some(&f.sha256))?;
                    regions.push(
                        RegionEmbeddings::new(image_id.clone(), matrix, manifest.encoder_id.clone())
                            .map_err(|e| StoreError::Integrity(e.to_string()))?,
                    );
                }
                FileRole::Terms {
                    author,
                    terms: names,
                    positions,
                    noun_flags,
                } => {
                    if authors.is_some_and(|a| !a.contains(&author.as_str())) {
                        continue;
                    }
                    let matrix = read_tensor(&path, f.dims, Some(&f.sha256))?;
                    let embeddings =
                        TermEmbeddings::new(names.clone(), positions.clone(), matrix, manifest.encoder_id.clone())
                            .map_err(|e| StoreError::Integrity(e.to_string()))?;
                    terms.insert(
                        author.clone(),
                        AuthorTerms {
                            embeddings,
                            noun_flags: noun_flags.clone(),
                        },
                    );
                }
            }
        }
        Ok(Some(EmbeddingBundle {
            story_id: manifest.story_id,
            encoder_id: manifest.encoder_id,
            regions,
            terms,
        }))
    }

    pub fn load_likelihoods(&self, author: &Author) -> Result<BTreeMap<String, SentenceLikelihoods>, StoreError> {
        let path = self.likelihoods_path(author);
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        let mut out = BTreeMap::new();
        for (line, l) in read_jsonl::<LikelihoodLine>(&path)? {
            let lk = SentenceLikelihoods {
                story_id: l.story_id,
                provider_id: l.provider_id,
                p: l.p,
            };
            if out.contains_key(&lk.story_id) {
                return Err(StoreError::Json {
                    path,
                    line,
                    message: format!("duplicate likelihoods for story {}", lk.story_id),
                });
            }
            out.insert(lk.story_id.clone(), lk);
        }
        Ok(out)
    }

    /// Writes an author's likelihood file, one line per story in id order.
    pub fn save_likelihoods(&self, author: &Author, lks: &[SentenceLikelihoods]) -> Result<bool, StoreError> {
        let mut sorted: Vec<&SentenceLikelihoods> = lks.iter().collect();
        sorted.sort_by(|a, b| a.story_id.cmp(&b.story_id));
        let mut text = String::new();
        for lk in sorted {
            let line = LikelihoodLine {
                story_id: lk.story_id.clone(),
                provider_id: lk.provider_id.clone(),
                p: lk.p.clone(),
            };
            text.push_str(&serde_json::to_string(&line).expect("likelihoods serialize"));
            text.push('\n');
        }
        write_if_changed(&self.likelihoods_path(author), text.as_bytes())
    }

    /// Every cached score line in the store.
    pub fn load_scores(&self) -> Result<Vec<CachedScore>, StoreError> {
        let mut out = Vec::new();
        for path in list_files(&self.root.join(SCORES_DIR), "jsonl")? {
            out.extend(read_jsonl::<CachedScore>(&path)?.into_iter().map(|(_, s)| s));
        }
        Ok(out)
    }

    /// Appends score lines to the author's cache file (atomic rewrite).
    pub fn append_scores(&self, author: &Author, scores: &[CachedScore]) -> Result<(), StoreError> {
        if scores.is_empty() {
            return Ok(());
        }
        let path = self.scores_path(author);
        let mut text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(StoreError::Io { path, source: e }),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        for s in scores {
            text.push_str(&serde_json::to_string(s).expect("scores serialize"));
            text.push('\n');
        }
        write_atomic(&path, text.as_bytes())
    }
}

/// A problem found by [`validate_store`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ManifestInvalid { path: String, message: String },
    MissingFile { path: String },
    DimsMismatch { path: String, expected_bytes: u64, actual_bytes: u64 },
    Checksum { path: String, expected: String, actual: String },
    NonFinite { path: String },
    Unreadable { path: String, message: String },
    LikelihoodInvalid { author: String, story_id: String, message: String },
}

/// Inputs missing for a story that is due for scoring.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Blocking {
    MissingBundle { author: String, story_id: String },
    MissingTerms { author: String, story_id: String },
    MissingLikelihoods { author: String, story_id: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StoreReport {
    pub violations: Vec<Violation>,
    pub blocking: Vec<Blocking>,
    pub orphans: Vec<String>,
}

impl StoreReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty() && self.blocking.is_empty() && self.orphans.is_empty()
    }
}

fn rel(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

fn validate_bundle_dir(root: &Path, dir: &Path, report: &mut StoreReport) {
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut referenced = BTreeSet::new();
    let manifest = fs::read_to_string(&manifest_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str::<BundleManifest>(&t).map_err(|e| e.to_string()))
        .and_then(|m| m.check().map(|_| m));
    match manifest {
        Ok(m) => {
            if bundle_dir_name(&m.story_id) != dir.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default() {
                report.violations.push(Violation::ManifestInvalid {
                    path: rel(root, &manifest_path),
                    message: format!("manifest for story {} is in the wrong directory", m.story_id),
                });
            }
            for f in &m.files {
                referenced.insert(f.path.clone());
                let path = dir.join(&f.path);
                let bytes = match fs::read(&path) {
                    Ok(b) => b,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        report.violations.push(Violation::MissingFile { path: rel(root, &path) });
                        continue;
                    }
                    Err(e) => {
                        report.violations.push(Violation::Unreadable {
                            path: rel(root, &path),
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                match decode_tensor(&path, &bytes, f.dims, Some(&f.sha256)) {
                    Ok(_) => {}
                    Err(StoreError::TensorLength { expected, actual, .. }) => {
                        report.violations.push(Violation::DimsMismatch {
                            path: rel(root, &path),
                            expected_bytes: expected,
                            actual_bytes: actual,
                        })
                    }
                    Err(StoreError::Checksum { expected, actual, .. }) => report.violations.push(Violation::Checksum {
                        path: rel(root, &path),
                        expected,
                        actual,
                    }),
                    Err(_) => report.violations.push(Violation::NonFinite { path: rel(root, &path) }),
                }
            }
        }
        Err(message) if manifest_path.exists() => report.violations.push(Violation::ManifestInvalid {
            path: rel(root, &manifest_path),
            message,
        }),
        Err(_) => {}
    }
    if let Ok(entries) = fs::read_dir(dir) {
        let mut orphans: Vec<String> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                let name = p.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
                name != MANIFEST_FILE && !referenced.contains(&name)
            })
            .map(|p| rel(root, &p))
            .collect();
        orphans.sort();
        report.orphans.extend(orphans);
    }
}

/// Verifies every manifest's checksums and dims, lists orphan files, and
/// lists stories whose scoring inputs are missing. Never fails; problems go
/// into the report.
pub fn validate_store(root: &Path) -> StoreReport {
    let mut report = StoreReport::default();
    let store = Store { root: root.to_path_buf() };

    let bundles = root.join(BUNDLES_DIR);
    if let Ok(entries) = fs::read_dir(&bundles) {
        let mut dirs: Vec<PathBuf> = entries.filter_map(Result::ok).map(|e| e.path()).collect();
        dirs.sort();
        for dir in dirs {
            if dir.is_dir() {
                validate_bundle_dir(root, &dir, &mut report);
            } else {
                report.orphans.push(rel(root, &dir));
            }
        }
    }

    let (human, models) = match store.load_stories() {
        Ok(s) => s,
        Err(e) => {
            report.violations.push(Violation::Unreadable {
                path: STORIES_DIR.into(),
                message: e.to_string(),
            });
            return report;
        }
    };
    for set in human.iter().chain(&models) {
        let author = set.author.label().to_string();
        let likelihoods = match store.load_likelihoods(&set.author) {
            Ok(l) => l,
            Err(e) => {
                report.violations.push(Violation::Unreadable {
                    path: rel(root, &store.likelihoods_path(&set.author)),
                    message: e.to_string(),
                });
                BTreeMap::new()
            }
        };
        for story in set.stories.values() {
            match store.load_bundle_manifest(&story.story_id) {
                Ok(Some(m)) if m.terms_entry(&author).is_none() => report.blocking.push(Blocking::MissingTerms {
                    author: author.clone(),
                    story_id: story.story_id.clone(),
                }),
                Ok(Some(_)) | Err(_) => {}
                Ok(None) => report.blocking.push(Blocking::MissingBundle {
                    author: author.clone(),
                    story_id: story.story_id.clone(),
                }),
            }
            match likelihoods.get(&story.story_id) {
                None => report.blocking.push(Blocking::MissingLikelihoods {
                    author: author.clone(),
                    story_id: story.story_id.clone(),
                }),
                Some(lk) => {
                    let check = crate::coherence::validate_likelihoods(lk, story);
                    if !check.is_ok() {
                        report.violations.push(Violation::LikelihoodInvalid {
                            author: author.clone(),
                            story_id: story.story_id.clone(),
                            message: check.to_string(),
                        });
                    }
                }
            }
        }
    }
    report.blocking.sort();
    report
}
