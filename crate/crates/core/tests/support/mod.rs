//! Helpers shared by the integration suites of both crates.

#![allow(dead_code)]

pub mod sidecar;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use storyeval::corpus::{Author, StorySequence, StorySet};
use storyeval::store::CachedScore;
use storyeval::{EngineConfig, Store};

/// `crates/core/tests/fixtures`, from either crate.
pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn appendix_dir() -> PathBuf {
    fixtures().join("appendix")
}

pub fn copy_dir(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dst.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &to);
        } else {
            fs::copy(entry.path(), &to).unwrap();
        }
    }
}

/// A private copy of the checked-in synthetic store.
pub fn synthetic_store(dst: &Path) -> Store {
    copy_dir(&fixtures().join("synthetic_store"), dst);
    Store::open(dst).unwrap()
}

/// Every file under `root` with its bytes and modification time.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, (Vec<u8>, SystemTime)> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let meta = fs::metadata(&path).unwrap();
                out.insert(path.clone(), (fs::read(&path).unwrap(), meta.modified().unwrap()));
            }
        }
    }
    out
}

/// Writes `ids` as stories for `author` (two placeholder sentences each).
pub fn write_stories(store: &Store, author: Author, ids: &[&str]) {
    let mut set = StorySet::new(author.clone());
    for id in ids {
        let images = if author.is_human() { vec![format!("{id}/0"), format!("{id}/1")] } else { vec![] };
        set.insert(
            StorySequence::new(*id, vec!["A dog ran.".into(), "The dog slept.".into()], images, author.clone()).unwrap(),
        )
        .unwrap();
    }
    store.save_stories(&set, true).unwrap();
}

/// Stores the stories named in a score JSONL file and injects its lines as
/// cached scores for the default config.
pub fn inject_scores(store: &Store, scores_jsonl: &str) {
    let hash = EngineConfig::default().config_hash();
    let mut by_author: BTreeMap<Author, Vec<CachedScore>> = BTreeMap::new();
    for line in scores_jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        v["config_hash"] = hash.clone().into();
        let score: CachedScore = serde_json::from_value(v).unwrap();
        by_author.entry(score.author()).or_default().push(score);
    }
    for (author, scores) in &by_author {
        let ids: Vec<&str> = scores.iter().map(|s| s.story_id.as_str()).collect();
        write_stories(store, author.clone(), &ids);
        store.append_scores(author, scores).unwrap();
    }
}

/// A store holding only the published-table fixture scores.
pub fn published_store(root: &Path) -> Store {
    let store = Store::open(root).unwrap();
    inject_scores(&store, &fs::read_to_string(fixtures().join("published_table_scores.jsonl")).unwrap());
    store
}
