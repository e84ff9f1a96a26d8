//! Stand-in for the extraction sidecar: fulfils work-order lines by writing
//! bundles and likelihood files in the store's wire format.
//!
//! Written against the documented format only (serde_json values, raw
//! little-endian f32, sha256), not the engine's writer types. Embeddings are
//! hash-seeded: a noun always maps to the same vector, each image gets one
//! region per noun of its aligned human sentence plus a background region,
//! and likelihoods are pseudo-random in [0.2, 0.95].

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const DIM: usize = 16;
pub const ENCODER_ID: &str = "sim-encoder@1";
pub const PROVIDER_ID: &str = "sim-scorer@1";
pub const CREATED_AT: &str = "2024-01-01T00:00:00Z";

fn rng_for(seed: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(Sha256::digest(seed.as_bytes()).into())
}

fn hash_vec(seed: &str) -> Vec<f32> {
    let mut rng = rng_for(seed);
    (0..DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

fn stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

fn write_tensor(dir: &Path, name: &str, rows: &[Vec<f32>]) -> Value {
    let bytes: Vec<u8> = rows.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.join(name), &bytes).unwrap();
    json!({
        "path": name,
        "dims": [rows.len(), DIM],
        "dtype": "f32",
        "sha256": hex::encode(Sha256::digest(&bytes)),
    })
}

fn merge(mut entry: Value, extra: Value) -> Value {
    for (k, v) in extra.as_object().unwrap() {
        entry[k] = v.clone();
    }
    entry
}

fn fulfil_item(root: &Path, item: &Value) {
    let story_id = item["story_id"].as_str().unwrap();
    let author = item["author"].as_str().unwrap();
    let want: Vec<&str> = item["want"].as_array().unwrap().iter().map(|w| w.as_str().unwrap()).collect();
    let terms: Vec<&str> = item["terms"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    let positions: Vec<usize> = item["positions"].as_array().unwrap().iter().map(|p| p.as_u64().unwrap() as usize).collect();

    let dir = root.join("bundles").join(stem(story_id));
    fs::create_dir_all(&dir).unwrap();
    let manifest_path = dir.join("manifest.json");
    let mut manifest: Value = match fs::read_to_string(&manifest_path) {
        Ok(text) => serde_json::from_str(&text).unwrap(),
        Err(_) => json!({ "story_id": story_id, "encoder_id": ENCODER_ID, "created_at": CREATED_AT, "files": [] }),
    };

    if want.contains(&"regions") {
        let files = manifest["files"].as_array().unwrap().clone();
        let have = |id: &str| files.iter().any(|f| f["role"] == "regions" && f["image_id"] == id);
        let mut added = Vec::new();
        for image in item["images"].as_array().unwrap() {
            let image_id = image["image_id"].as_str().unwrap();
            let position = image["position"].as_u64().unwrap() as usize;
            if have(image_id) {
                continue;
            }
            let mut rows: Vec<Vec<f32>> = terms
                .iter()
                .zip(&positions)
                .filter(|(_, &p)| p == position)
                .take(3)
                .map(|(t, _)| hash_vec(&format!("noun:{t}")))
                .collect();
            rows.push(hash_vec(&format!("background:{image_id}")));
            let name = format!("regions_{}.f32", stem(image_id));
            added.push(merge(write_tensor(&dir, &name, &rows), json!({ "role": "regions", "image_id": image_id })));
        }
        manifest["files"].as_array_mut().unwrap().extend(added);
    }

    if want.contains(&"terms") || want.contains(&"noun_flags") {
        let rows: Vec<Vec<f32>> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let base = hash_vec(&format!("noun:{t}"));
                let noise = hash_vec(&format!("noise:{author}:{story_id}:{i}"));
                base.iter().zip(&noise).map(|(b, n)| b + 0.3 * n).collect()
            })
            .collect();
        let name = format!("terms_{}.f32", stem(author));
        let entry = merge(
            write_tensor(&dir, &name, &rows),
            json!({
                "role": "terms",
                "author": author,
                "terms": terms,
                "positions": positions,
                "noun_flags": item["noun_flags"],
            }),
        );
        let files = manifest["files"].as_array_mut().unwrap();
        files.retain(|f| !(f["role"] == "terms" && f["author"] == author));
        files.push(entry);
    }
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap() + "\n").unwrap();

    if want.contains(&"likelihoods") {
        let sentences = item["sentences"].as_array().unwrap();
        let p: Vec<f64> = sentences
            .iter()
            .skip(1)
            .map(|s| {
                let mut rng = rng_for(&format!("lk:{author}:{}", s.as_str().unwrap()));
                // keep values short so the JSON is stable and readable
                (rng.gen_range(0.2f64..0.95) * 1e4).round() / 1e4
            })
            .collect();
        let path = root.join("likelihoods").join(format!("{}.jsonl", stem(author)));
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        let mut text = fs::read_to_string(&path).unwrap_or_default();
        text.push_str(&json!({ "story_id": story_id, "provider_id": PROVIDER_ID, "p": p }).to_string());
        text.push('\n');
        fs::write(&path, text).unwrap();
    }
}

/// Fulfils the work order, limited to the first `max_stories` distinct
/// story ids when given. Returns the number of items handled.
pub fn fulfil(root: &Path, work_order: &str, max_stories: Option<usize>) -> usize {
    let mut stories: Vec<String> = Vec::new();
    let mut handled = 0;
    for line in work_order.lines().filter(|l| !l.trim().is_empty()) {
        let item: Value = serde_json::from_str(line).unwrap();
        let id = item["story_id"].as_str().unwrap().to_string();
        if !stories.contains(&id) {
            if max_stories.is_some_and(|m| stories.len() >= m) {
                break;
            }
            stories.push(id);
        }
        fulfil_item(root, &item);
        handled += 1;
    }
    handled
}

pub const APPENDIX_MODELS: [(&str, &str); 6] = [
    ("AREL", "arel.jsonl"),
    ("GLACNET", "glacnet.jsonl"),
    ("KG Story", "kg_story.jsonl"),
    ("MCSM+BART", "mcsm_bart.jsonl"),
    ("VIST-GPT v1", "vist_gpt_v1.jsonl"),
    ("VIST-GPT v2", "vist_gpt_v2.jsonl"),
];

/// Ingests the appendix stories from `appendix_dir` into a new store at
/// `root` and fulfils its whole work order.
pub fn build_appendix_store(root: &Path, appendix_dir: &Path) -> storyeval::Store {
    use storyeval::pipeline;
    let store = storyeval::Store::open(root).unwrap();
    pipeline::ingest_sis(&store, &appendix_dir.join("sis.json"), false).unwrap();
    for (model, file) in APPENDIX_MODELS {
        pipeline::ingest_predictions(&store, &appendix_dir.join(file), model, false).unwrap();
    }
    let cfg = storyeval::EngineConfig::default();
    let order = pipeline::work_order_jsonl(&pipeline::work_order(&store, &cfg).unwrap());
    fulfil(root, &order, None);
    assert!(pipeline::work_order(&store, &cfg).unwrap().is_empty());
    store
}
