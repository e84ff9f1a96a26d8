mod support;

use std::fs;

use storyeval::aggregate::Aggregation;
use storyeval::config::NounSource;
use storyeval::corpus::Author;
use storyeval::grounding::GroundingVariant;
use storyeval::pipeline::{self, compare_store, score_store, work_order, Want};
use storyeval::store::{validate_store, Blocking, Violation};
use storyeval::{EngineConfig, Execution, Store};

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn checked_in_store_is_reproducible() {
    let dir = tmp();
    support::sidecar::build_appendix_store(dir.path(), &support::appendix_dir());
    let fresh = support::snapshot(dir.path());
    let checked_in = support::snapshot(&support::fixtures().join("synthetic_store"));
    let strip = |m: std::collections::BTreeMap<std::path::PathBuf, (Vec<u8>, std::time::SystemTime)>, root: &std::path::Path| {
        m.into_iter()
            .map(|(p, (bytes, _))| (p.strip_prefix(root).unwrap().to_path_buf(), bytes))
            .collect::<std::collections::BTreeMap<_, _>>()
    };
    assert_eq!(
        strip(fresh, dir.path()),
        strip(checked_in, &support::fixtures().join("synthetic_store")),
        "regenerate with `cargo run -p storyeval --example make_fixture_store -- crates/core/tests/fixtures/synthetic_store`"
    );
}

#[test]
fn sidecar_output_validates_clean() {
    let dir = tmp();
    support::synthetic_store(dir.path());
    assert!(validate_store(dir.path()).is_empty());
}

#[test]
fn scoring_covers_every_author_and_caches() {
    let dir = tmp();
    let store = support::synthetic_store(dir.path());
    let cfg = EngineConfig::default();
    let run = score_store(&store, &cfg, Execution::Parallel).unwrap();
    assert!(run.is_complete(), "{:?}", run.failures);
    assert_eq!((run.scored, run.cached), (35, 0));

    let scores = store.load_scores().unwrap();
    let authors: std::collections::BTreeSet<Author> = scores.iter().map(|s| s.author()).collect();
    assert_eq!(authors.len(), 7);
    assert!(authors.contains(&Author::Human));

    let before = support::snapshot(dir.path());
    let again = score_store(&store, &cfg, Execution::Parallel).unwrap();
    assert_eq!((again.scored, again.cached), (0, 35));
    assert_eq!(support::snapshot(dir.path()), before);

    let groovist = cfg.clone().with_variant(GroundingVariant::Groovist);
    let recomputed = score_store(&store, &groovist, Execution::Parallel).unwrap();
    assert_eq!((recomputed.scored, recomputed.cached), (35, 0));
    assert_ne!(recomputed.config_hash, run.config_hash);
}

#[test]
fn sequential_and_parallel_scores_agree() {
    let (a, b) = (tmp(), tmp());
    let sa = support::synthetic_store(a.path());
    let sb = support::synthetic_store(b.path());
    let cfg = EngineConfig::default();
    score_store(&sa, &cfg, Execution::Sequential).unwrap();
    score_store(&sb, &cfg, Execution::Parallel).unwrap();
    for author in ["human", "VIST-GPT_v2", "AREL"] {
        let path = |root: &std::path::Path| root.join("scores").join(format!("{author}.jsonl"));
        assert_eq!(fs::read(path(a.path())).unwrap(), fs::read(path(b.path())).unwrap());
    }
}

#[test]
fn corrupt_bundle_is_a_partial_failure() {
    let dir = tmp();
    let store = support::synthetic_store(dir.path());
    let tensor = store.bundle_dir("appendix-boating").join("terms_GLACNET.f32");
    let mut bytes = fs::read(&tensor).unwrap();
    bytes[3] ^= 0xff;
    fs::write(&tensor, bytes).unwrap();

    let report = validate_store(dir.path());
    assert_eq!(report.violations.len(), 1);
    assert!(matches!(&report.violations[0], Violation::Checksum { path, .. } if path.contains("terms_GLACNET")));

    let run = score_store(&store, &EngineConfig::default(), Execution::Parallel).unwrap();
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].story_id, "appendix-boating");
    assert_eq!(run.failures[0].author, "GLACNET");
    assert_eq!(run.failures[0].stage, "bundle");
    assert_eq!(run.scored, 34);
    let failures = fs::read_to_string(dir.path().join("reports").join(pipeline::FAILURES_FILE)).unwrap();
    assert!(failures.contains("appendix-boating"));
    // the failed story stays out of the leaderboard for every model
    let cmp = compare_store(&store, &EngineConfig::default(), Aggregation::MeanOfDistances).unwrap();
    assert_eq!(cmp.leaderboard.excluded_story_ids, vec!["appendix-boating"]);
    assert!(cmp.leaderboard.rows.iter().all(|r| r.story_count == 4));
}

#[test]
fn work_order_shrinks_as_the_sidecar_delivers() {
    let dir = tmp();
    let store = Store::open(dir.path()).unwrap();
    support::write_stories(&store, Author::Human, &["a", "b"]);
    let cfg = EngineConfig::default();
    let items = work_order(&store, &cfg).unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0].want, vec![Want::Regions, Want::Terms, Want::Likelihoods]);
    assert_eq!(items[0].terms, vec!["dog", "dog"]);
    assert_eq!(items[0].positions, vec![0, 1]);

    let blocking = validate_store(dir.path()).blocking;
    assert!(blocking.contains(&Blocking::MissingLikelihoods { author: "human".into(), story_id: "a".into() }));

    support::sidecar::fulfil(dir.path(), &pipeline::work_order_jsonl(&items), Some(1));
    let items = work_order(&store, &cfg).unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0].story_id, "b");

    support::sidecar::fulfil(dir.path(), &pipeline::work_order_jsonl(&items), None);
    assert!(work_order(&store, &cfg).unwrap().is_empty());
    assert!(validate_store(dir.path()).is_empty());

    let flags = EngineConfig { nouns: NounSource::BundleFlags, ..cfg };
    assert!(work_order(&store, &flags).unwrap().is_empty());
    let run = score_store(&store, &flags, Execution::Sequential).unwrap();
    assert!(run.is_complete(), "{:?}", run.failures);
}

#[test]
fn model_without_scores_is_refused() {
    let dir = tmp();
    let store = support::synthetic_store(dir.path());
    let cfg = EngineConfig::default();
    score_store(&store, &cfg, Execution::Parallel).unwrap();
    support::write_stories(&store, Author::Model("late".into()), &["appendix-boating", "appendix-coast"]);
    let err = compare_store(&store, &cfg, Aggregation::MeanOfDistances).unwrap_err();
    assert!(err.to_string().contains("late"), "{err}");
}

#[test]
fn compare_is_deterministic_and_idempotent() {
    let (a, b) = (tmp(), tmp());
    let cfg = EngineConfig::default();
    for dir in [&a, &b] {
        let store = support::synthetic_store(dir.path());
        score_store(&store, &cfg, Execution::Parallel).unwrap();
        let cmp = compare_store(&store, &cfg, Aggregation::MeanOfDistances).unwrap();
        assert_eq!(cmp.written.len(), 4);
    }
    for name in ["leaderboard_rovist_vg_per-story.md", "leaderboard_rovist_vg_per-story.json", "dhm_series_rovist_vg_per-story.csv"] {
        assert_eq!(
            fs::read(a.path().join("reports").join(name)).unwrap(),
            fs::read(b.path().join("reports").join(name)).unwrap()
        );
    }
    let store = Store::open(a.path()).unwrap();
    let before = support::snapshot(a.path());
    assert!(compare_store(&store, &cfg, Aggregation::MeanOfDistances).unwrap().written.is_empty());
    assert_eq!(support::snapshot(a.path()), before);
}

#[test]
fn reingest_requires_force() {
    let dir = tmp();
    let store = Store::open(dir.path()).unwrap();
    let file = support::appendix_dir().join("arel.jsonl");
    assert_eq!(pipeline::ingest_predictions(&store, &file, "AREL", false).unwrap().stories, 5);
    assert!(pipeline::ingest_predictions(&store, &file, "AREL", false).is_err());
    assert!(!pipeline::ingest_predictions(&store, &file, "AREL", true).unwrap().written);
}
