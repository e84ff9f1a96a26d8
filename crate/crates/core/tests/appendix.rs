//! The five appendix stories (human plus six systems) as an end-to-end corpus.

mod support;

use std::fs;

use storyeval::corpus::{import_predictions, import_vist_sis, intersect, to_story_jsonl, parse_story_jsonl, Author};
use storyeval::pipeline::prepare_story;
use storyeval::redundancy::{story_nonredundancy, RedundancyConfig};
use storyeval::textproc::LexiconTagger;

const IDS: [&str; 5] = [
    "appendix-boating",
    "appendix-coast",
    "appendix-game-night",
    "appendix-harbor",
    "appendix-skatepark",
];

#[test]
fn sis_import_regroups_shuffled_annotations() {
    let human = import_vist_sis(&support::appendix_dir().join("sis.json")).unwrap();
    assert_eq!(human.ids().into_iter().collect::<Vec<_>>(), IDS);
    let skate = &human.stories["appendix-skatepark"];
    assert_eq!(skate.sentences[0], "Hanging out with Abraham, getting some skate time in.");
    assert_eq!(skate.sentences[4], "My first time hitting this trick! I was super excited.");
    assert_eq!(skate.images[0].uri.as_deref(), Some("https://example.org/vist/900000.jpg"));
    // the harbor story has seven sentences and is kept as a nonstandard story
    assert_eq!(human.stories["appendix-harbor"].sentences.len(), 7);
    assert_eq!(human.nonstandard_count(), 1);
}

#[test]
fn every_system_covers_all_five_stories() {
    let human = import_vist_sis(&support::appendix_dir().join("sis.json")).unwrap();
    let models: Vec<_> = support::sidecar::APPENDIX_MODELS
        .iter()
        .map(|(id, file)| {
            let import = import_predictions(&support::appendix_dir().join(file), id).unwrap();
            assert!(import.rejected.is_empty());
            import.set
        })
        .collect();
    let eval = intersect(&human, &models).unwrap();
    assert_eq!(eval.story_ids, IDS);
    assert_eq!(eval.models.len(), 6);
    // image ids flow from the human stories into the model stories
    let v2 = eval.model("VIST-GPT v2").unwrap();
    assert_eq!(v2.stories["appendix-skatepark"].image_ids(), human.stories["appendix-skatepark"].image_ids());
}

#[test]
fn generation_settings_survive_as_provenance() {
    let v1 = import_predictions(&support::appendix_dir().join("vist_gpt_v1.jsonl"), "VIST-GPT v1").unwrap().set;
    let v2 = import_predictions(&support::appendix_dir().join("vist_gpt_v2.jsonl"), "VIST-GPT v2").unwrap().set;
    assert_eq!(v1.provenance["temperature"], 0.8);
    assert_eq!(v1.provenance["num_beams"], 4);
    assert_eq!(v1.provenance["prompt"], "Generate a short coherent story about the given sequence of images");
    assert_eq!(v2.provenance["temperature"], 0.7);
    assert_eq!(v2.provenance["num_beams"], 2);
    assert!(v2.provenance["prompt"].as_str().unwrap().starts_with("Given a sequence of five images"));

    let text = to_story_jsonl(&v2);
    let back = parse_story_jsonl(&text, Author::Model("VIST-GPT v2".into())).unwrap().set;
    assert_eq!(back, v2);
    assert_eq!(to_story_jsonl(&back), text);
}

#[test]
fn skatepark_nouns_match_golden() {
    let human = import_vist_sis(&support::appendix_dir().join("sis.json")).unwrap();
    let prepared = prepare_story(&human.stories["appendix-skatepark"], &LexiconTagger::bundled()).unwrap();
    let rendered: String = prepared
        .positions
        .iter()
        .zip(&prepared.nouns)
        .map(|(p, n)| format!("{p}\t{n}\n"))
        .collect();
    assert_eq!(rendered, fs::read_to_string(support::fixtures().join("skatepark_human_nouns.tsv")).unwrap());
}

#[test]
fn repeated_sentences_lower_non_redundancy() {
    let human = import_vist_sis(&support::appendix_dir().join("sis.json")).unwrap();
    let arel = import_predictions(&support::appendix_dir().join("arel.jsonl"), "AREL").unwrap().set;
    let cfg = RedundancyConfig::default();
    // AREL opens and closes the coast story with the same sentence
    let story = &arel.stories["appendix-coast"];
    assert_eq!(story.sentences[0], story.sentences[4]);
    let r_arel = story_nonredundancy(story, &cfg).unwrap().r;
    let r_human = story_nonredundancy(&human.stories["appendix-coast"], &cfg).unwrap().r;
    assert!(r_arel < r_human, "{r_arel} vs {r_human}");
}
