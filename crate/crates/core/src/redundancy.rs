//! Non-redundancy score R.
//!
//! Each sentence becomes the union of its n-gram sets over the configured
//! orders. Two quantities measure repetition:
//!
//! * inter: mean Jaccard similarity over all unordered sentence pairs;
//! * intra: mean per-sentence duplication `1 - distinct / total`, with
//!   distinct and total counts summed over orders.
//!
//! `R = 1 - (inter + intra) / 2`. Jaccard works on sets; multiplicity only
//! enters through intra. Two empty sets have Jaccard 0.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::StorySequence;
use crate::textproc::{bundled_stopwords, ngram_set, tokenize, NgramSet, WordList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    MeanInterIntra,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RedundancyConfig {
    pub orders: BTreeSet<usize>,
    /// Drop stopwords from unigrams (higher orders are never filtered).
    pub stopword_filtering: bool,
    pub combine: Combine,
}

impl Default for RedundancyConfig {
    fn default() -> Self {
        Self {
            orders: BTreeSet::from([1, 2]),
            stopword_filtering: true,
            combine: Combine::MeanInterIntra,
        }
    }
}

impl RedundancyConfig {
    pub fn with_orders(orders: impl IntoIterator<Item = usize>) -> Self {
        Self {
            orders: orders.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RedundancyError> {
        if self.orders.is_empty() || self.orders.contains(&0) {
            return Err(RedundancyError::Config(format!(
                "n-gram orders must be a nonempty set of positive integers, got {:?}",
                self.orders
            )));
        }
        Ok(())
    }

    fn stopwords(&self) -> &'static WordList {
        static EMPTY: std::sync::OnceLock<WordList> = std::sync::OnceLock::new();
        if self.stopword_filtering {
            bundled_stopwords()
        } else {
            EMPTY.get_or_init(WordList::empty)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedundancyScore {
    pub r: f64,
    pub inter: f64,
    pub intra: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RedundancyError {
    #[error("non-redundancy needs at least 2 sentences, got {0}")]
    TooFewSentences(usize),
    #[error("invalid redundancy config: {0}")]
    Config(String),
}

/// `|a ∩ b| / |a ∪ b|`, 0 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// [`jaccard`] over sorted, deduplicated slices.
pub fn jaccard_sorted<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// All gram sets of one sentence.
#[derive(Debug, Clone)]
pub struct SentenceGrams<'a> {
    pub per_order: Vec<NgramSet<'a>>,
    /// Union over orders, sorted. Grams of different orders never collide.
    pub union: Vec<&'a [String]>,
}

impl<'a> SentenceGrams<'a> {
    pub fn build(tokens: &'a [String], orders: &BTreeSet<usize>, stopwords: &WordList) -> Self {
        let per_order: Vec<NgramSet<'a>> = orders.iter().map(|&n| ngram_set(tokens, n, stopwords)).collect();
        let mut union: Vec<&'a [String]> = per_order.iter().flat_map(|s| s.grams.iter().copied()).collect();
        union.sort_unstable();
        Self { per_order, union }
    }

    fn duplication(&self) -> f64 {
        let distinct: usize = self.per_order.iter().map(NgramSet::len).sum();
        let total: usize = self.per_order.iter().map(|s| s.total_count).sum();
        if total == 0 {
            0.0
        } else {
            1.0 - distinct as f64 / total as f64
        }
    }
}

/// Mean Jaccard over unordered sentence pairs `(i, j)`, `i < j`, summed in
/// lexicographic pair order.
pub fn inter_sentence(sentences: &[SentenceGrams<'_>]) -> Result<f64, RedundancyError> {
    let n = sentences.len();
    if n < 2 {
        return Err(RedundancyError::TooFewSentences(n));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += jaccard_sorted(&sentences[i].union, &sentences[j].union);
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Mean per-sentence duplication ratio; 0 for no sentences.
pub fn intra_sentence(sentences: &[SentenceGrams<'_>]) -> f64 {
    if sentences.is_empty() {
        return 0.0;
    }
    sentences.iter().map(SentenceGrams::duplication).sum::<f64>() / sentences.len() as f64
}

/// Scores already tokenized sentences.
pub fn nonredundancy_of_tokens<T: AsRef<[String]>>(
    sentences: &[T],
    cfg: &RedundancyConfig,
) -> Result<RedundancyScore, RedundancyError> {
    cfg.validate()?;
    if sentences.len() < 2 {
        return Err(RedundancyError::TooFewSentences(sentences.len()));
    }
    let stopwords = cfg.stopwords();
    let grams: Vec<SentenceGrams<'_>> = sentences
        .iter()
        .map(|t| SentenceGrams::build(t.as_ref(), &cfg.orders, stopwords))
        .collect();
    let inter = inter_sentence(&grams)?;
    let intra = intra_sentence(&grams);
    let r = match cfg.combine {
        Combine::MeanInterIntra => 1.0 - (inter + intra) / 2.0,
    };
    Ok(RedundancyScore {
        r: r.clamp(0.0, 1.0),
        inter,
        intra,
    })
}

pub fn sentences_nonredundancy<S: AsRef<str>>(
    sentences: &[S],
    cfg: &RedundancyConfig,
) -> Result<RedundancyScore, RedundancyError> {
    let tokens: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s.as_ref()).tokens).collect();
    nonredundancy_of_tokens(&tokens, cfg)
}

pub fn story_nonredundancy(story: &StorySequence, cfg: &RedundancyConfig) -> Result<RedundancyScore, RedundancyError> {
    sentences_nonredundancy(&story.sentences, cfg)
}
