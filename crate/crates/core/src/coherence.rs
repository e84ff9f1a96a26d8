//! Coherence score C from externally supplied continuation likelihoods.
//!
//! `p[i]` is the probability that sentence `i + 2` follows sentences
//! `1..=i + 1`. The first sentence has no context and contributes nothing,
//! so a story of `n` sentences carries `n - 1` likelihoods and C is their
//! unweighted mean. Any ordering semantics live in the provider.

use serde::{Deserialize, Serialize};

use crate::corpus::StorySequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceLikelihoods {
    pub story_id: String,
    pub provider_id: String,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceScore {
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LikelihoodViolation {
    InsufficientContext { sentences: usize },
    Count { expected: usize, actual: usize },
    Range { index: usize, value: f64 },
    StoryIdMismatch { expected: String, actual: String },
}

impl std::fmt::Display for LikelihoodViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LikelihoodViolation::InsufficientContext { sentences } => {
                write!(f, "insufficient context: story has {sentences} sentence(s), need at least 2")
            }
            LikelihoodViolation::Count { expected, actual } => {
                write!(f, "count violation: expected {expected} likelihoods, got {actual}")
            }
            LikelihoodViolation::Range { index, value } => {
                write!(f, "range violation: p[{index}] = {value} is outside [0, 1]")
            }
            LikelihoodViolation::StoryIdMismatch { expected, actual } => {
                write!(f, "likelihoods belong to story {actual}, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub story_id: String,
    pub violations: Vec<LikelihoodViolation>,
}

impl IntegrityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for IntegrityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "story {}: ", self.story_id)?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CoherenceError {
    #[error("insufficient context: coherence needs a story of at least 2 sentences")]
    InsufficientContext,
    #[error("likelihood integrity: {0}")]
    Integrity(IntegrityReport),
}

fn range_violations(p: &[f64]) -> impl Iterator<Item = LikelihoodViolation> + '_ {
    p.iter()
        .enumerate()
        .filter(|(_, v)| !(0.0..=1.0).contains(*v))
        .map(|(index, &value)| LikelihoodViolation::Range { index, value })
}

/// Checks range, count and story id. Never panics.
pub fn validate_likelihoods(lk: &SentenceLikelihoods, story: &StorySequence) -> IntegrityReport {
    let mut violations = Vec::new();
    if lk.story_id != story.story_id {
        violations.push(LikelihoodViolation::StoryIdMismatch {
            expected: story.story_id.clone(),
            actual: lk.story_id.clone(),
        });
    }
    let n = story.sentences.len();
    if n < 2 {
        violations.push(LikelihoodViolation::InsufficientContext { sentences: n });
    } else if lk.p.len() != n - 1 {
        violations.push(LikelihoodViolation::Count {
            expected: n - 1,
            actual: lk.p.len(),
        });
    }
    violations.extend(range_violations(&lk.p));
    IntegrityReport {
        story_id: story.story_id.clone(),
        violations,
    }
}

pub fn story_coherence(lk: &SentenceLikelihoods) -> Result<CoherenceScore, CoherenceError> {
    if lk.p.is_empty() {
        return Err(CoherenceError::InsufficientContext);
    }
    let violations: Vec<_> = range_violations(&lk.p).collect();
    if !violations.is_empty() {
        return Err(CoherenceError::Integrity(IntegrityReport {
            story_id: lk.story_id.clone(),
            violations,
        }));
    }
    let mean = lk.p.iter().sum::<f64>() / lk.p.len() as f64;
    let (lo, hi) = lk
        .p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(CoherenceScore { c: mean.clamp(lo, hi) })
}

/// Validates `lk` against `story`, then scores it.
pub fn checked_story_coherence(
    lk: &SentenceLikelihoods,
    story: &StorySequence,
) -> Result<CoherenceScore, CoherenceError> {
    if story.sentences.len() < 2 {
        return Err(CoherenceError::InsufficientContext);
    }
    let report = validate_likelihoods(lk, story);
    if !report.is_ok() {
        return Err(CoherenceError::Integrity(report));
    }
    story_coherence(lk)
}
