//! Visual grounding score G.
//!
//! Every story noun is embedded as a term vector; every image contributes a
//! matrix of region vectors in the same space. A term's affinity is its best
//! cosine match among the candidate regions (the whole sequence, or only the
//! image aligned with the term's sentence), with negative cosines mapped into
//! `[0, 1]`. G is the mean affinity.
//!
//! The `groovist` variant additionally drops terms whose affinity falls below
//! a threshold before averaging, so only concepts that are actually visible
//! contribute. This threshold filter is an approximation of concept filtering
//! and is labelled as such in reports.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativeHandling {
    /// `max(0, cos)`
    #[default]
    ClampToZero,
    /// `(cos + 1) / 2`
    RescaleHalfPlus,
}

impl NegativeHandling {
    pub fn apply(self, cos: f64) -> f64 {
        match self {
            NegativeHandling::ClampToZero => cos.max(0.0),
            NegativeHandling::RescaleHalfPlus => (cos + 1.0) / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegionAggregation {
    #[default]
    MaxOverSequence,
    /// Term in sentence `i` only matches regions of image `i`.
    MaxOverAlignedImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GroundingVariant {
    #[default]
    RovistVg,
    Groovist,
}

impl std::fmt::Display for GroundingVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GroundingVariant::RovistVg => "rovist_vg",
            GroundingVariant::Groovist => "groovist",
        })
    }
}

impl std::str::FromStr for GroundingVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rovist_vg" => Ok(GroundingVariant::RovistVg),
            "groovist" => Ok(GroundingVariant::Groovist),
            other => Err(format!("unknown grounding variant `{other}` (expected rovist_vg or groovist)")),
        }
    }
}

/// Threshold used when the groovist variant is selected without one.
pub const DEFAULT_GROOVIST_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub negative_handling: NegativeHandling,
    pub aggregation: RegionAggregation,
    /// Present iff `variant` is `groovist`.
    pub filter_threshold: Option<f64>,
    pub variant: GroundingVariant,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self::rovist_vg()
    }
}

impl GroundingConfig {
    pub fn rovist_vg() -> Self {
        Self {
            negative_handling: NegativeHandling::default(),
            aggregation: RegionAggregation::default(),
            filter_threshold: None,
            variant: GroundingVariant::RovistVg,
        }
    }

    pub fn groovist(threshold: f64) -> Self {
        Self {
            filter_threshold: Some(threshold),
            variant: GroundingVariant::Groovist,
            ..Self::rovist_vg()
        }
    }

    /// Switches variant, adding or removing the threshold to keep the config valid.
    pub fn with_variant(mut self, variant: GroundingVariant) -> Self {
        self.variant = variant;
        self.filter_threshold = match variant {
            GroundingVariant::RovistVg => None,
            GroundingVariant::Groovist => Some(self.filter_threshold.unwrap_or(DEFAULT_GROOVIST_THRESHOLD)),
        };
        self
    }

    pub fn validate(&self) -> Result<(), GroundingError> {
        match (self.variant, self.filter_threshold) {
            (GroundingVariant::RovistVg, None) => Ok(()),
            (GroundingVariant::RovistVg, Some(_)) => Err(GroundingError::Config(
                "filter_threshold is only valid for the groovist variant".into(),
            )),
            (GroundingVariant::Groovist, None) => Err(GroundingError::Config(
                "the groovist variant requires filter_threshold".into(),
            )),
            (GroundingVariant::Groovist, Some(t)) if !(0.0..=1.0).contains(&t) => Err(
                GroundingError::Config(format!("filter_threshold {t} is outside [0, 1]")),
            ),
            (GroundingVariant::Groovist, Some(_)) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionEmbeddings {
    pub image_id: String,
    /// One row per region.
    pub matrix: Matrix,
    pub encoder_id: String,
}

impl RegionEmbeddings {
    pub fn new(
        image_id: impl Into<String>,
        matrix: Matrix,
        encoder_id: impl Into<String>,
    ) -> Result<Self, GroundingError> {
        let image_id = image_id.into();
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(GroundingError::EmptyRegions { image_id });
        }
        Ok(Self {
            image_id,
            matrix,
            encoder_id: encoder_id.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermEmbeddings {
    pub terms: Vec<String>,
    /// Sentence index of each term, used by aligned aggregation.
    pub positions: Vec<usize>,
    /// One row per term.
    pub matrix: Matrix,
    pub encoder_id: String,
}

impl TermEmbeddings {
    pub fn new(
        terms: Vec<String>,
        positions: Vec<usize>,
        matrix: Matrix,
        encoder_id: impl Into<String>,
    ) -> Result<Self, GroundingError> {
        if matrix.rows() != terms.len() || positions.len() != terms.len() {
            return Err(GroundingError::TermShape {
                terms: terms.len(),
                positions: positions.len(),
                rows: matrix.rows(),
            });
        }
        Ok(Self {
            terms,
            positions,
            matrix,
            encoder_id: encoder_id.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    pub affinity: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingWarning {
    /// The story has no nouns; G is 0.
    NoNouns,
    /// Every term fell below the groovist threshold; G is 0.
    NoTermsSurvived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingScore {
    pub g: f64,
    pub per_term: Vec<TermScore>,
    pub warnings: Vec<GroundingWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Left,
    Right,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CosineError {
    #[error("{0:?} operand has zero norm")]
    ZeroNorm(Operand),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Where an offending vector lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VectorLocation {
    Term { index: Option<usize> },
    Region { image_id: String, row: usize },
}

impl std::fmt::Display for VectorLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorLocation::Term { index: Some(i) } => write!(f, "term row {i}"),
            VectorLocation::Term { index: None } => write!(f, "term vector"),
            VectorLocation::Region { image_id, row } => write!(f, "region row {row} of image {image_id}"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GroundingError {
    #[error("zero-norm vector at {0}")]
    ZeroNorm(VectorLocation),
    #[error("dimension mismatch at {location}: expected {expected}, got {actual}")]
    DimensionMismatch {
        location: VectorLocation,
        expected: usize,
        actual: usize,
    },
    #[error("no region embeddings to match against")]
    NoRegions,
    #[error("image {image_id} has an empty region matrix")]
    EmptyRegions { image_id: String },
    #[error("term embeddings have {rows} rows for {terms} terms and {positions} positions")]
    TermShape { terms: usize, positions: usize, rows: usize },
    #[error("story nouns {nouns:?} do not match embedded terms {terms:?}")]
    TermMismatch { nouns: Vec<String>, terms: Vec<String> },
    #[error("term {index} sits in sentence {position} but the story has only {images} images")]
    NoAlignedImage { index: usize, position: usize, images: usize },
    #[error("invalid grounding config: {0}")]
    Config(String),
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, CosineError> {
    if u.len() != v.len() {
        return Err(CosineError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let nu = norm(u);
    if nu == 0.0 {
        return Err(CosineError::ZeroNorm(Operand::Left));
    }
    let nv = norm(v);
    if nv == 0.0 {
        return Err(CosineError::ZeroNorm(Operand::Right));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Region rows pre-normalized to unit length.
struct UnitRegions {
    cols: usize,
    rows: Vec<Vec<f64>>,
}

impl UnitRegions {
    fn prepare(regions: &RegionEmbeddings) -> Result<Self, GroundingError> {
        let rows = regions
            .matrix
            .iter_rows()
            .enumerate()
            .map(|(row, r)| {
                let n = norm(r);
                if n == 0.0 {
                    return Err(GroundingError::ZeroNorm(VectorLocation::Region {
                        image_id: regions.image_id.clone(),
                        row,
                    }));
                }
                Ok(r.iter().map(|x| x / n).collect())
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            cols: regions.matrix.cols(),
            rows,
        })
    }

    fn best_cosine(&self, unit_term: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| dot(unit_term, r))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn unit(term: &[f64], index: Option<usize>) -> Result<Vec<f64>, GroundingError> {
    let n = norm(term);
    if n == 0.0 {
        return Err(GroundingError::ZeroNorm(VectorLocation::Term { index }));
    }
    Ok(term.iter().map(|x| x / n).collect())
}

fn check_dims(prepared: &[UnitRegions], regions: &[RegionEmbeddings], expected: usize) -> Result<(), GroundingError> {
    for (p, r) in prepared.iter().zip(regions) {
        if p.cols != expected {
            return Err(GroundingError::DimensionMismatch {
                location: VectorLocation::Region {
                    image_id: r.image_id.clone(),
                    row: 0,
                },
                expected,
                actual: p.cols,
            });
        }
    }
    Ok(())
}

fn affinity(unit_term: &[f64], candidates: &[UnitRegions], cfg: &GroundingConfig) -> f64 {
    let best = candidates
        .iter()
        .map(|c| c.best_cosine(unit_term))
        .fold(f64::NEG_INFINITY, f64::max)
        .clamp(-1.0, 1.0);
    cfg.negative_handling.apply(best).clamp(0.0, 1.0)
}

/// Best mapped cosine between `term` and any region row of `regions`.
///
/// The caller chooses the candidate images: the whole sequence, or just the
/// aligned image (see [`story_grounding`]).
pub fn term_affinity(
    term: &[f64],
    regions: &[RegionEmbeddings],
    cfg: &GroundingConfig,
) -> Result<f64, GroundingError> {
    if regions.is_empty() {
        return Err(GroundingError::NoRegions);
    }
    let prepared = regions
        .iter()
        .map(UnitRegions::prepare)
        .collect::<Result<Vec<_>, _>>()?;
    check_dims(&prepared, regions, term.len())?;
    Ok(affinity(&unit(term, None)?, &prepared, cfg))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn story_grounding(
    nouns: &[String],
    terms: &TermEmbeddings,
    regions: &[RegionEmbeddings],
    cfg: &GroundingConfig,
) -> Result<GroundingScore, GroundingError> {
    cfg.validate()?;
    if nouns != terms.terms.as_slice() {
        return Err(GroundingError::TermMismatch {
            nouns: nouns.to_vec(),
            terms: terms.terms.clone(),
        });
    }
    if regions.is_empty() {
        return Err(GroundingError::NoRegions);
    }
    if nouns.is_empty() {
        return Ok(GroundingScore {
            g: 0.0,
            per_term: Vec::new(),
            warnings: vec![GroundingWarning::NoNouns],
        });
    }

    let prepared = regions
        .iter()
        .map(UnitRegions::prepare)
        .collect::<Result<Vec<_>, _>>()?;
    check_dims(&prepared, regions, terms.matrix.cols())?;

    let mut per_term = Vec::with_capacity(nouns.len());
    for (i, row) in terms.matrix.iter_rows().enumerate() {
        let u = unit(row, Some(i))?;
        let a = match cfg.aggregation {
            RegionAggregation::MaxOverSequence => affinity(&u, &prepared, cfg),
            RegionAggregation::MaxOverAlignedImage => {
                let position = terms.positions[i];
                let image = prepared.get(position).ok_or(GroundingError::NoAlignedImage {
                    index: i,
                    position,
                    images: prepared.len(),
                })?;
                affinity(&u, std::slice::from_ref(image), cfg)
            }
        };
        let kept = cfg.filter_threshold.map_or(true, |t| a >= t);
        per_term.push(TermScore {
            term: terms.terms[i].clone(),
            affinity: a,
            kept,
        });
    }

    let mut warnings = Vec::new();
    let g = match mean(per_term.iter().filter(|t| t.kept).map(|t| t.affinity)) {
        Some(g) => g.clamp(0.0, 1.0),
        None => {
            warnings.push(GroundingWarning::NoTermsSurvived);
            0.0
        }
    };
    Ok(GroundingScore { g, per_term, warnings })
}
