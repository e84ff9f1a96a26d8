//! Reference-free evaluation of visual stories.
//!
//! Each story is scored on three axes, all in `[0, 1]`:
//!
//! * **G**, visual grounding: cosine alignment between noun embeddings and
//!   image-region embeddings ([`grounding`]).
//! * **C**, coherence: mean continuation likelihood of sentences 2..n
//!   ([`coherence`]).
//! * **R**, non-redundancy: one minus the mean of inter-sentence Jaccard
//!   overlap and intra-sentence n-gram duplication ([`redundancy`]).
//!
//! [`aggregate`] turns paired human/model triples into the human-to-machine
//! distance `d_HM = (|G_H - G_M| + |C_H - C_M| + |R_H - R_M|) / 3` and ranks
//! models on a leaderboard. Neural features (embeddings, likelihoods, optional
//! POS flags) are produced outside the engine and exchanged through the
//! on-disk formats in [`store`].

pub mod aggregate;
pub mod coherence;
pub mod config;
pub mod corpus;
pub mod exec;
pub mod grounding;
pub mod matrix;
pub mod pipeline;
pub mod redundancy;
pub mod report;
pub mod store;
pub mod textproc;

pub use aggregate::{Aggregation, DistanceBreakdown, Leaderboard, ScoreTriple};
pub use config::EngineConfig;
pub use corpus::{Author, EvaluationSet, StorySequence, StorySet};
pub use exec::Execution;
pub use store::Store;
