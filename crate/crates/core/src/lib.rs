//! Word sense induction from language-model substitutes.
//!
//! Each instance of a target word is turned into a handful of sampled
//! substitute sets ("representatives"). Representatives of all instances of
//! a target are clustered by average linkage over TFIDF cosine distance, and
//! each instance receives a graded labeling from the clusters its
//! representatives fall into.

pub mod clustering;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod pipeline;
pub mod senses;
pub mod substitution;
pub mod synthetic;

pub use corpus::{GradedLabeling, Instance, KeyFile, KeyFormat, PipelineConfig, TargetKey};
pub use error::{Error, Result};
pub use substitution::{Representative, SubstituteRecord, SubstituteSet};
