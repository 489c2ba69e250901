//! Weakly-supervised construction of a curated response label space from a
//! dialogue corpus, and a label-smoothed context classifier that suggests one
//! of those responses or opts out.
//!
//! The pipeline runs in stages, each a module here:
//!
//! 1. [`corpus`]: ingest conversations and build the deduplicated response table.
//! 2. [`embeddings`]: encode every response with one or more sentence encoders.
//! 3. [`candidates`]: union of k-nearest-neighbour pairs over all encoders.
//! 4. [`similarity`]: score candidate pairs, build the sparse distance matrix.
//! 5. [`clustering`]: complete-linkage agglomeration over that matrix.
//! 6. [`responseclasses`]: the human merge session and the class catalog.
//! 7. [`classifier`]: (context, class) dataset and the smoothed softmax model.
//! 8. [`selective`]: opt-out suggestion and evaluation harnesses.
//!
//! Data-parallel loops go through [`Exec`], which dispatches to rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise.

pub mod candidates;
pub mod classifier;
pub mod clustering;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod exec;
pub mod external;
pub mod hashing;
pub mod responseclasses;
pub mod selective;
pub mod similarity;
pub mod synthetic;

pub use error::{Error, Result};
pub use exec::Exec;

/// Canonical response id: the row index into a [`corpus::ResponseTable`].
pub type ResponseId = u32;
