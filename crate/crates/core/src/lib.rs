//! Itemset completion: given part of a document's item set (citations or
//! subject labels) and optionally its metadata, rank the missing items.
//!
//! The crate covers corpus loading and pruning, metadata features, a small
//! dense numerical core, seven recommenders, drop-corruption evaluation with
//! mean reciprocal rank, and dataset statistics.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod models;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod tensor;

pub use corpus::{Document, InteractionMatrix, SplitCorpus, Vocabulary};
pub use error::{Error, Result};
pub use eval::{CorruptedTestSet, MetricReport};
pub use features::{Block, ConditionMatrix, ConditionSet};
pub use models::{Hyperparams, ModelKind, RecommenderSpec, TrainedModel};
pub use stats::DatasetSummary;
pub use tensor::Matrix;
