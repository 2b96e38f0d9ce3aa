//! Knowledge-augmented replay for class-incremental text classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`kb`]: sense-level lexical knowledge graph ingested from a normalized
//!   Wiktextract-style JSONL dump.
//! - [`mention`]: tokenizer and trie-based leftmost-longest mention extraction.
//! - [`semantics`]: definition relevance classifier used to gate semantic
//!   augmentation.
//! - [`augment`]: span replacement augmentation (random and semantic).
//! - [`learner`]: hashed text encoder and an extensible softmax head trained on
//!   the joint current + replay objective.
//! - [`memory`]: fixed-capacity exemplar buffer with per-task quotas.
//! - [`continual`]: the task-sequence driver and the six replay approaches.
//! - [`eval`]: accuracy, class-wise AUC and forgetting.
//! - [`data`]: task stream construction and a synthetic drift generator.

pub mod augment;
pub mod continual;
pub mod data;
pub mod error;
pub mod eval;
pub mod kb;
pub mod learner;
pub mod memory;
pub mod mention;
pub mod semantics;
pub mod util;

pub use error::{Error, Result};
