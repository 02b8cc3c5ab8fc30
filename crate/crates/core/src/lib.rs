//! Filtered approximate near-neighbor search over space partitions.
//!
//! The index is two-level: a balanced k-means partition of the embedding
//! space, and inside every partition an attribute frequency tree (AFT) that
//! peels the most common `(position, value)` attribute tags into disjoint
//! leaves. A query probes the `m` closest partitions, picks the leaves whose
//! tags agree with its filter through a hash lookup, and only then runs the
//! attribute match and the distance computation.
//!
//! Module map:
//!
//! - [`types`]: embeddings, attribute rows, query filters, metrics
//! - [`distance`]: distance kernels and bounded top-k selection
//! - [`partitioner`]: balanced k-means and probe selection
//! - [`aft`]: attribute frequency tree build and tag lookup
//! - [`index`]: index assembly, filtered search, insertion
//! - [`io`]: the binary index file
//! - [`oracle`]: exact filtered ground truth and recall
//! - [`analysis`]: closed-form query-time and index-size models
//! - [`datagen`]: `.fvecs`-family loaders and synthetic attribute workloads

pub mod aft;
pub mod analysis;
pub mod datagen;
pub mod distance;
mod error;
pub mod index;
pub mod io;
pub mod oracle;
pub mod partitioner;
pub mod types;

pub use aft::{Aft, AftLeaf, Slot, SubpartitionMode, Tag, TagRouter};
pub use distance::{distance, TopK};
pub use error::{Error, Result};
pub use index::{CapsIndex, IndexConfig, SearchResult, SearchStats};
pub use partitioner::{Balance, KMeansConfig, PartitionModel};
pub use types::{filter_matches, AttributeTable, EmbeddingMatrix, Metric, QueryFilter, WILDCARD};
