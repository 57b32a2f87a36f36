//! Exact (type-1) code-clone detection over Q&A post corpora.
//!
//! The pipeline reads posts, segments code blocks, normalizes and
//! fingerprints them, groups identical blocks into clone sets keyed by
//! thread, and derives duplication statistics and attribution evidence.

pub mod cloneindex;
pub mod corpus;
pub mod error;
pub mod linkanalysis;
pub mod normalizer;
pub mod pipeline;
pub mod reporter;
pub mod stats;

pub use cloneindex::{CloneIndex, CloneSet, CloneStats, IndexBuilder, Occurrence, SetKey};
pub use corpus::{extract_code_blocks, parse_posts, CodeBlock, InputFormat, Post, PostType};
pub use error::{Error, Result};
pub use normalizer::{fingerprint, normalize, process_block, NormalizedSnippet};
