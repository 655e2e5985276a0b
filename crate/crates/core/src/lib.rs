//! Evidence retrieval and veracity classification for textual claims.
//!
//! The pipeline retrieves paragraphs with BM25 (optionally RM3-expanded),
//! re-ranks them with a cross-encoder scorer, selects evidence sentences by
//! embedding similarity, and classifies the claim with one of the NLI-fusion
//! heads in [`verdict`]. Pretrained-model calls go through [`encoder`], which
//! can record and replay responses so every run is hermetic.

pub mod corpus;
pub mod dedup;
pub mod encoder;
pub mod error;
pub mod evidence;
pub mod fsutil;
pub mod index;
pub mod nn;
pub mod pipeline;
pub mod rerank;
pub mod verdict;

pub use error::{Error, Result};
