//! Lexical semantic change across corpus slices.
//!
//! The pipeline trains one skip-gram embedding per slice (century or poet),
//! aligns the spaces with orthogonal Procrustes, and then reads change off
//! the local semantic graph of each slice rather than off vector drift
//! alone:
//!
//! - [`corpus`]: Persian-aware normalization, tokenization, slicing and
//!   poet-aware round-robin balancing.
//! - [`embed`]: skip-gram with negative sampling, cosine queries and the
//!   word2vec text format.
//! - [`align`]: Procrustes maps, consecutive and reference chaining.
//! - [`graph`]: mutual k-NN graphs, greedy modularity communities, node
//!   roles (degree centrality, bridge score).
//! - [`metrics`]: drift, neighbor turnover, community reallocation, role
//!   volatility, reference deviation and the agreement profile.
//! - [`poetcmp`]: poet-axis dispersions, double-centering and the
//!   century-vs-poet pressure classification.
//! - [`synth`]: synthetic corpora with planted behavior, used as an
//!   end-to-end oracle.
//! - [`pipeline`]: configuration, staged on-disk runs, manifests and the
//!   report bundle.
//!
//! Runnable walkthroughs for each of these live in the crate's `examples/`
//! directory.

pub mod align;
pub mod corpus;
pub mod embed;
mod error;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod poetcmp;
pub mod synth;

pub use error::{Error, Result};
