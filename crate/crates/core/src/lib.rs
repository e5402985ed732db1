//! Multi-vector late-interaction retrieval over page embeddings.
//!
//! Pages and queries are represented as [`MultiVector`] matrices (one row per
//! image patch or query token). A page is scored against a query with MaxSim:
//! every query row takes its best similarity over all page rows and the maxima
//! are summed. [`Collection`] holds pages under one fixed [`Metric`] and runs
//! exact, exhaustive top-k search; [`eval`] turns ranked lists into
//! precision/recall style benchmark reports.
//!
//! The crate is `no_std` and only needs `alloc`. Enabling the `parallel`
//! feature scores documents on the rayon thread pool (and links `std`); the
//! ranked output is identical either way.

#![cfg_attr(not(feature = "parallel"), no_std)]
#![deny(unsafe_code)]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod embedding;
mod error;
pub mod eval;
pub mod index;
pub mod kernels;
pub mod maxsim;
mod metric;
pub mod mock;

pub use embedding::{MultiVector, PageEmbedding, PageRef, QueryEmbedding};
pub use error::{Error, Result};
pub use index::{Catalog, Collection, RankedEntry, RankedResult, SearchRequest};
pub use maxsim::{maxsim_explain, maxsim_score, normalized_score, oracle_score, ScoreExplanation, TokenMatch};
pub use metric::{cosine_sim, dot_sim, euclidean_dist, manhattan_dist, similarity, Metric};
pub use mock::{mock_embed, MockEmbedder};
