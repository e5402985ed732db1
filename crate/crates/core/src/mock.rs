//! Deterministic stand-in for the embedding model.
//!
//! Row `i` of `mock_embed(input, rows, dims, seed)` is drawn from a ChaCha8
//! stream keyed by `SHA-256(seed_le64 || len_le64(input) || input || i_le64)`.
//! Each value is `(next_u32 >> 8) / 2^23 - 1`, an exact `f32` in `[-1, 1)`.
//! Hash, generator and mapping are fixed so matrices are bit-identical on
//! every platform. Rows depend only on their own index, which means a
//! shorter matrix over the same input is a prefix of a longer one.

use alloc::string::String;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use crate::embedding::{MultiVector, QueryEmbedding};
use crate::error::{Error, Result};
use crate::eval::QueryEmbedder;

fn row_rng(input: &[u8], seed: u64, row: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((input.len() as u64).to_le_bytes());
    h.update(input);
    h.update((row as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[inline]
fn unit_value(bits: u32) -> f32 {
    (bits >> 8) as f32 / (1u32 << 23) as f32 - 1.0
}

/// Hash-seeded pseudorandom matrix for `input`; values lie in `[-1, 1)`.
pub fn mock_embed(input: &[u8], rows: usize, dims: usize, seed: u64) -> Result<MultiVector> {
    if rows == 0 || dims == 0 {
        return Err(Error::InvalidShape { rows, dims, len: 0 });
    }
    let mut data = alloc::vec::Vec::with_capacity(rows * dims);
    for r in 0..rows {
        let mut rng = row_rng(input, seed, r);
        data.extend((0..dims).map(|_| unit_value(rng.next_u32())));
    }
    MultiVector::new(rows, dims, data)
}

/// Mock embedding service: pages get a fixed row count, queries get one row
/// per whitespace-separated token unless `query_rows` overrides it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MockEmbedder {
    pub page_rows: usize,
    pub dims: usize,
    pub seed: u64,
    pub query_rows: Option<usize>,
}

impl MockEmbedder {
    pub fn new(page_rows: usize, dims: usize, seed: u64) -> Self {
        Self { page_rows, dims, seed, query_rows: None }
    }

    pub fn with_query_rows(mut self, rows: usize) -> Self {
        self.query_rows = Some(rows);
        self
    }

    pub fn embed_page(&self, image: &[u8]) -> Result<MultiVector> {
        mock_embed(image, self.page_rows, self.dims, self.seed)
    }

    pub fn embed_text(&self, text: &str) -> Result<MultiVector> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::InvalidQuery(String::from("query text is empty")));
        }
        let rows = self.query_rows.unwrap_or_else(|| text.split_whitespace().count());
        mock_embed(text.as_bytes(), rows, self.dims, self.seed)
    }
}

impl QueryEmbedder for MockEmbedder {
    fn embed_query(&self, query_id: &str, text: &str) -> Result<QueryEmbedding> {
        Ok(QueryEmbedding::new(query_id, self.embed_text(text)?))
    }
}
