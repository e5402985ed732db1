use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// A `rows x dims` row-major matrix of finite `f32`: one page or one query.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiVector {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
}

impl MultiVector {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || dims == 0 || rows.checked_mul(dims) != Some(data.len()) {
            return Err(Error::InvalidShape { rows, dims, len: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, dims, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dims = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dims, data)
    }

    pub fn zeros(rows: usize, dims: usize) -> Result<Self> {
        Self::new(rows, dims, alloc::vec![0.0; rows.saturating_mul(dims)])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Panics if `i >= rows`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter_rows(&self) -> core::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dims)
    }

    /// Every element multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.rows, self.dims, self.data.iter().map(|v| v * factor).collect())
    }

    /// Equality on the raw bit patterns, distinguishing `0.0` from `-0.0`.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.dims == other.dims
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Identifies a page: the volume it came from and its 1-based page number.
///
/// Ordering is lexicographic on `(volume_id, page_number)`; this is the
/// tie-break order for equal scores.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PageRef {
    volume_id: String,
    page_number: u32,
}

impl PageRef {
    pub fn new(volume_id: impl Into<String>, page_number: u32) -> Result<Self> {
        let volume_id = volume_id.into();
        if volume_id.is_empty() {
            return Err(Error::InvalidPageRef("volume id is empty"));
        }
        if page_number == 0 {
            return Err(Error::InvalidPageRef("page numbers start at 1"));
        }
        Ok(Self { volume_id, page_number })
    }

    pub fn volume_id(&self) -> &str {
        &self.volume_id
    }

    pub fn page_number(&self) -> u32 {
        self.page_number
    }

    /// Page distance within one volume; `None` across volumes.
    pub fn distance(&self, other: &PageRef) -> Option<u32> {
        (self.volume_id == other.volume_id).then(|| self.page_number.abs_diff(other.page_number))
    }
}

impl fmt::Display for PageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.volume_id, self.page_number)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageEmbedding {
    pub page: PageRef,
    pub embedding: MultiVector,
}

impl PageEmbedding {
    pub fn new(page: PageRef, embedding: MultiVector) -> Self {
        Self { page, embedding }
    }
}

/// One row per query token.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEmbedding {
    pub query_id: String,
    pub embedding: MultiVector,
}

impl QueryEmbedding {
    pub fn new(query_id: impl Into<String>, embedding: MultiVector) -> Self {
        Self { query_id: query_id.into(), embedding }
    }
}
