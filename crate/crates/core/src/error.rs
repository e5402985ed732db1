use alloc::string::String;
use core::fmt;

use crate::embedding::PageRef;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the scoring, indexing and evaluation layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two vectors or matrices that must share a width do not.
    DimensionMismatch { expected: usize, found: usize },
    /// A page being upserted does not match the collection width.
    PageDimensionMismatch { page: PageRef, expected: usize, found: usize },
    /// `rows * dims` does not match the backing buffer, or a side is zero.
    InvalidShape { rows: usize, dims: usize, len: usize },
    /// Element at flat index `index` is NaN or infinite.
    NonFinite { index: usize },
    InvalidPageRef(&'static str),
    CollectionExists(String),
    CollectionNotFound(String),
    EmptyCollection,
    InvalidRequest(&'static str),
    /// Recall and AP are undefined without at least one relevant page.
    EmptyRelevantSet,
    InvalidQuery(String),
    Embedder(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::PageDimensionMismatch { page, expected, found } => {
                write!(f, "page {page} has dims {found}, collection expects {expected}")
            }
            Error::InvalidShape { rows, dims, len } => {
                write!(f, "invalid matrix shape {rows}x{dims} for {len} elements")
            }
            Error::NonFinite { index } => write!(f, "non-finite value at element {index}"),
            Error::InvalidPageRef(why) => write!(f, "invalid page reference: {why}"),
            Error::CollectionExists(name) => write!(f, "collection `{name}` already exists"),
            Error::CollectionNotFound(name) => write!(f, "collection `{name}` not found"),
            Error::EmptyCollection => f.write_str("collection is empty"),
            Error::InvalidRequest(why) => write!(f, "invalid search request: {why}"),
            Error::EmptyRelevantSet => f.write_str("relevant set is empty; recall is undefined"),
            Error::InvalidQuery(why) => write!(f, "invalid query: {why}"),
            Error::Embedder(why) => write!(f, "embedder failure: {why}"),
        }
    }
}

impl core::error::Error for Error {}
