//! File formats, ingestion, embedding-service client, HTTP API and CLI on top
//! of [`pagescan_core`].

pub mod bench_files;
pub mod cli;
pub mod client;
pub mod embed_server;
mod error;
pub mod format;
pub mod ingest;
pub mod report;
pub mod server;

pub use error::{Error, Result};
