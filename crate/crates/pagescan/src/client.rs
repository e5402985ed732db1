//! Embedding-service client and the embedder used by the CLI and server.
//!
//! Wire protocol:
//! - `POST {endpoint}/embed/image`, PNG body, `X-Volume-Id` and
//!   `X-Page-Number` headers.
//! - `POST {endpoint}/embed/text`, UTF-8 body.
//! - Both answer with `rows u32 | dims u32 | rows*dims f32`, little-endian.
//! - `GET {endpoint}/health` answers with the model id as plain text.

use std::collections::BTreeMap;
use std::time::Duration;

use futures::{StreamExt, TryStreamExt};
use pagescan_core::eval::{BenchmarkQuery, QueryEmbedder};
use pagescan_core::{MockEmbedder, MultiVector, PageEmbedding, QueryEmbedding};
use reqwest::StatusCode;

use crate::error::{Error, Result};
use crate::ingest::PageImage;

pub const VOLUME_HEADER: &str = "x-volume-id";
pub const PAGE_HEADER: &str = "x-page-number";

pub fn encode_matrix(m: &MultiVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + m.as_slice().len() * 4);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dims() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> std::result::Result<MultiVector, String> {
    if bytes.len() < 8 {
        return Err(format!("response of {} bytes is shorter than the 8-byte header", bytes.len()));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let dims = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = rows.checked_mul(dims).and_then(|n| n.checked_mul(4)).and_then(|n| n.checked_add(8));
    if expected != Some(bytes.len()) {
        return Err(format!("response of {} bytes does not hold a {rows}x{dims} matrix", bytes.len()));
    }
    let data = bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    MultiVector::new(rows, dims, data).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbedderConfig {
    pub endpoint: String,
    /// Expected model id; empty accepts whatever `/health` reports.
    pub model_id: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Extra attempts after a transient failure.
    pub retries: u32,
}

impl EmbedderConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            model_id: String::new(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            retries: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HttpEmbedder {
    config: EmbedderConfig,
    client: reqwest::Client,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

impl HttpEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::Embedder("max_in_flight must be at least 1".into()));
        }
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Embedder(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub async fn health(&self) -> Result<String> {
        let url = format!("{}/health", self.config.endpoint);
        let resp = self.client.get(&url).send().await.map_err(|e| Error::Embedder(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Embedder(format!("{url}: status {}", resp.status())));
        }
        let id = resp.text().await.map_err(|e| Error::Embedder(format!("{url}: {e}")))?.trim().to_owned();
        if !self.config.model_id.is_empty() && id != self.config.model_id {
            return Err(Error::Embedder(format!("service runs model `{id}`, expected `{}`", self.config.model_id)));
        }
        Ok(id)
    }

    async fn post_once(&self, path: &str, body: Vec<u8>, headers: &[(&str, String)]) -> std::result::Result<MultiVector, Failure> {
        let mut req = self.client.post(format!("{}{path}", self.config.endpoint)).body(body);
        for (k, v) in headers {
            req = req.header(*k, v);
        }
        let resp = req.send().await.map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(Failure::Fatal(format!("status {status}: {}", text.trim())));
        }
        let bytes = resp.bytes().await.map_err(|e| Failure::Transient(e.to_string()))?;
        decode_matrix(&bytes).map_err(|e| Failure::Fatal(format!("malformed response: {e}")))
    }

    async fn post(&self, path: &str, body: Vec<u8>, headers: &[(&str, String)], what: &str) -> Result<MultiVector> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body.clone(), headers).await {
                Ok(m) => return Ok(m),
                Err(Failure::Fatal(e)) => return Err(Error::Embedder(format!("{what}: {e}"))),
                Err(Failure::Transient(e)) if attempt >= self.config.retries => {
                    return Err(Error::Embedder(format!("{what}: {e} (after {} attempts)", attempt + 1)))
                }
                Err(Failure::Transient(e)) => {
                    tracing::warn!(target: "pagescan::client", "{what}: {e}; retrying");
                    tokio::time::sleep(Duration::from_millis(50 << attempt.min(6))).await;
                    attempt += 1;
                }
            }
        }
    }

    pub async fn embed_image(&self, image: &PageImage) -> Result<PageEmbedding> {
        let page = image.page();
        let headers = [(VOLUME_HEADER, page.volume_id().to_owned()), (PAGE_HEADER, page.page_number().to_string())];
        let m = self.post("/embed/image", image.png().to_vec(), &headers, &format!("page {page}")).await?;
        Ok(PageEmbedding::new(page.clone(), m))
    }

    pub async fn embed_text(&self, text: &str) -> Result<MultiVector> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Core(pagescan_core::Error::InvalidQuery("query text is empty".into())));
        }
        self.post("/embed/text", text.as_bytes().to_vec(), &[], "query").await
    }

    /// Embeds pages with up to `max_in_flight` requests outstanding; results
    /// come back in input order.
    pub async fn embed_pages(&self, images: &[PageImage]) -> Result<Vec<PageEmbedding>> {
        let out: Vec<PageEmbedding> = futures::stream::iter(images)
            .map(|img| self.embed_image(img))
            .buffered(self.config.max_in_flight)
            .try_collect()
            .await?;
        check_batch_dims(&out)?;
        Ok(out)
    }
}

fn check_batch_dims(batch: &[PageEmbedding]) -> Result<()> {
    let Some(first) = batch.first() else { return Ok(()) };
    let dims = first.embedding.dims();
    if let Some(bad) = batch.iter().find(|e| e.embedding.dims() != dims) {
        return Err(Error::Embedder(format!(
            "page {} returned dims {}, batch started with dims {dims}",
            bad.page,
            bad.embedding.dims()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum Embedder {
    Mock(MockEmbedder),
    Http(HttpEmbedder),
}

impl Embedder {
    pub fn model_id(&self) -> String {
        match self {
            Embedder::Mock(m) => mock_model_id(m),
            Embedder::Http(h) => h.config.model_id.clone(),
        }
    }

    pub async fn embed_pages(&self, images: &[PageImage]) -> Result<Vec<PageEmbedding>> {
        match self {
            Embedder::Mock(m) => images
                .iter()
                .map(|img| Ok(PageEmbedding::new(img.page().clone(), m.embed_page(img.png())?)))
                .collect(),
            Embedder::Http(h) => h.embed_pages(images).await,
        }
    }

    pub async fn embed_text(&self, text: &str) -> Result<MultiVector> {
        match self {
            Embedder::Mock(m) => Ok(m.embed_text(text)?),
            Embedder::Http(h) => h.embed_text(text).await,
        }
    }

    pub async fn embed_query(&self, query_id: &str, text: &str) -> Result<QueryEmbedding> {
        Ok(QueryEmbedding::new(query_id, self.embed_text(text).await?))
    }

    /// Embeds every query up front so a synchronous benchmark run can use
    /// them; failures are kept per query.
    pub async fn embed_queries(&self, queries: &[BenchmarkQuery]) -> PreEmbedded {
        let max = match self {
            Embedder::Mock(_) => 1,
            Embedder::Http(h) => h.config.max_in_flight,
        };
        let jobs: Vec<(String, String)> = queries.iter().map(|q| (q.id.clone(), q.text.clone())).collect();
        let results: Vec<_> = futures::stream::iter(jobs)
            .map(|(id, text)| async move {
                let embedded = self.embed_query(&id, &text).await.map_err(|e| e.to_string());
                (id, embedded)
            })
            .buffered(max)
            .collect()
            .await;
        PreEmbedded(results.into_iter().collect())
    }
}

pub fn mock_model_id(m: &MockEmbedder) -> String {
    format!("mock-{}x{}-seed{}", m.page_rows, m.dims, m.seed)
}

/// Query embeddings (or the reason one could not be made) keyed by query id.
#[derive(Clone, Debug, Default)]
pub struct PreEmbedded(pub BTreeMap<String, std::result::Result<QueryEmbedding, String>>);

impl QueryEmbedder for PreEmbedded {
    fn embed_query(&self, query_id: &str, _text: &str) -> pagescan_core::Result<QueryEmbedding> {
        match self.0.get(query_id) {
            Some(Ok(q)) => Ok(q.clone()),
            Some(Err(e)) => Err(pagescan_core::Error::Embedder(e.clone())),
            None => Err(pagescan_core::Error::Embedder(format!("no embedding for query {query_id}"))),
        }
    }
}
