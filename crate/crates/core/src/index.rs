//! Named page collections with exact top-k MaxSim search.
//!
//! Every search scores every page. Candidates are ordered by raw score
//! (descending) with ties broken by ascending [`PageRef`]; the top
//! `candidates` are de-duplicated by page identity and the first `k`
//! survivors are returned.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::embedding::{MultiVector, PageEmbedding, PageRef, QueryEmbedding};
use crate::error::{Error, Result};
use crate::maxsim::{normalized_score, PreparedQuery, ScoreExplanation};
use crate::metric::Metric;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_CANDIDATES: usize = 25;

#[derive(Clone, Debug)]
struct StoredPage {
    page: PageRef,
    embedding: Arc<MultiVector>,
}

/// Pages sharing one width, searched under one metric.
///
/// Matrices are reference counted, so cloning a collection is cheap and
/// yields an independent snapshot.
#[derive(Clone, Debug)]
pub struct Collection {
    name: String,
    metric: Metric,
    dims: usize,
    pages: Vec<StoredPage>,
    slots: BTreeMap<PageRef, usize>,
}

impl Collection {
    pub fn new(name: impl Into<String>, metric: Metric, dims: usize) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidRequest("collection name is empty"));
        }
        if dims == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        Ok(Self { name, metric, dims, pages: Vec::new(), slots: BTreeMap::new() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// Pages in insertion order.
    pub fn pages(&self) -> impl ExactSizeIterator<Item = (&PageRef, &MultiVector)> + '_ {
        self.pages.iter().map(|p| (&p.page, &*p.embedding))
    }

    pub fn get(&self, page: &PageRef) -> Option<&MultiVector> {
        self.slots.get(page).map(|&i| &*self.pages[i].embedding)
    }

    pub fn contains(&self, page: &PageRef) -> bool {
        self.slots.contains_key(page)
    }

    /// Inserts or replaces pages; returns how many entries were applied.
    ///
    /// The whole batch is validated before anything is written, so a failed
    /// call leaves the collection untouched. Existing pages keep their
    /// insertion position when replaced.
    pub fn upsert(&mut self, entries: Vec<PageEmbedding>) -> Result<usize> {
        for e in &entries {
            if e.embedding.dims() != self.dims {
                return Err(Error::PageDimensionMismatch {
                    page: e.page.clone(),
                    expected: self.dims,
                    found: e.embedding.dims(),
                });
            }
        }
        let count = entries.len();
        for PageEmbedding { page, embedding } in entries {
            let embedding = Arc::new(embedding);
            match self.slots.get(&page) {
                Some(&i) => self.pages[i].embedding = embedding,
                None => {
                    self.slots.insert(page.clone(), self.pages.len());
                    self.pages.push(StoredPage { page, embedding });
                }
            }
        }
        Ok(count)
    }

    fn check_query(&self, query: &QueryEmbedding) -> Result<()> {
        if self.pages.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if query.embedding.dims() != self.dims {
            return Err(Error::DimensionMismatch { expected: self.dims, found: query.embedding.dims() });
        }
        Ok(())
    }

    /// Raw MaxSim of every page, in insertion order.
    fn score_all(&self, query: &PreparedQuery) -> Vec<f64> {
        let metric = self.metric;
        let score = |p: &StoredPage| query.score(&p.embedding, metric);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.pages.par_iter().map(score).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.pages.iter().map(score).collect()
        }
    }

    /// Page indices sorted by descending score, then ascending page ref.
    fn ranked_indices(&self, scores: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_unstable_by(|&a, &b| self.rank_cmp(scores, a, b));
        order
    }

    fn rank_cmp(&self, scores: &[f64], a: usize, b: usize) -> Ordering {
        scores[b].total_cmp(&scores[a]).then_with(|| self.pages[a].page.cmp(&self.pages[b].page))
    }

    fn build_result(&self, query: &PreparedQuery, scores: &[f64], picked: &[usize], explain: bool) -> RankedResult {
        let entries = picked
            .iter()
            .enumerate()
            .map(|(i, &idx)| {
                let p = &self.pages[idx];
                let explanation =
                    explain.then(|| query.explain(&p.embedding, self.metric));
                RankedEntry {
                    page: p.page.clone(),
                    raw_score: scores[idx],
                    normalized_score: normalized_score(scores[idx], query.rows()),
                    rank: i + 1,
                    explanation,
                }
            })
            .collect();
        RankedResult { entries }
    }

    /// Exhaustive search: top `candidates` by score, de-duplicated, cut to `k`.
    pub fn search(&self, request: &SearchRequest) -> Result<RankedResult> {
        request.validate()?;
        self.check_query(&request.query)?;
        let query = PreparedQuery::new(&request.query.embedding);
        let scores = self.score_all(&query);
        let mut order = self.ranked_indices(&scores);
        order.truncate(request.candidates);
        let mut seen = BTreeSet::new();
        let picked: Vec<usize> =
            order.into_iter().filter(|&i| seen.insert(&self.pages[i].page)).take(request.k).collect();
        Ok(self.build_result(&query, &scores, &picked, request.explain))
    }

    /// Ranks every page in the collection.
    pub fn search_all(&self, query: &QueryEmbedding, explain: bool) -> Result<RankedResult> {
        self.check_query(query)?;
        let query = PreparedQuery::new(&query.embedding);
        let scores = self.score_all(&query);
        let order = self.ranked_indices(&scores);
        Ok(self.build_result(&query, &scores, &order, explain))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchRequest {
    pub query: QueryEmbedding,
    /// Results returned after de-duplication.
    pub k: usize,
    /// Initial fetch size before de-duplication.
    pub candidates: usize,
    pub explain: bool,
}

impl SearchRequest {
    pub fn new(query: QueryEmbedding) -> Self {
        Self { query, k: DEFAULT_K, candidates: DEFAULT_CANDIDATES, explain: false }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_candidates(mut self, candidates: usize) -> Self {
        self.candidates = candidates;
        self
    }

    pub fn with_explain(mut self, explain: bool) -> Self {
        self.explain = explain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_cutoffs(self.k, self.candidates)
    }
}

pub fn validate_cutoffs(k: usize, candidates: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidRequest("k must be at least 1"));
    }
    if k > candidates {
        return Err(Error::InvalidRequest("k exceeds candidates"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedEntry {
    pub page: PageRef,
    pub raw_score: f64,
    pub normalized_score: f64,
    /// 1-based.
    pub rank: usize,
    pub explanation: Option<ScoreExplanation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
}

impl RankedResult {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pages(&self) -> Vec<PageRef> {
        self.entries.iter().map(|e| e.page.clone()).collect()
    }
}

/// Registry of collections by name.
///
/// Collections are held behind `Arc`: readers take a snapshot with
/// [`Catalog::snapshot`] while [`Catalog::upsert`] copies on write, so a
/// search never observes a half-applied batch.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    collections: BTreeMap<String, Arc<Collection>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_collection(&mut self, name: &str, metric: Metric, dims: usize) -> Result<Arc<Collection>> {
        if self.collections.contains_key(name) {
            return Err(Error::CollectionExists(name.into()));
        }
        let collection = Arc::new(Collection::new(name, metric, dims)?);
        self.collections.insert(name.into(), collection.clone());
        Ok(collection)
    }

    /// Registers an already built collection (e.g. one loaded from disk).
    pub fn insert(&mut self, collection: Collection) -> Result<Arc<Collection>> {
        if self.collections.contains_key(collection.name()) {
            return Err(Error::CollectionExists(collection.name().into()));
        }
        let collection = Arc::new(collection);
        self.collections.insert(collection.name().into(), collection.clone());
        Ok(collection)
    }

    pub fn snapshot(&self, name: &str) -> Result<Arc<Collection>> {
        self.collections.get(name).cloned().ok_or_else(|| Error::CollectionNotFound(name.into()))
    }

    pub fn upsert(&mut self, name: &str, entries: Vec<PageEmbedding>) -> Result<usize> {
        let slot = self.collections.get_mut(name).ok_or_else(|| Error::CollectionNotFound(name.into()))?;
        Arc::make_mut(slot).upsert(entries)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Collection>> + '_ {
        self.collections.values()
    }

    pub fn len(&self) -> usize {
        self.collections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.collections.is_empty()
    }
}
