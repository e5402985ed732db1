use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::benchmark::{BenchmarkQuery, Category, GroundTruth};
use super::metrics::QueryMetrics;
use crate::embedding::{PageRef, QueryEmbedding};
use crate::error::{Error, Result};
use crate::index::{validate_cutoffs, Collection, SearchRequest, DEFAULT_CANDIDATES, DEFAULT_K};
use crate::metric::Metric;

/// Turns benchmark query text into a query embedding.
pub trait QueryEmbedder {
    fn embed_query(&self, query_id: &str, text: &str) -> Result<QueryEmbedding>;
}

impl<T: QueryEmbedder + ?Sized> QueryEmbedder for &T {
    fn embed_query(&self, query_id: &str, text: &str) -> Result<QueryEmbedding> {
        (**self).embed_query(query_id, text)
    }
}

/// Query embeddings computed ahead of time, looked up by query id.
impl QueryEmbedder for BTreeMap<String, QueryEmbedding> {
    fn embed_query(&self, query_id: &str, _text: &str) -> Result<QueryEmbedding> {
        self.get(query_id).cloned().ok_or_else(|| Error::Embedder(format!("no embedding for query {query_id}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub k: usize,
    pub candidates: usize,
    /// Only queries in these categories; `None` runs everything.
    pub subset: Option<Vec<Category>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { k: DEFAULT_K, candidates: DEFAULT_CANDIDATES, subset: None }
    }
}

impl RunOptions {
    pub fn with_subset(mut self, categories: &[Category]) -> Self {
        self.subset = Some(categories.to_vec());
        self
    }

    fn selects(&self, q: &BenchmarkQuery) -> bool {
        self.subset.as_ref().is_none_or(|s| s.contains(&q.category))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportMetadata {
    pub collection: String,
    pub metric: Metric,
    pub k: usize,
    pub candidates: usize,
    pub subset: Option<Vec<Category>>,
    /// Filled in by the caller; the core has no clock.
    pub timestamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub query_id: String,
    pub category: Category,
    pub retrieved: Vec<PageRef>,
    pub relevant_count: usize,
    pub metrics: QueryMetrics,
}

/// Arithmetic means over a group of queries.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Aggregate {
    pub queries: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub f1_at_k: f64,
    pub average_precision: f64,
    pub mean_reciprocal_rank: f64,
}

impl Aggregate {
    pub fn from_metrics<'a, I: IntoIterator<Item = &'a QueryMetrics>>(metrics: I) -> Self {
        let mut sums = [0.0f64; 5];
        let mut n = 0usize;
        for m in metrics {
            for (s, v) in sums.iter_mut().zip(m.values()) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return Self::default();
        }
        let mean = |i: usize| sums[i] / n as f64;
        Self {
            queries: n,
            precision_at_k: mean(0),
            recall_at_k: mean(1),
            f1_at_k: mean(2),
            average_precision: mean(3),
            mean_reciprocal_rank: mean(4),
        }
    }

    /// P, R, F1, AP, MRR.
    pub fn values(&self) -> [f64; 5] {
        [self.precision_at_k, self.recall_at_k, self.f1_at_k, self.average_precision, self.mean_reciprocal_rank]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub metadata: ReportMetadata,
    /// In benchmark order.
    pub per_query: Vec<QueryOutcome>,
    pub per_category: BTreeMap<Category, Aggregate>,
    pub overall: Aggregate,
    /// `(query_id, reason)` for queries that could not be evaluated.
    pub failures: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    fn aggregate(metadata: ReportMetadata, per_query: Vec<QueryOutcome>, failures: Vec<(String, String)>, mut warnings: Vec<String>) -> Self {
        if per_query.is_empty() && failures.is_empty() {
            warnings.push("no benchmark query matched the subset filter".to_string());
        }
        let mut by_category: BTreeMap<Category, Vec<QueryMetrics>> = BTreeMap::new();
        for q in &per_query {
            by_category.entry(q.category).or_default().push(q.metrics);
        }
        let per_category = by_category.into_iter().map(|(c, m)| (c, Aggregate::from_metrics(&m))).collect();
        let overall = Aggregate::from_metrics(per_query.iter().map(|q| &q.metrics));
        Self { metadata, per_query, per_category, overall, failures, warnings }
    }

    pub fn query(&self, query_id: &str) -> Option<&QueryOutcome> {
        self.per_query.iter().find(|q| q.query_id == query_id)
    }

    pub fn query_ids(&self) -> Vec<&str> {
        self.per_query.iter().map(|q| q.query_id.as_str()).collect()
    }
}

fn selected<'a>(queries: &'a [BenchmarkQuery], options: &'a RunOptions) -> impl Iterator<Item = &'a BenchmarkQuery> + 'a {
    queries.iter().filter(move |q| options.selects(q))
}

/// Embeds, searches and scores every selected query against one collection.
///
/// Per-query problems (no relevant pages, embedder or search errors) are
/// recorded in `failures` and the run continues. Only invalid options fail
/// the whole call.
pub fn run_benchmark<E: QueryEmbedder>(
    collection: &Collection,
    queries: &[BenchmarkQuery],
    ground_truth: &GroundTruth,
    options: &RunOptions,
    embedder: &E,
) -> Result<MetricsReport> {
    validate_cutoffs(options.k, options.candidates)?;
    let relevant = ground_truth.relevant_by_query();
    let mut per_query = Vec::new();
    let mut failures = Vec::new();
    for q in selected(queries, options) {
        let outcome = (|| {
            let rel = relevant.get(q.id.as_str()).ok_or(Error::EmptyRelevantSet)?;
            let query = embedder.embed_query(&q.id, &q.text)?;
            let request = SearchRequest::new(query).with_k(options.k).with_candidates(options.candidates);
            let retrieved = collection.search(&request)?.pages();
            let metrics = QueryMetrics::compute(&retrieved, rel, options.k)?;
            Ok::<_, Error>(QueryOutcome {
                query_id: q.id.clone(),
                category: q.category,
                retrieved,
                relevant_count: rel.len(),
                metrics,
            })
        })();
        match outcome {
            Ok(o) => per_query.push(o),
            Err(e) => failures.push((q.id.clone(), e.to_string())),
        }
    }
    let metadata = ReportMetadata {
        collection: collection.name().into(),
        metric: collection.metric(),
        k: options.k,
        candidates: options.candidates,
        subset: options.subset.clone(),
        timestamp: None,
    };
    Ok(MetricsReport::aggregate(metadata, per_query, failures, Vec::new()))
}

/// A page absent from the query's judgments that scored above the threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct TailCandidate {
    pub page: PageRef,
    pub rank: usize,
    pub raw_score: f64,
    pub normalized_score: f64,
    /// Whether the page already sits inside the top-k cutoff.
    pub in_top_k: bool,
    /// Page distance to the closest relevant page of the same volume.
    pub nearest_relevant_distance: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryTail {
    pub query_id: String,
    pub category: Category,
    /// Normalized score at each rank, starting from rank 1.
    pub curve: Vec<f64>,
    /// 1-based ranks at which ground-truth relevant pages appear.
    pub relevant_ranks: Vec<usize>,
    pub candidates: Vec<TailCandidate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailReport {
    pub collection: String,
    pub metric: Metric,
    pub threshold: f64,
    pub k: usize,
    pub per_query: Vec<QueryTail>,
    pub failures: Vec<(String, String)>,
}

impl TailReport {
    /// Queries with at least one relevant-but-unlabeled candidate.
    pub fn affected_queries(&self) -> usize {
        self.per_query.iter().filter(|q| !q.candidates.is_empty()).count()
    }
}

/// Ranks the whole collection for every query and lists unjudged pages whose
/// normalized score exceeds `threshold`.
///
/// Pages carrying any judgment for the query (relevant or not) are never
/// candidates. `threshold` must be positive and finite; values above 1 are
/// accepted and simply select nothing under cosine.
pub fn unbounded_analysis<E: QueryEmbedder>(
    collection: &Collection,
    queries: &[BenchmarkQuery],
    ground_truth: &GroundTruth,
    threshold: f64,
    options: &RunOptions,
    embedder: &E,
) -> Result<TailReport> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::InvalidRequest("threshold must be positive and finite"));
    }
    validate_cutoffs(options.k, options.candidates)?;
    let mut judged: BTreeMap<&str, BTreeSet<&PageRef>> = BTreeMap::new();
    for e in ground_truth.entries() {
        judged.entry(e.query_id.as_str()).or_default().insert(&e.page);
    }
    let relevant = ground_truth.relevant_by_query();
    let empty = BTreeSet::new();

    let mut per_query = Vec::new();
    let mut failures = Vec::new();
    for q in selected(queries, options) {
        let ranked = match embedder.embed_query(&q.id, &q.text).and_then(|e| collection.search_all(&e, false)) {
            Ok(r) => r,
            Err(e) => {
                failures.push((q.id.clone(), e.to_string()));
                continue;
            }
        };
        let labeled = judged.get(q.id.as_str()).unwrap_or(&empty);
        let rel = relevant.get(q.id.as_str());
        let candidates = ranked
            .entries
            .iter()
            .filter(|e| e.normalized_score > threshold && !labeled.contains(&e.page))
            .map(|e| TailCandidate {
                page: e.page.clone(),
                rank: e.rank,
                raw_score: e.raw_score,
                normalized_score: e.normalized_score,
                in_top_k: e.rank <= options.k,
                nearest_relevant_distance: rel.and_then(|r| r.iter().filter_map(|p| p.distance(&e.page)).min()),
            })
            .collect();
        let relevant_ranks = ranked
            .entries
            .iter()
            .filter(|e| rel.is_some_and(|r| r.contains(&e.page)))
            .map(|e| e.rank)
            .collect();
        per_query.push(QueryTail {
            query_id: q.id.clone(),
            category: q.category,
            curve: ranked.entries.iter().map(|e| e.normalized_score).collect(),
            relevant_ranks,
            candidates,
        });
    }
    Ok(TailReport {
        collection: collection.name().into(),
        metric: collection.metric(),
        threshold,
        k: options.k,
        per_query,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::PageEmbedding;
    use crate::eval::GroundTruthEntry;
    use crate::mock::MockEmbedder;

    fn page(v: &str, n: u32) -> PageRef {
        PageRef::new(v, n).unwrap()
    }

    const TEXTS: [&str; 4] = [
        "show the process state diagram",
        "what conditions lead to a deadlock",
        "tell me about the Bellman-Ford algorithm",
        "explain eventual consistency",
    ];

    /// One page per query whose mock input is the query text, plus filler pages.
    fn setup(metric: Metric) -> (Collection, Vec<BenchmarkQuery>, GroundTruth, MockEmbedder) {
        let emb = MockEmbedder::new(12, 16, 5);
        let cats = [Category::Visual, Category::Textual, Category::MultiPage, Category::Conceptual];
        let mut queries = Vec::new();
        let mut gt = GroundTruth::default();
        let mut pages = Vec::new();
        for (i, (text, cat)) in TEXTS.iter().zip(cats).enumerate() {
            let id = format!("{}-{}", cat.prefix(), i + 1);
            let p = page("book", 10 * (i as u32 + 1));
            pages.push(PageEmbedding::new(p.clone(), emb.embed_page(text.as_bytes()).unwrap()));
            gt.push(GroundTruthEntry { query_id: id.clone(), page: p, relevant: true });
            queries.push(BenchmarkQuery::new(id, cat, *text).unwrap());
        }
        for n in 1..=30 {
            pages.push(PageEmbedding::new(page("filler", n), emb.embed_page(format!("filler {n}").as_bytes()).unwrap()));
        }
        let mut c = Collection::new("c", metric, 16).unwrap();
        c.upsert(pages).unwrap();
        (c, queries, gt, emb)
    }

    #[test]
    fn self_match_corpus_metrics() {
        for metric in Metric::ALL {
            let (c, queries, gt, emb) = setup(metric);
            let report = run_benchmark(&c, &queries, &gt, &RunOptions::default(), &emb).unwrap();
            assert!(report.failures.is_empty());
            assert_eq!(report.overall.queries, 4);
            assert_eq!(report.overall.precision_at_k, 0.2, "{metric}");
            assert_eq!(report.overall.recall_at_k, 1.0, "{metric}");
            assert_eq!(report.overall.mean_reciprocal_rank, 1.0, "{metric}");
            assert_eq!(report.per_category.len(), 4);
        }
    }

    #[test]
    fn overall_is_mean_of_per_query() {
        let (c, queries, gt, _) = setup(Metric::Cosine);
        // a different seed breaks the self-match and yields uneven metrics
        let emb = MockEmbedder::new(12, 16, 99);
        let report = run_benchmark(&c, &queries, &gt, &RunOptions::default(), &emb).unwrap();
        let n = report.per_query.len() as f64;
        let mrr: f64 = report.per_query.iter().map(|q| q.metrics.reciprocal_rank).sum::<f64>() / n;
        assert!((mrr - report.overall.mean_reciprocal_rank).abs() <= 1e-9);
    }

    #[test]
    fn subset_filter() {
        let (c, queries, gt, emb) = setup(Metric::Cosine);
        let opts = RunOptions::default().with_subset(&[Category::MultiPage]);
        let report = run_benchmark(&c, &queries, &gt, &opts, &emb).unwrap();
        assert_eq!(report.query_ids(), ["MP-3"]);

        let opts = RunOptions::default().with_subset(&[Category::Tabular]);
        let report = run_benchmark(&c, &queries, &gt, &opts, &emb).unwrap();
        assert!(report.per_query.is_empty());
        assert_eq!(report.overall.queries, 0);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn failures_are_recorded_and_run_continues() {
        let (c, mut queries, gt, emb) = setup(Metric::Cosine);
        queries.push(BenchmarkQuery::new("NU-9", Category::Numerical, "no ground truth for me").unwrap());
        let report = run_benchmark(&c, &queries, &gt, &RunOptions::default(), &emb).unwrap();
        assert_eq!(report.per_query.len(), 4);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].0, "NU-9");

        let wrong_dims = MockEmbedder::new(12, 8, 5);
        let report = run_benchmark(&c, &queries, &gt, &RunOptions::default(), &wrong_dims).unwrap();
        assert_eq!(report.failures.len(), 5);
    }

    #[test]
    fn bad_options_fail() {
        let (c, queries, gt, emb) = setup(Metric::Cosine);
        let opts = RunOptions { k: 5, candidates: 3, subset: None };
        assert!(run_benchmark(&c, &queries, &gt, &opts, &emb).is_err());
        assert!(unbounded_analysis(&c, &queries, &gt, 0.0, &RunOptions::default(), &emb).is_err());
        assert!(unbounded_analysis(&c, &queries, &gt, f64::NAN, &RunOptions::default(), &emb).is_err());
    }

    #[test]
    fn tail_detects_planted_duplicate() {
        let (mut c, queries, gt, emb) = setup(Metric::Cosine);
        let twin = c.get(&page("book", 20)).unwrap().clone();
        c.upsert(alloc::vec![PageEmbedding::new(page("book", 21), twin)]).unwrap();
        let tail = unbounded_analysis(&c, &queries, &gt, 0.85, &RunOptions::default(), &emb).unwrap();
        assert_eq!(tail.affected_queries(), 1);
        let q = &tail.per_query[1];
        assert_eq!(q.query_id, "TX-2");
        assert_eq!(q.candidates.len(), 1);
        let cand = &q.candidates[0];
        assert_eq!(cand.page, page("book", 21));
        assert_eq!(cand.nearest_relevant_distance, Some(1));
        assert!(cand.in_top_k);
        assert_eq!(q.curve.len(), c.len());
        assert_eq!(q.relevant_ranks, [1]);
    }

    #[test]
    fn tail_threshold_above_cosine_ceiling_selects_nothing() {
        let (c, queries, gt, emb) = setup(Metric::Cosine);
        let tail = unbounded_analysis(&c, &queries, &gt, 1.01, &RunOptions::default(), &emb).unwrap();
        assert!(tail.per_query.iter().all(|q| q.candidates.is_empty()));
        assert_eq!(tail.per_query.len(), 4);
    }

    #[test]
    fn precomputed_embeddings() {
        let (c, queries, gt, emb) = setup(Metric::DotProduct);
        let pre: BTreeMap<String, QueryEmbedding> =
            queries.iter().map(|q| (q.id.clone(), emb.embed_query(&q.id, &q.text).unwrap())).collect();
        let a = run_benchmark(&c, &queries, &gt, &RunOptions::default(), &pre).unwrap();
        let b = run_benchmark(&c, &queries, &gt, &RunOptions::default(), &emb).unwrap();
        assert_eq!(a, b);
    }
}
