//! Text and JSON renderings of benchmark and tail reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pagescan_core::eval::{Aggregate, Category, MetricsReport, QueryMetrics, TailReport};
use pagescan_core::Metric;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row labels of the comparison tables, in order.
pub const METRIC_ROWS: [&str; 5] = ["Prec@5", "Recall@5", "F1@5", "AP", "MRR"];

pub fn metric_column(metric: Metric) -> &'static str {
    match metric {
        Metric::Cosine => "Cosine",
        Metric::DotProduct => "Dot",
        Metric::Euclidean => "Euclidean",
        Metric::Manhattan => "Manh",
    }
}

fn subset_label(subset: &Option<Vec<Category>>) -> String {
    match subset {
        None => "all".into(),
        Some(c) => c.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(","),
    }
}

/// Metadata block, per-query table, per-category table, overall table.
pub fn render_text(report: &MetricsReport) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "# retrieval report");
    let _ = writeln!(out, "collection\t{}", m.collection);
    let _ = writeln!(out, "metric\t{}", m.metric);
    let _ = writeln!(out, "k\t{}", m.k);
    let _ = writeln!(out, "candidates\t{}", m.candidates);
    let _ = writeln!(out, "subset\t{}", subset_label(&m.subset));
    let _ = writeln!(out, "timestamp\t{}", m.timestamp.as_deref().unwrap_or("-"));
    let _ = writeln!(out, "queries\t{}", report.per_query.len());
    let _ = writeln!(out, "failures\t{}", report.failures.len());
    for w in &report.warnings {
        let _ = writeln!(out, "warning\t{w}");
    }

    let k = m.k;
    let _ = writeln!(out, "\n## per query");
    let _ = writeln!(out, "query\tcategory\tP@{k}\tR@{k}\tF1@{k}\tAP@{k}\tRR\trelevant\tretrieved");
    for q in &report.per_query {
        let v = q.metrics.values();
        let retrieved: Vec<String> = q.retrieved.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
            q.query_id,
            q.category.as_str(),
            v[0],
            v[1],
            v[2],
            v[3],
            v[4],
            q.relevant_count,
            retrieved.join(",")
        );
    }
    for (id, reason) in &report.failures {
        let _ = writeln!(out, "{id}\tFAILED\t{reason}");
    }

    let _ = writeln!(out, "\n## per category");
    let _ = writeln!(out, "category\tqueries\tP@{k}\tR@{k}\tF1@{k}\tAP@{k}\tMRR");
    for (c, a) in &report.per_category {
        let _ = writeln!(out, "{}\t{}\t{}", c.as_str(), a.queries, aggregate_cells(a));
    }

    let _ = writeln!(out, "\n## overall");
    let _ = writeln!(out, "queries\tP@{k}\tR@{k}\tF1@{k}\tAP@{k}\tMRR");
    let _ = writeln!(out, "{}\t{}", report.overall.queries, aggregate_cells(&report.overall));
    out
}

fn aggregate_cells(a: &Aggregate) -> String {
    a.values().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("\t")
}

/// One table with a row per measure and a column per report, e.g. one
/// column per distance function over the same query set.
///
/// `category` selects a per-category aggregate; a report lacking it shows `-`.
pub fn comparison_table(reports: &[&MetricsReport], category: Option<Category>) -> String {
    let mut out = String::new();
    let header: Vec<&str> = reports.iter().map(|r| metric_column(r.metadata.metric)).collect();
    let _ = writeln!(out, "| {:<9} | {} |", "Metric", header.iter().map(|h| format!("{h:>9}")).collect::<Vec<_>>().join(" | "));
    let _ = writeln!(out, "|{}|", ["-----------"].repeat(reports.len() + 1).join("|"));
    for (row, label) in METRIC_ROWS.iter().enumerate() {
        let cells: Vec<String> = reports
            .iter()
            .map(|r| {
                let agg = match category {
                    None => Some(&r.overall),
                    Some(c) => r.per_category.get(&c),
                };
                agg.map_or_else(|| format!("{:>9}", "-"), |a| format!("{:>9.3}", a.values()[row]))
            })
            .collect();
        let _ = writeln!(out, "| {label:<9} | {} |", cells.join(" | "));
    }
    out
}

/// Overall comparison followed by one comparison table per category present
/// in any report.
pub fn render_comparison(title: &str, reports: &[&MetricsReport]) -> String {
    let mut out = format!("# {title}\n\n");
    let n = reports.first().map_or(0, |r| r.overall.queries);
    let _ = writeln!(out, "## overall ({n} queries)\n");
    out.push_str(&comparison_table(reports, None));
    let mut categories: Vec<Category> = reports.iter().flat_map(|r| r.per_category.keys().copied()).collect();
    categories.sort();
    categories.dedup();
    for c in categories {
        let n = reports.iter().find_map(|r| r.per_category.get(&c)).map_or(0, |a| a.queries);
        let _ = writeln!(out, "\n## {} ({n} queries)\n", c.label());
        out.push_str(&comparison_table(reports, Some(c)));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub k: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub f1_at_k: f64,
    pub average_precision: f64,
    pub reciprocal_rank: f64,
}

impl From<&QueryMetrics> for MetricsDoc {
    fn from(m: &QueryMetrics) -> Self {
        Self {
            k: m.k,
            precision_at_k: m.precision_at_k,
            recall_at_k: m.recall_at_k,
            f1_at_k: m.f1_at_k,
            average_precision: m.average_precision,
            reciprocal_rank: m.reciprocal_rank,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateDoc {
    pub queries: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub f1_at_k: f64,
    pub average_precision: f64,
    pub mean_reciprocal_rank: f64,
}

impl From<&Aggregate> for AggregateDoc {
    fn from(a: &Aggregate) -> Self {
        Self {
            queries: a.queries,
            precision_at_k: a.precision_at_k,
            recall_at_k: a.recall_at_k,
            f1_at_k: a.f1_at_k,
            average_precision: a.average_precision,
            mean_reciprocal_rank: a.mean_reciprocal_rank,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageDoc {
    pub volume_id: String,
    pub page_number: u32,
}

impl From<&pagescan_core::PageRef> for PageDoc {
    fn from(p: &pagescan_core::PageRef) -> Self {
        Self { volume_id: p.volume_id().into(), page_number: p.page_number() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRowDoc {
    pub query_id: String,
    pub category: String,
    pub relevant_count: usize,
    pub retrieved: Vec<PageDoc>,
    pub metrics: MetricsDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureDoc {
    pub query_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadataDoc {
    pub collection: String,
    pub metric: String,
    pub k: usize,
    pub candidates: usize,
    pub subset: Option<Vec<String>>,
    pub timestamp: Option<String>,
    /// AP is truncated at k and normalized by min(|relevant|, k).
    pub average_precision: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub metadata: ReportMetadataDoc,
    pub per_query: Vec<QueryRowDoc>,
    pub per_category: BTreeMap<String, AggregateDoc>,
    pub overall: AggregateDoc,
    pub failures: Vec<FailureDoc>,
    pub warnings: Vec<String>,
}

impl From<&MetricsReport> for ReportDoc {
    fn from(r: &MetricsReport) -> Self {
        let m = &r.metadata;
        Self {
            metadata: ReportMetadataDoc {
                collection: m.collection.clone(),
                metric: m.metric.as_str().into(),
                k: m.k,
                candidates: m.candidates,
                subset: m.subset.as_ref().map(|s| s.iter().map(|c| c.as_str().into()).collect()),
                timestamp: m.timestamp.clone(),
                average_precision: format!("AP@{}", m.k),
            },
            per_query: r
                .per_query
                .iter()
                .map(|q| QueryRowDoc {
                    query_id: q.query_id.clone(),
                    category: q.category.as_str().into(),
                    relevant_count: q.relevant_count,
                    retrieved: q.retrieved.iter().map(PageDoc::from).collect(),
                    metrics: (&q.metrics).into(),
                })
                .collect(),
            per_category: r.per_category.iter().map(|(c, a)| (c.as_str().into(), a.into())).collect(),
            overall: (&r.overall).into(),
            failures: r.failures.iter().map(|(q, e)| FailureDoc { query_id: q.clone(), reason: e.clone() }).collect(),
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCandidateDoc {
    pub query_id: String,
    pub page: PageDoc,
    pub rank: usize,
    pub raw_score: f64,
    pub normalized_score: f64,
    pub in_top_k: bool,
    pub nearest_relevant_distance: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailQueryDoc {
    pub query_id: String,
    pub category: String,
    pub relevant_ranks: Vec<usize>,
    pub candidates: usize,
    pub top_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailDoc {
    pub collection: String,
    pub metric: String,
    pub threshold: f64,
    pub k: usize,
    pub affected_queries: usize,
    pub queries: Vec<TailQueryDoc>,
    pub candidates: Vec<TailCandidateDoc>,
    pub failures: Vec<FailureDoc>,
}

impl From<&TailReport> for TailDoc {
    fn from(t: &TailReport) -> Self {
        Self {
            collection: t.collection.clone(),
            metric: t.metric.as_str().into(),
            threshold: t.threshold,
            k: t.k,
            affected_queries: t.affected_queries(),
            queries: t
                .per_query
                .iter()
                .map(|q| TailQueryDoc {
                    query_id: q.query_id.clone(),
                    category: q.category.as_str().into(),
                    relevant_ranks: q.relevant_ranks.clone(),
                    candidates: q.candidates.len(),
                    top_score: q.curve.first().copied(),
                })
                .collect(),
            candidates: t
                .per_query
                .iter()
                .flat_map(|q| {
                    q.candidates.iter().map(|c| TailCandidateDoc {
                        query_id: q.query_id.clone(),
                        page: (&c.page).into(),
                        rank: c.rank,
                        raw_score: c.raw_score,
                        normalized_score: c.normalized_score,
                        in_top_k: c.in_top_k,
                        nearest_relevant_distance: c.nearest_relevant_distance,
                    })
                })
                .collect(),
            failures: t.failures.iter().map(|(q, e)| FailureDoc { query_id: q.clone(), reason: e.clone() }).collect(),
        }
    }
}

/// Candidates table: one row per relevant-but-unlabeled page.
pub fn render_candidates(tail: &TailReport) -> String {
    let mut out = String::from("query_id\tvolume_id\tpage_number\trank\tnormalized_score\traw_score\tin_top_k\tnearest_relevant_distance\n");
    for q in &tail.per_query {
        for c in &q.candidates {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
                q.query_id,
                c.page.volume_id(),
                c.page.page_number(),
                c.rank,
                c.normalized_score,
                c.raw_score,
                c.in_top_k,
                c.nearest_relevant_distance.map_or_else(|| "-".into(), |d| d.to_string())
            );
        }
    }
    out
}

/// Score curve for plotting: `rank<TAB>normalized_score`, ranks from 1.
pub fn render_curve(curve: &[f64]) -> String {
    let mut out = String::with_capacity(curve.len() * 16);
    for (i, s) in curve.iter().enumerate() {
        let _ = writeln!(out, "{}\t{s:.6}", i + 1);
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `curves/<query_id>.tsv`, `candidates.tsv` and `tail.json` under `dir`.
pub fn write_tail_report(dir: &Path, tail: &TailReport) -> Result<()> {
    let curves = dir.join("curves");
    fs::create_dir_all(&curves).map_err(|e| Error::io(&curves, e))?;
    for q in &tail.per_query {
        write(&curves.join(format!("{}.tsv", q.query_id)), &render_curve(&q.curve))?;
    }
    write(&dir.join("candidates.tsv"), &render_candidates(tail))?;
    let json = serde_json::to_string_pretty(&TailDoc::from(tail)).map_err(|e| Error::Format(e.to_string()))?;
    write(&dir.join("tail.json"), &json)
}

/// Writes `<stem>.txt` and `<stem>.json` under `dir`.
pub fn write_report(dir: &Path, stem: &str, report: &MetricsReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(format!("{stem}.txt")), &render_text(report))?;
    let json = serde_json::to_string_pretty(&ReportDoc::from(report)).map_err(|e| Error::Format(e.to_string()))?;
    write(&dir.join(format!("{stem}.json")), &json)
}
