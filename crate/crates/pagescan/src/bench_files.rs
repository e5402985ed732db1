//! Line-oriented benchmark and ground-truth files.
//!
//! Benchmark: `id<TAB>category<TAB>query text`.
//! Ground truth: `query_id<TAB>volume_id<TAB>page_number<TAB>relevance` with
//! relevance `0` or `1`.
//!
//! Blank lines and lines starting with `#` are skipped in both.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pagescan_core::eval::{BenchmarkQuery, Category, GroundTruth, GroundTruthEntry};
use pagescan_core::PageRef;

use crate::error::{Error, Result};

fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_benchmark(text: &str, path: &Path) -> Result<Vec<BenchmarkQuery>> {
    let err = |line, message: String| Error::Parse { path: path.into(), line, message };
    records(text)
        .map(|(line, l)| {
            let mut fields = l.splitn(3, '\t');
            let (Some(id), Some(cat), Some(text)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err(line, "expected `id<TAB>category<TAB>text`".into()));
            };
            let category: Category = cat.trim().parse().map_err(|_| err(line, format!("unknown category `{cat}`")))?;
            BenchmarkQuery::new(id.trim(), category, text.trim()).map_err(|e| err(line, e.to_string()))
        })
        .collect()
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<GroundTruth> {
    let err = |line, message: String| Error::Parse { path: path.into(), line, message };
    let entries = records(text)
        .map(|(line, l)| {
            let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
            let [query_id, volume, page_number, relevance] = fields[..] else {
                return Err(err(line, format!("expected 4 tab-separated fields, found {}", fields.len())));
            };
            let page_number: u32 =
                page_number.parse().map_err(|_| err(line, format!("bad page number `{page_number}`")))?;
            let page = PageRef::new(volume, page_number).map_err(|e| err(line, e.to_string()))?;
            let relevant = match relevance {
                "1" => true,
                "0" => false,
                other => return Err(err(line, format!("relevance must be 0 or 1, found `{other}`"))),
            };
            if query_id.is_empty() {
                return Err(err(line, "empty query id".into()));
            }
            Ok(GroundTruthEntry { query_id: query_id.into(), page, relevant })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth::new(entries))
}

pub fn read_benchmark(path: impl AsRef<Path>) -> Result<Vec<BenchmarkQuery>> {
    let path = path.as_ref();
    parse_benchmark(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?, path)
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    parse_ground_truth(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?, path)
}

pub fn render_benchmark(queries: &[BenchmarkQuery]) -> String {
    let mut out = String::new();
    for q in queries {
        let _ = writeln!(out, "{}\t{}\t{}", q.id, q.category.as_str(), q.text);
    }
    out
}

pub fn render_ground_truth(gt: &GroundTruth) -> String {
    let mut out = String::new();
    for e in gt.entries() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", e.query_id, e.page.volume_id(), e.page.page_number(), u8::from(e.relevant));
    }
    out
}
