#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pagescan::bench_files::{read_benchmark, read_ground_truth};
use pagescan_core::eval::{BenchmarkQuery, GroundTruth};
use pagescan_core::{mock_embed, MockEmbedder, MultiVector, PageEmbedding, PageRef};

pub const PAGE_ROWS: usize = 32;
pub const DIMS: usize = 16;
pub const SEED: u64 = 7;
pub const DISTRACTORS: u32 = 200;
/// Query whose relevant page gets an unlabeled near-duplicate.
pub const PLANTED_QUERY: &str = "CP-1";

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn fake_renderer() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/support/fake_renderer.py")
}

pub fn fixture() -> (Vec<BenchmarkQuery>, GroundTruth) {
    (read_benchmark(data("benchmark.tsv")).unwrap(), read_ground_truth(data("ground_truth.tsv")).unwrap())
}

pub fn mock() -> MockEmbedder {
    MockEmbedder::new(PAGE_ROWS, DIMS, SEED)
}

pub fn page(v: &str, n: u32) -> PageRef {
    PageRef::new(v, n).unwrap()
}

/// The page a text query matches exactly: query row `i` equals page row `i`.
pub fn self_match_page(text: &str) -> MultiVector {
    mock_embed(text.trim().as_bytes(), PAGE_ROWS, DIMS, SEED).unwrap()
}

pub fn near_duplicate(m: &MultiVector) -> MultiVector {
    let noise = mock_embed(b"near-duplicate noise", m.rows(), m.dims(), SEED).unwrap();
    let data = m.as_slice().iter().zip(noise.as_slice()).map(|(a, n)| 0.97 * a + 0.05 * n).collect();
    MultiVector::new(m.rows(), m.dims(), data).unwrap()
}

/// Corpus for the fixture benchmark:
/// - every judged-relevant page whose query is the i-th benchmark line and
///   whose page number is i matches that query exactly;
/// - every other judged page, plus `DISTRACTORS` pages of volume `shelf`,
///   is unrelated noise;
/// - `appendix#1` is an unlabeled near-duplicate of `PLANTED_QUERY`'s page.
pub fn synthetic_corpus(queries: &[BenchmarkQuery], gt: &GroundTruth) -> Vec<PageEmbedding> {
    let mut pages: std::collections::BTreeMap<PageRef, MultiVector> = Default::default();
    for e in gt.entries() {
        let index = queries.iter().position(|q| q.id == e.query_id).map(|i| i as u32 + 1);
        let m = match index {
            Some(i) if e.relevant && e.page.page_number() == i => self_match_page(&queries[i as usize - 1].text),
            _ => noise_page(&e.page),
        };
        pages.insert(e.page.clone(), m);
    }
    for n in 1..=DISTRACTORS {
        let p = page("shelf", n);
        pages.insert(p.clone(), noise_page(&p));
    }
    let planted = queries.iter().find(|q| q.id == PLANTED_QUERY).unwrap();
    pages.insert(page("appendix", 1), near_duplicate(&self_match_page(&planted.text)));
    pages.into_iter().map(|(p, m)| PageEmbedding::new(p, m)).collect()
}

pub fn noise_page(p: &PageRef) -> MultiVector {
    mock_embed(format!("noise:{p}").as_bytes(), PAGE_ROWS, DIMS, SEED).unwrap()
}

/// A small valid grayscale PNG whose pixels encode `marker`.
pub fn tiny_png(marker: u8) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, 4, 4);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        let mut pixels = [0u8; 16];
        pixels[0] = marker;
        w.write_image_data(&pixels).unwrap();
    }
    out
}

pub fn page_images(volume: &str, n: u32) -> Vec<pagescan::ingest::PageImage> {
    (1..=n).map(|i| pagescan::ingest::PageImage::new(page(volume, i), tiny_png(i as u8), 300).unwrap()).collect()
}

/// Serves `router` on an ephemeral local port and returns its base URL.
pub async fn spawn(router: axum::Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}")
}
