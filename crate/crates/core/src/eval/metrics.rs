//! Binary-relevance metrics over a ranked list cut at `k`.
//!
//! * `P@k = hits / k`, dividing by `k` even when fewer than `k` pages came back.
//! * `R@k = hits / |relevant|`.
//! * `AP@k = Σ_{i ≤ k, rel(i)} P@i / min(|relevant|, k)`.
//! * `RR@k = 1 / rank` of the first relevant page, 0 if none within `k`.

use alloc::collections::BTreeSet;

use crate::error::{Error, Result};

fn check<T>(relevant: &BTreeSet<T>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidRequest("k must be at least 1"));
    }
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    Ok(())
}

fn hits<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> usize {
    ranked.iter().take(k).filter(|p| relevant.contains(p)).count()
}

pub fn precision_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    Ok(hits(ranked, relevant, k) as f64 / k as f64)
}

pub fn recall_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    Ok(hits(ranked, relevant, k) as f64 / relevant.len() as f64)
}

/// Harmonic mean, with `0/0 = 0`.
pub fn f1(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / sum
    }
}

pub fn f1_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64> {
    Ok(f1(precision_at_k(ranked, relevant, k)?, recall_at_k(ranked, relevant, k)?))
}

pub fn average_precision<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, p) in ranked.iter().take(k).enumerate() {
        if relevant.contains(p) {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(k) as f64)
}

pub fn reciprocal_rank<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    Ok(ranked.iter().take(k).position(|p| relevant.contains(p)).map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

/// All five metrics for one query at cutoff `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryMetrics {
    pub k: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub f1_at_k: f64,
    pub average_precision: f64,
    pub reciprocal_rank: f64,
}

impl QueryMetrics {
    pub fn compute<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<Self> {
        let precision_at_k = precision_at_k(ranked, relevant, k)?;
        let recall_at_k = recall_at_k(ranked, relevant, k)?;
        Ok(Self {
            k,
            precision_at_k,
            recall_at_k,
            f1_at_k: f1(precision_at_k, recall_at_k),
            average_precision: average_precision(ranked, relevant, k)?,
            reciprocal_rank: reciprocal_rank(ranked, relevant, k)?,
        })
    }

    /// Values in report order: P, R, F1, AP, RR.
    pub fn values(&self) -> [f64; 5] {
        [self.precision_at_k, self.recall_at_k, self.f1_at_k, self.average_precision, self.reciprocal_rank]
    }
}
