use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels;

/// The four similarity/distance functions a collection can be bound to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Cosine,
    DotProduct,
    Euclidean,
    Manhattan,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Cosine, Metric::DotProduct, Metric::Euclidean, Metric::Manhattan];

    /// Wire name: `cosine`, `dot`, `euclidean` or `manhattan`.
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::DotProduct => "dot",
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }

    /// True for the two metrics whose raw value is a distance (lower is closer).
    pub fn is_distance(self) -> bool {
        matches!(self, Metric::Euclidean | Metric::Manhattan)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownMetric;

impl fmt::Display for UnknownMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown metric; expected one of: cosine, dot, euclidean, manhattan")
    }
}

impl core::error::Error for UnknownMetric {}

impl FromStr for Metric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Metric::ALL.into_iter().find(|m| m.as_str() == s).ok_or(UnknownMetric)
    }
}

fn check(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(())
}

/// `a·b / (|a||b|)`, or 0 when either side has zero norm.
pub fn cosine_sim(a: &[f32], b: &[f32]) -> Result<f64> {
    check(a, b)?;
    Ok(cosine_from_parts(kernels::dot(a, b), kernels::norm(a), kernels::norm(b)))
}

#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    let denom = norm_a * norm_b;
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

pub fn dot_sim(a: &[f32], b: &[f32]) -> Result<f64> {
    check(a, b)?;
    Ok(kernels::dot(a, b))
}

pub fn euclidean_dist(a: &[f32], b: &[f32]) -> Result<f64> {
    check(a, b)?;
    Ok(libm::sqrt(kernels::squared_l2(a, b)))
}

pub fn manhattan_dist(a: &[f32], b: &[f32]) -> Result<f64> {
    check(a, b)?;
    Ok(kernels::l1(a, b))
}

/// Higher-is-better similarity: cosine and dot pass through, distances are negated.
pub fn similarity(metric: Metric, a: &[f32], b: &[f32]) -> Result<f64> {
    match metric {
        Metric::Cosine => cosine_sim(a, b),
        Metric::DotProduct => dot_sim(a, b),
        Metric::Euclidean => euclidean_dist(a, b).map(|d| -d),
        Metric::Manhattan => manhattan_dist(a, b).map(|d| -d),
    }
}
