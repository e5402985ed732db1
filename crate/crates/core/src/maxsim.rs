//! MaxSim late-interaction scoring.
//!
//! `score(Q, D) = Σ_i max_j sim(q_i, d_j)` where `sim` is the collection
//! metric in its higher-is-better orientation. The first argument is always
//! the query.

use alloc::vec::Vec;

use crate::embedding::MultiVector;
use crate::error::{Error, Result};
use crate::kernels;
use crate::metric::{cosine_from_parts, Metric};

/// Best document patch for one query token.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TokenMatch {
    pub token_index: usize,
    pub best_patch_index: usize,
    pub best_similarity: f64,
}

/// Per-token alignment behind a MaxSim score. `total` is the sum of the
/// per-token maxima.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreExplanation {
    pub per_token: Vec<TokenMatch>,
    pub total: f64,
}

fn check_dims(query: &MultiVector, doc: &MultiVector) -> Result<()> {
    if query.dims() != doc.dims() {
        return Err(Error::DimensionMismatch { expected: query.dims(), found: doc.dims() });
    }
    Ok(())
}

/// A query widened to `f64` once, with its row norms, so that scoring many
/// documents does not repeat the conversion.
#[derive(Clone, Debug)]
pub(crate) struct PreparedQuery {
    dims: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl PreparedQuery {
    pub(crate) fn new(query: &MultiVector) -> Self {
        let mut data = alloc::vec![0.0; query.as_slice().len()];
        kernels::widen_into(query.as_slice(), &mut data);
        let norms = data.chunks_exact(query.dims()).map(|r| libm::sqrt(kernels::dot_wide(r, r))).collect();
        Self { dims: query.dims(), data, norms }
    }

    pub(crate) fn rows(&self) -> usize {
        self.norms.len()
    }

    fn iter_rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dims)
    }

    /// Best `(patch, similarity)` per query row. Ties go to the lowest patch.
    ///
    /// The document is streamed once, outer loop over its rows, each row
    /// widened a single time and compared with every query row.
    pub(crate) fn best_matches(&self, doc: &MultiVector, metric: Metric) -> Vec<(usize, f64)> {
        debug_assert_eq!(self.dims, doc.dims());
        let mut best: Vec<(usize, f64)> = alloc::vec![(0, f64::NEG_INFINITY); self.rows()];
        let mut row = alloc::vec![0.0f64; self.dims];
        for (j, d) in doc.iter_rows().enumerate() {
            kernels::widen_into(d, &mut row);
            match metric {
                Metric::Cosine => {
                    let dn = libm::sqrt(kernels::dot_wide(&row, &row));
                    for ((q, &qn), b) in self.iter_rows().zip(&self.norms).zip(&mut best) {
                        offer(b, j, cosine_from_parts(kernels::dot_wide(q, &row), qn, dn));
                    }
                }
                Metric::DotProduct => {
                    for (q, b) in self.iter_rows().zip(&mut best) {
                        offer(b, j, kernels::dot_wide(q, &row));
                    }
                }
                // sqrt is monotone: compare squared distances, root the winner.
                Metric::Euclidean => {
                    for (q, b) in self.iter_rows().zip(&mut best) {
                        offer(b, j, -kernels::squared_l2_wide(q, &row));
                    }
                }
                Metric::Manhattan => {
                    for (q, b) in self.iter_rows().zip(&mut best) {
                        offer(b, j, -kernels::l1_wide(q, &row));
                    }
                }
            }
        }
        if metric == Metric::Euclidean {
            for b in &mut best {
                b.1 = -libm::sqrt(-b.1);
            }
        }
        best
    }

    pub(crate) fn score(&self, doc: &MultiVector, metric: Metric) -> f64 {
        self.best_matches(doc, metric).iter().map(|b| b.1).sum()
    }

    pub(crate) fn explain(&self, doc: &MultiVector, metric: Metric) -> ScoreExplanation {
        let per_token: Vec<TokenMatch> = self
            .best_matches(doc, metric)
            .into_iter()
            .enumerate()
            .map(|(token_index, (best_patch_index, best_similarity))| TokenMatch {
                token_index,
                best_patch_index,
                best_similarity,
            })
            .collect();
        let total = per_token.iter().map(|t| t.best_similarity).sum();
        ScoreExplanation { per_token, total }
    }
}

#[inline(always)]
fn offer(b: &mut (usize, f64), j: usize, s: f64) {
    if s > b.1 {
        *b = (j, s);
    }
}

/// Sum over query rows of the best similarity against any document row.
pub fn maxsim_score(query: &MultiVector, doc: &MultiVector, metric: Metric) -> Result<f64> {
    check_dims(query, doc)?;
    Ok(PreparedQuery::new(query).score(doc, metric))
}

pub fn maxsim_explain(query: &MultiVector, doc: &MultiVector, metric: Metric) -> Result<ScoreExplanation> {
    check_dims(query, doc)?;
    Ok(PreparedQuery::new(query).explain(doc, metric))
}

/// Raw MaxSim divided by the number of query tokens.
///
/// Under cosine each term is at most 1, so the normalized score is
/// comparable against an absolute threshold regardless of query length.
pub fn normalized_score(raw: f64, query_rows: usize) -> f64 {
    raw / query_rows as f64
}

/// Reference MaxSim: plain double loop, `f64` arithmetic, no shared kernels.
///
/// Exists to cross-check [`maxsim_score`]; do not use it on hot paths.
pub fn oracle_score(query: &MultiVector, doc: &MultiVector, metric: Metric) -> Result<f64> {
    check_dims(query, doc)?;
    let dims = query.dims();
    let mut total = 0.0f64;
    for i in 0..query.rows() {
        let q = query.row(i);
        let mut best = f64::NEG_INFINITY;
        for j in 0..doc.rows() {
            let d = doc.row(j);
            let mut dot = 0.0f64;
            let mut qq = 0.0f64;
            let mut dd = 0.0f64;
            let mut l2 = 0.0f64;
            let mut l1 = 0.0f64;
            for k in 0..dims {
                let (x, y) = (q[k] as f64, d[k] as f64);
                dot += x * y;
                qq += x * x;
                dd += y * y;
                let diff = x - y;
                l2 += diff * diff;
                l1 += if diff < 0.0 { -diff } else { diff };
            }
            let sim = match metric {
                Metric::Cosine => {
                    if qq == 0.0 || dd == 0.0 {
                        0.0
                    } else {
                        dot / (libm::sqrt(qq) * libm::sqrt(dd))
                    }
                }
                Metric::DotProduct => dot,
                Metric::Euclidean => -libm::sqrt(l2),
                Metric::Manhattan => -l1,
            };
            if sim > best {
                best = sim;
            }
        }
        total += best;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::similarity;
    use alloc::vec;
    use proptest::prelude::*;

    fn m(rows: &[&[f32]]) -> MultiVector {
        MultiVector::from_rows(rows).unwrap()
    }

    #[test]
    fn hand_enumerated_dot_example() {
        let q = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = m(&[&[1.0, 0.0], &[0.5, 0.5]]);
        assert_eq!(maxsim_score(&q, &d, Metric::DotProduct).unwrap(), 1.5);
        let ex = maxsim_explain(&q, &d, Metric::DotProduct).unwrap();
        assert_eq!(
            ex.per_token,
            vec![
                TokenMatch { token_index: 0, best_patch_index: 0, best_similarity: 1.0 },
                TokenMatch { token_index: 1, best_patch_index: 1, best_similarity: 0.5 },
            ]
        );
        assert_eq!(ex.total, 1.5);
    }

    #[test]
    fn cosine_self_match_counts_tokens() {
        let q = m(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0], &[0.0, 0.0, 4.0]]);
        let s = maxsim_score(&q, &q, Metric::Cosine).unwrap();
        assert!((s - 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_by_one_equals_similarity() {
        let q = m(&[&[0.25, -1.5, 2.0]]);
        let d = m(&[&[1.0, 0.5, -0.75]]);
        for metric in Metric::ALL {
            let want = similarity(metric, q.row(0), d.row(0)).unwrap();
            assert_eq!(maxsim_score(&q, &d, metric).unwrap(), want, "{metric}");
            assert_eq!(oracle_score(&q, &d, metric).unwrap(), want, "{metric}");
        }
    }

    #[test]
    fn zero_query_under_cosine_scores_zero() {
        let q = MultiVector::zeros(4, 3).unwrap();
        let d = m(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(maxsim_score(&q, &d, Metric::Cosine).unwrap(), 0.0);
        assert_eq!(oracle_score(&q, &d, Metric::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn ties_go_to_lowest_patch() {
        let q = m(&[&[0.3, 0.7], &[-1.0, 1.0]]);
        let d = m(&[&[5.0, 5.0], &[1.0, 2.0], &[1.0, 2.0], &[5.0, 5.0]]);
        for metric in Metric::ALL {
            let ex = maxsim_explain(&q, &d, metric).unwrap();
            for t in &ex.per_token {
                assert!(t.best_patch_index <= 1, "{metric}: {t:?}");
            }
        }
    }

    #[test]
    fn dims_mismatch() {
        let q = m(&[&[1.0, 0.0]]);
        let d = m(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(maxsim_score(&q, &d, Metric::Cosine), Err(Error::DimensionMismatch { .. })));
        assert!(maxsim_explain(&q, &d, Metric::Cosine).is_err());
        assert!(oracle_score(&q, &d, Metric::Cosine).is_err());
    }

    fn matrix(max_rows: usize, dims: usize) -> impl Strategy<Value = MultiVector> {
        (1..=max_rows).prop_flat_map(move |rows| {
            proptest::collection::vec(-2.0f32..2.0, rows * dims)
                .prop_map(move |data| MultiVector::new(rows, dims, data).unwrap())
        })
    }

    fn metric() -> impl Strategy<Value = Metric> {
        prop_oneof![Just(Metric::Cosine), Just(Metric::DotProduct), Just(Metric::Euclidean), Just(Metric::Manhattan)]
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn explain_total_matches_score(q in matrix(8, 6), d in matrix(12, 6), metric in metric()) {
            let ex = maxsim_explain(&q, &d, metric).unwrap();
            let score = maxsim_score(&q, &d, metric).unwrap();
            prop_assert_eq!(ex.per_token.len(), q.rows());
            prop_assert!((ex.total - score).abs() <= 1e-6);
            let sum: f64 = ex.per_token.iter().map(|t| t.best_similarity).sum();
            prop_assert!((sum - ex.total).abs() <= 1e-6);
            for (i, t) in ex.per_token.iter().enumerate() {
                prop_assert_eq!(t.token_index, i);
                prop_assert!(t.best_patch_index < d.rows());
            }
        }

        #[test]
        fn matches_oracle(q in matrix(16, 8), d in matrix(64, 8), metric in metric()) {
            let fast = maxsim_score(&q, &d, metric).unwrap();
            let slow = oracle_score(&q, &d, metric).unwrap();
            prop_assert!(rel_close(fast, slow), "{} vs {}", fast, slow);
        }

        #[test]
        fn appending_a_patch_never_lowers_the_score(q in matrix(6, 4), d in matrix(10, 4), extra in proptest::collection::vec(-2.0f32..2.0, 4)) {
            for metric in [Metric::Cosine, Metric::DotProduct] {
                let base = maxsim_score(&q, &d, metric).unwrap();
                let mut data = d.as_slice().to_vec();
                data.extend_from_slice(&extra);
                let grown = MultiVector::new(d.rows() + 1, 4, data).unwrap();
                prop_assert!(maxsim_score(&q, &grown, metric).unwrap() >= base);
            }
        }

        #[test]
        fn patch_order_does_not_matter(q in matrix(6, 4), d in matrix(10, 4), metric in metric(), rot in 0usize..10) {
            let rows = d.rows();
            let shift = rot % rows;
            let rotated: Vec<f32> = (0..rows).flat_map(|i| d.row((i + shift) % rows).to_vec()).collect();
            let rotated = MultiVector::new(rows, 4, rotated).unwrap();
            let a = maxsim_explain(&q, &d, metric).unwrap();
            let b = maxsim_explain(&q, &rotated, metric).unwrap();
            prop_assert_eq!(a.total, b.total);
            for (x, y) in a.per_token.iter().zip(&b.per_token) {
                // the chosen patch is the same vector, possibly a tied copy
                prop_assert_eq!(d.row(x.best_patch_index), rotated.row(y.best_patch_index));
            }
        }

        #[test]
        fn additive_over_query_tokens(q in matrix(8, 5), d in matrix(10, 5), metric in metric()) {
            let whole = maxsim_score(&q, &d, metric).unwrap();
            let parts: f64 = q.iter_rows()
                .map(|r| maxsim_score(&MultiVector::from_rows(&[r]).unwrap(), &d, metric).unwrap())
                .sum();
            prop_assert!((whole - parts).abs() <= 1e-9 * whole.abs().max(1.0));
        }
    }
}
