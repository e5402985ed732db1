//! Unchecked reduction kernels.
//!
//! Inputs are widened to `f64` before any arithmetic and sums are kept in
//! `f64` across eight independent lanes so the loops vectorize. Callers
//! guarantee equal lengths.

const LANES: usize = 8;

#[inline(always)]
fn reduce<T: Copy + Into<f64>, F: Fn(f64, f64) -> f64>(a: &[T], b: &[T], term: F) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += term(x[i].into(), y[i].into());
        }
    }
    let mut tail = 0.0f64;
    for (x, y) in ra.iter().zip(rb) {
        tail += term((*x).into(), (*y).into());
    }
    acc.iter().sum::<f64>() + tail
}

#[inline(always)]
fn mul(x: f64, y: f64) -> f64 {
    x * y
}

#[inline(always)]
fn sq_diff(x: f64, y: f64) -> f64 {
    let d = x - y;
    d * d
}

#[inline(always)]
fn abs_diff(x: f64, y: f64) -> f64 {
    (x - y).abs()
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    reduce(a, b, mul)
}

#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    reduce(a, b, sq_diff)
}

#[inline]
pub fn l1(a: &[f32], b: &[f32]) -> f64 {
    reduce(a, b, abs_diff)
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// [`dot`] over rows already widened to `f64`.
#[inline]
pub fn dot_wide(a: &[f64], b: &[f64]) -> f64 {
    reduce(a, b, mul)
}

#[inline]
pub fn squared_l2_wide(a: &[f64], b: &[f64]) -> f64 {
    reduce(a, b, sq_diff)
}

#[inline]
pub fn l1_wide(a: &[f64], b: &[f64]) -> f64 {
    reduce(a, b, abs_diff)
}

/// Writes `src` widened to `f64` into `dst`.
#[inline]
pub fn widen_into(src: &[f32], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *s as f64;
    }
}
