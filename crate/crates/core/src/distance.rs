//! Distance kernels and bounded top-k selection.
//!
//! Kernels accumulate in eight independent `f32` lanes so the compiler can
//! vectorise them; no explicit intrinsics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::types::Metric;

const LANES: usize = 8;

#[inline]
pub fn squared_l2(x: &[f32], y: &[f32]) -> f32 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f32; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for i in 0..LANES {
            let t = a[i] - b[i];
            acc[i] += t * t;
        }
    }
    let mut tail = 0.0f32;
    for (a, b) in xr.iter().zip(yr) {
        let t = a - b;
        tail += t * t;
    }
    reduce(acc) + tail
}

#[inline]
pub fn dot(x: &[f32], y: &[f32]) -> f32 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f32; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for i in 0..LANES {
            acc[i] += a[i] * b[i];
        }
    }
    let mut tail = 0.0f32;
    for (a, b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    reduce(acc) + tail
}

#[inline]
pub fn norm(x: &[f32]) -> f32 {
    dot(x, x).sqrt()
}

#[inline]
fn reduce(acc: [f32; LANES]) -> f32 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Lower-is-better score without length checks.
#[inline]
pub fn score(x: &[f32], y: &[f32], metric: Metric) -> f32 {
    match metric {
        Metric::SquaredEuclidean => squared_l2(x, y),
        Metric::InnerProduct => -dot(x, y),
        Metric::Cosine => {
            let denom = norm(x) * norm(y);
            if denom > 0.0 {
                -dot(x, y) / denom
            } else {
                0.0
            }
        }
    }
}

/// Lower-is-better distance between `x` and `y` under `metric`.
pub fn distance(x: &[f32], y: &[f32], metric: Metric) -> Result<f32> {
    if x.len() != y.len() {
        return Err(Error::dims(x.len(), y.len()));
    }
    Ok(score(x, y, metric))
}

/// Scored candidate ordered by `(score, id)`.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub score: f32,
    pub id: u32,
}

impl PartialEq for Neighbor {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then(self.id.cmp(&other.id))
    }
}

/// Keeps the `k` smallest `(score, id)` pairs seen so far.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, id: u32, score: f32) {
        let cand = Neighbor { score, id };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if cand < *worst {
                *worst = cand;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Ascending by `(score, id)`.
    pub fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec()
    }
}
