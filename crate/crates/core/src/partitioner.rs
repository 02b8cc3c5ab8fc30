//! First-level partitioning: balanced k-means over the embedding space.
//!
//! Training seeds with greedy k-means++ and then runs Lloyd iterations on a
//! (possibly subsampled) training set. Build-time assignment can be capped
//! so that no partition exceeds `balance_cap`; points are placed in order of
//! increasing distance to their nearest centroid and spill to the next
//! nearest centroid that still has room. Query-time assignment is always the
//! plain nearest centroid.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distance::{score, TopK};
use crate::error::{Error, Result};
use crate::types::{EmbeddingMatrix, Metric};

/// Partition size limit applied at build time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Balance {
    Unbounded,
    /// Cap at `ceil(factor * N / B)`.
    Factor(f64),
    /// Absolute cap; raised to `ceil(N / B)` if too small to hold every point.
    Cap(usize),
}

impl Balance {
    fn resolve(self, n: usize, b: usize) -> Option<usize> {
        let floor = n.div_ceil(b);
        match self {
            Balance::Unbounded => None,
            Balance::Factor(f) => Some(((f * n as f64 / b as f64).ceil() as usize).max(floor)),
            Balance::Cap(c) => Some(c.max(floor)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub iters: usize,
    pub seed: u64,
    pub balance: Balance,
    /// Training subsample size is `max_points_per_centroid * B`.
    pub max_points_per_centroid: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            iters: 10,
            seed: 0x5eed,
            balance: Balance::Factor(1.25),
            max_points_per_centroid: 256,
        }
    }
}

/// `ceil(sqrt(n))` rounded to the nearest power of two, at most `n`.
pub fn default_partitions(n: usize) -> usize {
    if n <= 1 {
        return n;
    }
    let root = (n as f64).sqrt().ceil();
    let pow = 2usize.pow(root.log2().round() as u32);
    pow.clamp(1, n)
}

/// Trained centroids plus the metric and build-time balance cap.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionModel {
    b: usize,
    d: usize,
    metric: Metric,
    centroids: Vec<f32>,
    balance_cap: Option<usize>,
}

impl PartitionModel {
    pub fn from_centroids(centroids: EmbeddingMatrix, metric: Metric, balance_cap: Option<usize>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::InvalidConfig("at least one centroid is required".into()));
        }
        Ok(Self {
            b: centroids.n(),
            d: centroids.d(),
            metric,
            centroids: centroids.as_slice().to_vec(),
            balance_cap,
        })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn balance_cap(&self) -> Option<usize> {
        self.balance_cap
    }

    pub fn centroid(&self, id: usize) -> &[f32] {
        &self.centroids[id * self.d..(id + 1) * self.d]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    fn check_dim(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::dims(self.d, x.len()));
        }
        Ok(())
    }

    #[inline]
    fn nearest(&self, x: &[f32]) -> (u32, f32) {
        nearest_centroid(&self.centroids, self.d, self.metric, x)
    }

    /// Nearest centroid, lowest id on ties.
    pub fn assign(&self, x: &[f32]) -> Result<u32> {
        self.check_dim(x)?;
        Ok(self.nearest(x).0)
    }

    /// The `m` nearest centroid ids, ascending by `(distance, id)`.
    pub fn top_m(&self, q: &[f32], m: usize) -> Result<Vec<u32>> {
        self.check_dim(q)?;
        if m == 0 || m > self.b {
            return Err(Error::InvalidConfig(format!("probe count {m} outside 1..={}", self.b)));
        }
        let mut top = TopK::new(m);
        for (id, c) in self.centroids.chunks_exact(self.d).enumerate() {
            top.push(id as u32, score(q, c, self.metric));
        }
        Ok(top.into_sorted().into_iter().map(|n| n.id).collect())
    }

    /// Build-time assignment of every row, honouring the balance cap.
    pub fn assign_all(&self, vectors: &EmbeddingMatrix) -> Result<Vec<u32>> {
        if vectors.d() != self.d {
            return Err(Error::dims(self.d, vectors.d()));
        }
        let nearest: Vec<(u32, f32)> = (0..vectors.n())
            .into_par_iter()
            .map(|i| self.nearest(vectors.row(i)))
            .collect();
        let cap = match self.balance_cap {
            Some(cap) => cap.max(vectors.n().div_ceil(self.b)),
            None => return Ok(nearest.into_iter().map(|(c, _)| c).collect()),
        };

        let mut order: Vec<u32> = (0..vectors.n() as u32).collect();
        order.sort_by(|&a, &b| nearest[a as usize].1.total_cmp(&nearest[b as usize].1).then(a.cmp(&b)));
        let mut counts = vec![0usize; self.b];
        let mut assignment = vec![0u32; vectors.n()];
        let mut ranked: Vec<(f32, u32)> = Vec::with_capacity(self.b);
        for i in order {
            let (c, _) = nearest[i as usize];
            let target = if counts[c as usize] < cap {
                c
            } else {
                let x = vectors.row(i as usize);
                ranked.clear();
                ranked.extend(
                    self.centroids
                        .chunks_exact(self.d)
                        .enumerate()
                        .map(|(id, cen)| (score(x, cen, self.metric), id as u32)),
                );
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                ranked
                    .iter()
                    .map(|&(_, id)| id)
                    .find(|&id| counts[id as usize] < cap)
                    .expect("cap * B >= N leaves room somewhere")
            };
            counts[target as usize] += 1;
            assignment[i as usize] = target;
        }
        Ok(assignment)
    }
}

#[inline]
fn nearest_centroid(centroids: &[f32], d: usize, metric: Metric, x: &[f32]) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (id, c) in centroids.chunks_exact(d).enumerate() {
        let s = score(x, c, metric);
        if s < best.1 {
            best = (id as u32, s);
        }
    }
    best
}

/// Trains a partition model with `b` centroids.
pub fn train(vectors: &EmbeddingMatrix, b: usize, metric: Metric, config: &KMeansConfig) -> Result<PartitionModel> {
    train_traced(vectors, b, metric, config).map(|(model, _)| model)
}

/// [`train`], also returning the Lloyd objective after every assignment step.
pub fn train_traced(
    vectors: &EmbeddingMatrix,
    b: usize,
    metric: Metric,
    config: &KMeansConfig,
) -> Result<(PartitionModel, Vec<f64>)> {
    let n = vectors.n();
    if n == 0 {
        return Err(Error::EmptyIndex);
    }
    if b == 0 || b > n {
        return Err(Error::InvalidConfig(format!("partition count {b} must be in 1..={n}")));
    }
    if config.iters == 0 {
        return Err(Error::InvalidConfig("k-means needs at least one iteration".into()));
    }
    if vectors.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite training value".into()));
    }
    let d = vectors.d();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let budget = config.max_points_per_centroid.max(1).saturating_mul(b);
    let train_ids: Vec<usize> = if n > budget {
        let mut ids = sample(&mut rng, n, budget).into_vec();
        ids.sort_unstable();
        ids
    } else {
        (0..n).collect()
    };
    let train_rows: Vec<&[f32]> = train_ids.iter().map(|&i| vectors.row(i)).collect();

    let mut centroids = seed_centroids(&train_rows, b, d, metric, &mut rng);
    let mut assignment = vec![0u32; train_rows.len()];
    let mut dists = vec![0f32; train_rows.len()];
    let mut history = Vec::with_capacity(config.iters);

    for _ in 0..config.iters {
        let objective = assign_rows(&train_rows, &centroids, d, metric, &mut assignment, &mut dists);
        history.push(objective);
        update_centroids(&train_rows, &mut assignment, &dists, &mut centroids, b, d, metric);
    }
    let objective = assign_rows(&train_rows, &centroids, d, metric, &mut assignment, &mut dists);
    history.push(objective);

    let model = PartitionModel {
        b,
        d,
        metric,
        centroids,
        balance_cap: config.balance.resolve(n, b),
    };
    Ok((model, history))
}

/// Greedy k-means++ seeding: each step draws `2 + ln B` candidates with
/// probability proportional to their squared distance from the closest
/// chosen centroid and keeps the one that lowers the total the most.
fn seed_centroids(rows: &[&[f32]], b: usize, d: usize, metric: Metric, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let trials = 2 + (b as f64).ln().floor() as usize;
    let mut centroids = Vec::with_capacity(b * d);
    let first = rng.gen_range(0..rows.len());
    centroids.extend_from_slice(rows[first]);
    let mut closest: Vec<f64> = rows.par_iter().map(|r| seed_weight(r, rows[first], metric)).collect();
    let mut chosen = vec![false; rows.len()];
    chosen[first] = true;

    while centroids.len() < b * d {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut cumulative = Vec::with_capacity(closest.len());
            let mut acc = 0.0;
            for &w in &closest {
                acc += w;
                cumulative.push(acc);
            }
            let mut best: Option<(f64, usize, Vec<f64>)> = None;
            for _ in 0..trials {
                let target = rng.gen::<f64>() * total;
                let cand = cumulative.partition_point(|&c| c <= target).min(rows.len() - 1);
                let updated: Vec<f64> = closest
                    .par_iter()
                    .zip(rows.par_iter())
                    .map(|(&w, r)| w.min(seed_weight(r, rows[cand], metric)))
                    .collect();
                let potential: f64 = updated.iter().sum();
                if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                    best = Some((potential, cand, updated));
                }
            }
            let (_, cand, updated) = best.expect("at least two trials");
            closest = updated;
            cand
        } else {
            // every remaining row coincides with a centroid
            let pick = chosen
                .iter()
                .position(|c| !c)
                .unwrap_or_else(|| rng.gen_range(0..rows.len()));
            let c = rows[pick];
            for (w, r) in closest.iter_mut().zip(rows) {
                *w = w.min(seed_weight(r, c, metric));
            }
            pick
        };
        chosen[pick] = true;
        centroids.extend_from_slice(rows[pick]);
    }
    centroids
}

fn seed_weight(x: &[f32], c: &[f32], metric: Metric) -> f64 {
    match metric {
        Metric::SquaredEuclidean => score(x, c, metric) as f64,
        // spread by direction for angular metrics
        Metric::InnerProduct | Metric::Cosine => (1.0 + score(x, c, Metric::Cosine) as f64).max(0.0),
    }
}

fn assign_rows(
    rows: &[&[f32]],
    centroids: &[f32],
    d: usize,
    metric: Metric,
    assignment: &mut [u32],
    dists: &mut [f32],
) -> f64 {
    assignment
        .par_iter_mut()
        .zip(dists.par_iter_mut())
        .zip(rows.par_iter())
        .map(|((a, dist), row)| {
            let (c, s) = nearest_centroid(centroids, d, metric, row);
            *a = c;
            *dist = s;
            s as f64
        })
        .sum()
}

fn update_centroids(
    rows: &[&[f32]],
    assignment: &mut [u32],
    dists: &[f32],
    centroids: &mut [f32],
    b: usize,
    d: usize,
    metric: Metric,
) {
    let mut counts = vec![0usize; b];
    for &a in assignment.iter() {
        counts[a as usize] += 1;
    }

    // Re-seed empty clusters from the farthest member of the largest cluster.
    let mut moved = vec![false; rows.len()];
    for empty in 0..b {
        if counts[empty] != 0 {
            continue;
        }
        let largest = (0..b).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
        if counts[largest] < 2 {
            continue;
        }
        let farthest = (0..rows.len())
            .filter(|&i| assignment[i] as usize == largest && !moved[i])
            .max_by(|&i, &j| dists[i].total_cmp(&dists[j]).then(j.cmp(&i)));
        if let Some(i) = farthest {
            assignment[i] = empty as u32;
            moved[i] = true;
            counts[largest] -= 1;
            counts[empty] += 1;
        }
    }

    let mut sums = vec![0f64; b * d];
    for (row, &a) in rows.iter().zip(assignment.iter()) {
        let acc = &mut sums[a as usize * d..(a as usize + 1) * d];
        for (s, &v) in acc.iter_mut().zip(row.iter()) {
            *s += v as f64;
        }
    }
    for c in 0..b {
        if counts[c] == 0 {
            continue;
        }
        let inv = 1.0 / counts[c] as f64;
        let dst = &mut centroids[c * d..(c + 1) * d];
        for (x, &s) in dst.iter_mut().zip(&sums[c * d..(c + 1) * d]) {
            *x = (s * inv) as f32;
        }
        if metric == Metric::Cosine {
            let norm = crate::distance::norm(dst);
            if norm > 0.0 {
                dst.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}
