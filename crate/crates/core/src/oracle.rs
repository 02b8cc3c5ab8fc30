//! Exact filtered k-NN ground truth, recall, and the on-disk cache.
//!
//! Distances are recomputed in `f64`; results are ordered by `(distance,
//! id)`, the same tie rule the index uses.
//!
//! Cache file layout (little-endian), a 48-byte header:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `CAGT`                   |
//! | 4      | 4    | format version (1)             |
//! | 8      | 4    | k                              |
//! | 12     | 4    | query count                    |
//! | 16     | 8    | dataset hash                   |
//! | 24     | 8    | workload hash                  |
//! | 32     | 1    | metric code, then 3 zero bytes |
//! | 36     | 8    | payload length                 |
//! | 44     | 4    | CRC-32 of the payload          |
//!
//! then per query: `count: u32`, `count` ids (u32), `count` scores (f64).

use std::collections::HashSet;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{AttributeTable, EmbeddingMatrix, Metric, QueryFilter};

pub const GT_MAGIC: [u8; 4] = *b"CAGT";
pub const GT_VERSION: u32 = 1;
pub const GT_HEADER_LEN: usize = 48;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthRow {
    pub ids: Vec<u32>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub k: usize,
    pub rows: Vec<GroundTruthRow>,
}

fn exact_score(x: &[f32], y: &[f32], metric: Metric) -> f64 {
    match metric {
        Metric::SquaredEuclidean => x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let t = a as f64 - b as f64;
                t * t
            })
            .sum(),
        Metric::InnerProduct => -x.iter().zip(y).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>(),
        Metric::Cosine => {
            let (mut dot, mut nx, mut ny) = (0.0f64, 0.0f64, 0.0f64);
            for (&a, &b) in x.iter().zip(y) {
                dot += a as f64 * b as f64;
                nx += a as f64 * a as f64;
                ny += b as f64 * b as f64;
            }
            let denom = (nx * ny).sqrt();
            if denom > 0.0 {
                -dot / denom
            } else {
                0.0
            }
        }
    }
}

/// Scans all rows, keeps those passing `filter`, sorts by `(distance, id)`
/// and truncates to `k`.
pub fn ground_truth(
    vectors: &EmbeddingMatrix,
    attrs: &AttributeTable,
    q: &[f32],
    filter: &QueryFilter,
    k: usize,
    metric: Metric,
) -> Result<GroundTruthRow> {
    if q.len() != vectors.d() {
        return Err(Error::dims(vectors.d(), q.len()));
    }
    if filter.len() != attrs.l() {
        return Err(Error::dims(attrs.l(), filter.len()));
    }
    if vectors.n() != attrs.n() {
        return Err(Error::InvalidData("vector and attribute row counts differ".into()));
    }
    let mut hits: Vec<(f64, u32)> = (0..vectors.n())
        .filter(|&i| filter.matches_unchecked(attrs.row(i)))
        .map(|i| (exact_score(q, vectors.row(i), metric), i as u32))
        .collect();
    let by_score = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if hits.len() > k {
        hits.select_nth_unstable_by(k, by_score);
        hits.truncate(k);
    }
    hits.sort_unstable_by(by_score);
    Ok(GroundTruthRow {
        ids: hits.iter().map(|h| h.1).collect(),
        scores: hits.iter().map(|h| h.0).collect(),
    })
}

/// Ground truth for a whole workload, parallel over queries.
pub fn ground_truth_batch(
    vectors: &EmbeddingMatrix,
    attrs: &AttributeTable,
    queries: &EmbeddingMatrix,
    filters: &[QueryFilter],
    k: usize,
    metric: Metric,
) -> Result<GroundTruth> {
    if queries.n() != filters.len() {
        return Err(Error::InvalidData(format!(
            "{} queries but {} filters",
            queries.n(),
            filters.len()
        )));
    }
    let rows = (0..queries.n())
        .into_par_iter()
        .map(|i| ground_truth(vectors, attrs, queries.row(i), &filters[i], k, metric))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth { k, rows })
}

/// Denominator used by [`recall_at_k_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecallDenominator {
    /// Always `k`, so queries with fewer than `k` valid points cap below 1.
    #[default]
    K,
    /// `min(k, |truth|)`; 1.0 when the truth is empty.
    Truth,
}

/// `|retrieved[..k] ∩ truth| / k`.
pub fn recall_at_k(retrieved: &[u32], truth: &[u32], k: usize) -> Result<f64> {
    recall_at_k_with(retrieved, truth, k, RecallDenominator::K)
}

pub fn recall_at_k_with(retrieved: &[u32], truth: &[u32], k: usize, denominator: RecallDenominator) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("recall needs k >= 1".into()));
    }
    let truth: HashSet<u32> = truth.iter().take(k).copied().collect();
    let found: HashSet<u32> = retrieved
        .iter()
        .take(k)
        .filter(|id| truth.contains(id))
        .copied()
        .collect();
    let denom = match denominator {
        RecallDenominator::K => k,
        RecallDenominator::Truth => {
            if truth.is_empty() {
                return Ok(1.0);
            }
            truth.len().min(k)
        }
    };
    Ok(found.len() as f64 / denom as f64)
}

/// Hash of the dataset contents, used as a cache key.
pub fn dataset_hash(vectors: &EmbeddingMatrix, attrs: &AttributeTable) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(vectors.n() as u64);
    h.write_u64(vectors.d() as u64);
    for v in vectors.as_slice() {
        h.write_u32(v.to_bits());
    }
    h.write_u64(attrs.l() as u64);
    for &a in attrs.as_slice() {
        h.write_u32(a);
    }
    h.finish()
}

/// Hash of the query vectors and their filters.
pub fn workload_hash(queries: &EmbeddingMatrix, filters: &[QueryFilter]) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(queries.n() as u64);
    h.write_u64(queries.d() as u64);
    for v in queries.as_slice() {
        h.write_u32(v.to_bits());
    }
    for f in filters {
        h.write_u64(f.len() as u64);
        for &c in f.pattern() {
            h.write_u32(c);
        }
    }
    h.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub dataset: u64,
    pub workload: u64,
    pub k: usize,
    pub metric: Metric,
}

impl CacheKey {
    pub fn file_name(&self) -> String {
        format!(
            "gt-{:016x}-{:016x}-k{}-m{}.bin",
            self.dataset,
            self.workload,
            self.k,
            self.metric.to_code()
        )
    }
}

impl GroundTruth {
    pub fn to_bytes(&self, key: &CacheKey) -> Vec<u8> {
        let mut payload = Vec::new();
        for row in &self.rows {
            payload.extend_from_slice(&(row.ids.len() as u32).to_le_bytes());
            for id in &row.ids {
                payload.extend_from_slice(&id.to_le_bytes());
            }
            for s in &row.scores {
                payload.extend_from_slice(&s.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(GT_HEADER_LEN + payload.len());
        out.extend_from_slice(&GT_MAGIC);
        out.extend_from_slice(&GT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&key.dataset.to_le_bytes());
        out.extend_from_slice(&key.workload.to_le_bytes());
        out.extend_from_slice(&[key.metric.to_code(), 0, 0, 0]);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Parses a cache file and checks it was written for `key`.
    pub fn from_bytes(bytes: &[u8], key: &CacheKey) -> Result<Self> {
        if bytes.len() < GT_HEADER_LEN {
            return Err(Error::Truncated {
                needed: GT_HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let found: [u8; 4] = bytes[0..4].try_into().unwrap();
        if found != GT_MAGIC {
            return Err(Error::BadMagic {
                expected: GT_MAGIC,
                found,
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != GT_VERSION {
            return Err(Error::UnsupportedVersion(u32_at(4)));
        }
        let k = u32_at(8) as usize;
        let queries = u32_at(12) as usize;
        if u64_at(16) != key.dataset || u64_at(24) != key.workload || k != key.k || bytes[32] != key.metric.to_code() {
            return Err(Error::InvalidData("ground-truth cache key mismatch".into()));
        }
        let payload_len = u64_at(36);
        let have = (bytes.len() - GT_HEADER_LEN) as u64;
        if have < payload_len {
            return Err(Error::Truncated {
                needed: GT_HEADER_LEN as u64 + payload_len,
                found: bytes.len() as u64,
            });
        }
        if have > payload_len {
            return Err(Error::Corrupt("trailing bytes after ground truth".into()));
        }
        let payload = &bytes[GT_HEADER_LEN..];
        let computed = crc32fast::hash(payload);
        if computed != u32_at(44) {
            return Err(Error::Checksum {
                stored: u32_at(44),
                computed,
            });
        }

        let mut at = 0usize;
        let mut rows = Vec::with_capacity(queries);
        let short = || Error::Corrupt("ground-truth payload shorter than declared rows".into());
        for _ in 0..queries {
            let count_bytes = payload.get(at..at + 4).ok_or_else(short)?;
            let count = u32::from_le_bytes(count_bytes.try_into().unwrap()) as usize;
            at += 4;
            if count > k {
                return Err(Error::Corrupt("ground-truth row longer than k".into()));
            }
            let ids_bytes = payload.get(at..at + 4 * count).ok_or_else(short)?;
            at += 4 * count;
            let score_bytes = payload.get(at..at + 8 * count).ok_or_else(short)?;
            at += 8 * count;
            rows.push(GroundTruthRow {
                ids: ids_bytes
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                scores: score_bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            });
        }
        if at != payload.len() {
            return Err(Error::Corrupt("ground-truth payload longer than declared rows".into()));
        }
        Ok(Self { k, rows })
    }

    pub fn save(&self, path: impl AsRef<Path>, key: &CacheKey) -> Result<()> {
        fs::write(path, self.to_bytes(key))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, key: &CacheKey) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, key)
    }
}

/// Loads ground truth from `cache_dir` if present, otherwise computes and
/// stores it. Returns the truth and the cache file path.
pub fn cached_ground_truth(
    cache_dir: impl AsRef<Path>,
    vectors: &EmbeddingMatrix,
    attrs: &AttributeTable,
    queries: &EmbeddingMatrix,
    filters: &[QueryFilter],
    k: usize,
    metric: Metric,
) -> Result<(GroundTruth, PathBuf)> {
    let key = CacheKey {
        dataset: dataset_hash(vectors, attrs),
        workload: workload_hash(queries, filters),
        k,
        metric,
    };
    let path = cache_dir.as_ref().join(key.file_name());
    if path.exists() {
        match GroundTruth::load(&path, &key) {
            Ok(gt) if gt.rows.len() == queries.n() => return Ok((gt, path)),
            Ok(_) => log::warn!("{}: query count mismatch, recomputing", path.display()),
            Err(e) => log::warn!("{}: {e}, recomputing", path.display()),
        }
    } else {
        log::warn!("no cached ground truth at {}, computing", path.display());
    }
    let gt = ground_truth_batch(vectors, attrs, queries, filters, k, metric)?;
    fs::create_dir_all(cache_dir.as_ref())?;
    gt.save(&path, &key)?;
    Ok((gt, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::WILDCARD;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> (EmbeddingMatrix, AttributeTable) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f32> = (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<u32> = (0..n * 2)
            .map(|_| if rng.gen_bool(0.02) { 7 } else { rng.gen_range(0..3) })
            .collect();
        (EmbeddingMatrix::new(4, v).unwrap(), AttributeTable::new(2, a).unwrap())
    }

    #[test]
    fn recall_examples() {
        let a: Vec<u32> = (0..100).collect();
        let b: Vec<u32> = (100..200).collect();
        let half: Vec<u32> = (50..150).collect();
        assert_eq!(recall_at_k(&a, &a, 100).unwrap(), 1.0);
        assert_eq!(recall_at_k(&a, &b, 100).unwrap(), 0.0);
        assert_eq!(recall_at_k(&a, &half, 100).unwrap(), 0.5);
        assert!(recall_at_k(&a, &a, 0).is_err());
    }

    #[test]
    fn recall_denominators_for_short_truth() {
        let truth = [1, 2, 3];
        assert_eq!(recall_at_k(&[1, 2, 3], &truth, 10).unwrap(), 0.3);
        assert_eq!(
            recall_at_k_with(&[1, 2, 3], &truth, 10, RecallDenominator::Truth).unwrap(),
            1.0
        );
        assert_eq!(recall_at_k_with(&[], &[], 10, RecallDenominator::Truth).unwrap(), 1.0);
    }

    #[test]
    fn truncation_inactive_when_k_exceeds_matches() {
        let (v, a) = data(500, 1);
        let f = QueryFilter::new(vec![7, WILDCARD]);
        let matches = a.rows().filter(|r| r[0] == 7).count();
        let gt = ground_truth(&v, &a, &[0.0; 4], &f, 10_000, Metric::SquaredEuclidean).unwrap();
        assert_eq!(gt.ids.len(), matches);
        assert!(gt.scores.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rare_filter_matches_two_pass_reference() {
        let (v, a) = data(10_000, 2);
        let f = QueryFilter::new(vec![7, 7]);
        let q = [0.3, -0.2, 0.1, 0.0];
        let gt = ground_truth(&v, &a, &q, &f, 5, Metric::SquaredEuclidean).unwrap();

        // pass 1: matching ids; pass 2: full sort
        let ids: Vec<usize> = (0..a.n()).filter(|&i| a.row(i) == [7, 7]).collect();
        let mut scored: Vec<(f64, usize)> = ids
            .iter()
            .map(|&i| {
                let d: f64 = q.iter().zip(v.row(i)).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum();
                (d, i)
            })
            .collect();
        scored.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let want: Vec<u32> = scored.iter().take(5).map(|s| s.1 as u32).collect();
        assert_eq!(gt.ids, want);
    }

    #[test]
    fn permutation_invariance() {
        let (v, a) = data(400, 3);
        let n = v.n();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        let pv = EmbeddingMatrix::from_rows(&perm.iter().map(|&i| v.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let pa = AttributeTable::from_rows(&perm.iter().map(|&i| a.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let f = QueryFilter::new(vec![1, WILDCARD]);
        let q = [0.1, 0.1, 0.1, 0.1];
        let gt = ground_truth(&v, &a, &q, &f, 20, Metric::SquaredEuclidean).unwrap();
        let pgt = ground_truth(&pv, &pa, &q, &f, 20, Metric::SquaredEuclidean).unwrap();
        let mapped: Vec<u32> = pgt.ids.iter().map(|&i| perm[i as usize] as u32).collect();
        assert_eq!(mapped, gt.ids);
    }

    #[test]
    fn cache_round_trip_and_key_check() {
        let (v, a) = data(300, 4);
        let queries = EmbeddingMatrix::new(4, vec![0.0; 12]).unwrap();
        let filters = vec![
            QueryFilter::any(2),
            QueryFilter::new(vec![0, 1]),
            QueryFilter::new(vec![9, 9]),
        ];
        let dir = tempfile::tempdir().unwrap();
        let (gt, path) =
            cached_ground_truth(dir.path(), &v, &a, &queries, &filters, 10, Metric::SquaredEuclidean).unwrap();
        assert!(path.exists());
        assert!(gt.rows[2].ids.is_empty());
        let (again, _) =
            cached_ground_truth(dir.path(), &v, &a, &queries, &filters, 10, Metric::SquaredEuclidean).unwrap();
        assert_eq!(gt, again);

        let key = CacheKey {
            dataset: dataset_hash(&v, &a),
            workload: workload_hash(&queries, &filters),
            k: 10,
            metric: Metric::SquaredEuclidean,
        };
        let other = CacheKey { k: 11, ..key };
        assert!(GroundTruth::load(&path, &other).is_err());
        let bytes = std::fs::read(&path).unwrap();
        assert!(matches!(
            GroundTruth::from_bytes(&bytes[..bytes.len() - 1], &key),
            Err(Error::Truncated { .. })
        ));
    }
}
