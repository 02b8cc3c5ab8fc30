//! Sparsity sweep over a single i.i.d. binary attribute: the cost of
//! reaching a recall floor for filter-then-search, search-then-filter and
//! CAPS. Filter-then-search wins at low sparsity, search-then-filter at
//! high sparsity; the region in between is where both are expensive.
//!
//! Both IVF strategies probe partitions in centroid order, at least `m` of
//! them and further until `k` points pass the filter. For each strategy the
//! smallest `m` whose mean recall reaches the floor is found by bisection
//! (recall is non-decreasing in `m` because probed sets are nested).

use std::sync::Arc;

use anyhow::{ensure, Result};
use caps_core::oracle::{ground_truth_batch, GroundTruth};
use caps_core::partitioner::{self, KMeansConfig};
use caps_core::{AttributeTable, CapsIndex, EmbeddingMatrix, Metric, QueryFilter, SubpartitionMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::strategy::{self, Strategy};
use crate::sweep::mean_recall;

#[derive(Debug, Clone)]
pub struct UnhappySpec {
    pub sparsities: Vec<f64>,
    pub recall_floor: f64,
    pub k: usize,
    /// `None` picks the default partition count for N.
    pub partitions: Option<usize>,
    pub height: usize,
    pub metric: Metric,
    pub kmeans: KMeansConfig,
    pub seed: u64,
}

impl Default for UnhappySpec {
    fn default() -> Self {
        Self {
            sparsities: vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.9],
            recall_floor: 0.95,
            k: 10,
            partitions: None,
            height: 1,
            metric: Metric::SquaredEuclidean,
            kmeans: KMeansConfig::default(),
            seed: 7,
        }
    }
}

/// Cost of one strategy at one sparsity. `None` fields mean the floor was
/// not reachable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyCost {
    pub distance_computations: Option<f64>,
    pub m: Option<usize>,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnhappyRow {
    pub sparsity: f64,
    /// Observed fraction of points carrying the filtered value.
    pub matching_fraction: f64,
    pub filter_then_search: StrategyCost,
    pub search_then_filter: StrategyCost,
    pub caps: StrategyCost,
}

impl UnhappyRow {
    pub fn reachable(&self) -> bool {
        self.filter_then_search.distance_computations.is_some()
            && self.search_then_filter.distance_computations.is_some()
            && self.caps.distance_computations.is_some()
    }
}

/// One binary attribute, 1 with probability `sparsity`.
pub fn binary_attributes(n: usize, sparsity: f64, seed: u64) -> Result<AttributeTable> {
    ensure!((0.0..=1.0).contains(&sparsity), "sparsity {sparsity} outside [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = (0..n).map(|_| rng.gen_bool(sparsity) as u32).collect();
    Ok(AttributeTable::new(1, codes)?)
}

struct Costed {
    recall: f64,
    distance_computations: f64,
}

fn evaluate(
    index: &CapsIndex,
    strat: Strategy,
    queries: &EmbeddingMatrix,
    filter: &QueryFilter,
    truth: &GroundTruth,
    k: usize,
    m: usize,
) -> Result<Costed> {
    let results = queries
        .rows()
        .map(|q| strategy::probe(index, strat, q, filter, k, m, k, SubpartitionMode::Covering))
        .collect::<Result<Vec<_>>>()?;
    let dist: usize = results.iter().map(|r| r.stats.distance_computations).sum();
    Ok(Costed {
        recall: mean_recall(&results, truth, k)?,
        distance_computations: dist as f64 / queries.n().max(1) as f64,
    })
}

/// Smallest `m` reaching `floor`, by bisection over `1..=B`.
fn cheapest(
    index: &CapsIndex,
    strat: Strategy,
    queries: &EmbeddingMatrix,
    filter: &QueryFilter,
    truth: &GroundTruth,
    k: usize,
    floor: f64,
) -> Result<StrategyCost> {
    let b = index.partitions();
    let top = evaluate(index, strat, queries, filter, truth, k, b)?;
    if top.recall < floor {
        return Ok(StrategyCost {
            distance_computations: None,
            m: None,
            recall: top.recall,
        });
    }
    let (mut lo, mut hi, mut best) = (1, b, top);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let c = evaluate(index, strat, queries, filter, truth, k, mid)?;
        if c.recall >= floor {
            hi = mid;
            best = c;
        } else {
            lo = mid + 1;
        }
    }
    Ok(StrategyCost {
        distance_computations: Some(best.distance_computations),
        m: Some(hi),
        recall: best.recall,
    })
}

pub fn run_unhappy_middle(
    vectors: Arc<EmbeddingMatrix>,
    queries: &EmbeddingMatrix,
    spec: &UnhappySpec,
) -> Result<Vec<UnhappyRow>> {
    ensure!(!spec.sparsities.is_empty(), "empty sparsity grid");
    ensure!(spec.k >= 1, "k must be at least 1");
    let n = vectors.n();
    let b = spec.partitions.unwrap_or_else(|| partitioner::default_partitions(n));
    let model = partitioner::train(&vectors, b, spec.metric, &spec.kmeans)?;
    let filter = QueryFilter::new(vec![1]);
    let filters = vec![filter.clone(); queries.n()];
    let mut rows = Vec::with_capacity(spec.sparsities.len());
    for (i, &s) in spec.sparsities.iter().enumerate() {
        let attrs = Arc::new(binary_attributes(n, s, spec.seed.wrapping_add(i as u64))?);
        let matching = attrs.as_slice().iter().filter(|&&c| c == 1).count();
        let truth = ground_truth_batch(&vectors, &attrs, queries, &filters, spec.k, spec.metric)?;
        let index = CapsIndex::build_with_model(
            model.clone(),
            vectors.clone(),
            attrs.clone(),
            spec.height,
            SubpartitionMode::Covering,
        )?;

        let brute = queries
            .rows()
            .map(|q| strategy::filter_then_search(&vectors, &attrs, q, &filter, spec.k, spec.metric))
            .collect::<Result<Vec<_>>>()?;
        let fts_recall = mean_recall(&brute, &truth, spec.k)?;
        let fts_cost =
            brute.iter().map(|r| r.stats.distance_computations).sum::<usize>() as f64 / queries.n().max(1) as f64;

        let row = UnhappyRow {
            sparsity: s,
            matching_fraction: matching as f64 / n as f64,
            filter_then_search: StrategyCost {
                distance_computations: (fts_recall >= spec.recall_floor).then_some(fts_cost),
                m: None,
                recall: fts_recall,
            },
            search_then_filter: cheapest(
                &index,
                Strategy::SearchThenFilter,
                queries,
                &filter,
                &truth,
                spec.k,
                spec.recall_floor,
            )?,
            caps: cheapest(
                &index,
                Strategy::Caps,
                queries,
                &filter,
                &truth,
                spec.k,
                spec.recall_floor,
            )?,
        };
        log::info!(
            "sparsity {s}: fts {:?} stf {:?} caps {:?}",
            row.filter_then_search.distance_computations,
            row.search_then_filter.distance_computations,
            row.caps.distance_computations
        );
        rows.push(row);
    }
    Ok(rows)
}

/// Adjacent grid points `(i, i + 1)` where the two baseline curves change
/// order, i.e. where they cross.
pub fn crossings(rows: &[UnhappyRow]) -> Vec<(usize, usize)> {
    let sign = |r: &UnhappyRow| match (
        r.filter_then_search.distance_computations,
        r.search_then_filter.distance_computations,
    ) {
        (Some(a), Some(b)) => Some(a < b),
        (Some(_), None) => Some(true),
        (None, Some(_)) => Some(false),
        (None, None) => None,
    };
    (1..rows.len())
        .filter(|&i| matches!((sign(&rows[i - 1]), sign(&rows[i])), (Some(a), Some(b)) if a != b))
        .map(|i| (i - 1, i))
        .collect()
}

pub fn write_csv(path: &std::path::Path, rows: &[UnhappyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "sparsity",
        "matching_fraction",
        "fts_distance_computations",
        "fts_recall",
        "stf_distance_computations",
        "stf_m",
        "stf_recall",
        "caps_distance_computations",
        "caps_m",
        "caps_recall",
    ])?;
    let opt = |v: Option<f64>| v.map_or("unreachable".to_string(), |v| format!("{v:.1}"));
    let optm = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.sparsity.to_string(),
            format!("{:.6}", r.matching_fraction),
            opt(r.filter_then_search.distance_computations),
            format!("{:.4}", r.filter_then_search.recall),
            opt(r.search_then_filter.distance_computations),
            optm(r.search_then_filter.m),
            format!("{:.4}", r.search_then_filter.recall),
            opt(r.caps.distance_computations),
            optm(r.caps.m),
            format!("{:.4}", r.caps.recall),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use caps_core::datagen::MixtureSpec;

    fn data() -> (Arc<EmbeddingMatrix>, EmbeddingMatrix) {
        let mix = MixtureSpec {
            d: 8,
            clusters: 30,
            center_scale: 60.0,
            spread: 6.0,
            quantize: true,
            intrinsic_dim: 0,
            seed: 1,
        };
        (Arc::new(mix.sample(4000, 0).unwrap()), mix.sample(30, 9).unwrap())
    }

    #[test]
    fn binary_attribute_frequency() {
        let t = binary_attributes(100_000, 0.2, 1).unwrap();
        let ones = t.as_slice().iter().filter(|&&c| c == 1).count() as f64;
        // 3 sigma of Binomial(1e5, 0.2)
        assert!((ones - 20_000.0).abs() < 3.0 * (100_000.0f64 * 0.2 * 0.8).sqrt());
        assert!(binary_attributes(10, 1.5, 0).is_err());
    }

    #[test]
    fn endpoints_behave() {
        let (v, q) = data();
        let spec = UnhappySpec {
            sparsities: vec![0.003, 1.0],
            partitions: Some(32),
            ..UnhappySpec::default()
        };
        let rows = run_unhappy_middle(v.clone(), &q, &spec).unwrap();
        // all points match: search-then-filter is plain k-NN, and CAPS
        // computes exactly the same distances
        let full = &rows[1];
        assert_eq!(full.matching_fraction, 1.0);
        assert_eq!(full.search_then_filter.m, full.caps.m);
        assert_eq!(
            full.search_then_filter.distance_computations,
            full.caps.distance_computations
        );
        // brute force over a tiny D_C
        let sparse = &rows[0];
        let dc = sparse.matching_fraction * 4000.0;
        assert_eq!(sparse.filter_then_search.distance_computations, Some(dc));
        assert!(sparse.caps.distance_computations.unwrap() <= dc);
    }
}
