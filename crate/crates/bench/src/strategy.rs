//! Query strategies compared by the experiments. All of them report work
//! through [`SearchStats`] so their costs can be put side by side.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use caps_core::distance::score;
use caps_core::{
    AttributeTable, CapsIndex, EmbeddingMatrix, Metric, QueryFilter, SearchResult, SearchStats, SubpartitionMode, TopK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Exact scan of the points passing the filter.
    FilterThenSearch,
    /// IVF over the same partitions, distances to every probed point,
    /// filter applied afterwards.
    SearchThenFilter,
    /// Sub-partition selection, filter check, distances for survivors.
    Caps,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FilterThenSearch => "filter-then-search",
            Strategy::SearchThenFilter => "search-then-filter",
            Strategy::Caps => "caps",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "filter-then-search" | "brute" => Strategy::FilterThenSearch,
            "search-then-filter" | "ivf" => Strategy::SearchThenFilter,
            "caps" => Strategy::Caps,
            _ => bail!("unknown strategy {s:?}"),
        })
    }
}

fn finish(top: TopK, stats: SearchStats) -> SearchResult {
    let (ids, scores) = top.into_sorted().into_iter().map(|n| (n.id, n.score)).unzip();
    SearchResult { ids, scores, stats }
}

/// Checks every row against the filter, then scans the survivors exactly.
pub fn filter_then_search(
    vectors: &EmbeddingMatrix,
    attrs: &AttributeTable,
    q: &[f32],
    filter: &QueryFilter,
    k: usize,
    metric: Metric,
) -> Result<SearchResult> {
    if q.len() != vectors.d() || filter.len() != attrs.l() {
        bail!("query or filter shape does not match the dataset");
    }
    let mut top = TopK::new(k);
    let mut stats = SearchStats {
        candidates_scanned: attrs.n(),
        ..SearchStats::default()
    };
    for (i, row) in attrs.rows().enumerate() {
        if filter.matches(row)? {
            stats.filter_passes += 1;
            stats.distance_computations += 1;
            top.push(i as u32, score(q, vectors.row(i), metric));
        }
    }
    Ok(finish(top, stats))
}

/// Probes partitions in centroid order, at least `min_probes` of them and
/// then further until `min_passes` points have passed the filter (or the
/// index is exhausted). `min_passes = 0` is fixed-`m` probing.
///
/// [`Strategy::SearchThenFilter`] computes a distance for every member of a
/// probed partition. [`Strategy::Caps`] runs the engine's adaptive search,
/// which scans only the selected sub-partitions and computes distances for
/// filter survivors. With a lossless `mode` both probe the same partitions
/// and return the same ids.
#[allow(clippy::too_many_arguments)]
pub fn probe(
    index: &CapsIndex,
    strategy: Strategy,
    q: &[f32],
    filter: &QueryFilter,
    k: usize,
    min_probes: usize,
    min_passes: usize,
    mode: SubpartitionMode,
) -> Result<SearchResult> {
    let b = index.partitions();
    if min_probes == 0 || min_probes > b {
        bail!("probe count {min_probes} outside 1..={b}");
    }
    match strategy {
        Strategy::FilterThenSearch => {
            return filter_then_search(index.vectors(), index.attributes(), q, filter, k, index.metric())
        }
        Strategy::Caps => return Ok(index.search_adaptive(q, filter, k, min_probes, min_passes, mode)?),
        Strategy::SearchThenFilter => {}
    }
    if filter.len() != index.attribute_count() {
        bail!(
            "filter has {} positions, index has {}",
            filter.len(),
            index.attribute_count()
        );
    }
    let order = index.model().top_m(q, if min_passes > 0 { b } else { min_probes })?;
    let (vectors, attrs, metric) = (index.vectors(), index.attributes(), index.metric());
    let mut top = TopK::new(k);
    let mut stats = SearchStats::default();
    for (probed, &p) in order.iter().enumerate() {
        if probed >= min_probes && stats.filter_passes >= min_passes {
            break;
        }
        let members = index.partition_members(p as usize);
        stats.partitions_probed += 1;
        stats.subpartitions_scanned += 1;
        stats.candidates_scanned += members.len();
        for &id in members {
            stats.distance_computations += 1;
            let s = score(q, vectors.row(id as usize), metric);
            if filter.matches(attrs.row(id as usize))? {
                stats.filter_passes += 1;
                top.push(id, s);
            }
        }
    }
    Ok(finish(top, stats))
}

/// Fixed-`m` search with the given strategy.
pub fn run(
    index: &CapsIndex,
    strategy: Strategy,
    q: &[f32],
    filter: &QueryFilter,
    k: usize,
    m: usize,
    mode: SubpartitionMode,
) -> Result<SearchResult> {
    match strategy {
        Strategy::Caps => Ok(index.search_with_mode(q, filter, k, m, mode)?),
        _ => probe(index, strategy, q, filter, k, m, 0, mode),
    }
}

/// Disjunction of conjunctive filters: one search per disjunct, merged by
/// `(score, id)` with duplicates removed. Stats are summed.
pub fn search_any(index: &CapsIndex, q: &[f32], filters: &[QueryFilter], k: usize, m: usize) -> Result<SearchResult> {
    let mut merged = Vec::new();
    let mut stats = SearchStats::default();
    for f in filters {
        let r = index.search(q, f, k, m)?;
        stats += r.stats;
        merged.extend(r.scores.into_iter().zip(r.ids));
    }
    merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut seen = HashSet::new();
    merged.retain(|&(_, id)| seen.insert(id));
    merged.truncate(k);
    let (scores, ids) = merged.into_iter().unzip();
    Ok(SearchResult { ids, scores, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use caps_core::oracle::ground_truth;
    use caps_core::{IndexConfig, WILDCARD};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn index(h: usize) -> CapsIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1500;
        let v: Vec<f32> = (0..n * 4).map(|_| rng.gen_range(0..50) as f32).collect();
        let a: Vec<u32> = (0..n * 2).map(|_| rng.gen_range(0..4)).collect();
        let config = IndexConfig {
            partitions: Some(12),
            height: h,
            ..IndexConfig::default()
        };
        CapsIndex::build(
            EmbeddingMatrix::new(4, v).unwrap(),
            AttributeTable::new(2, a).unwrap(),
            &config,
        )
        .unwrap()
    }

    #[test]
    fn strategies_agree_on_probed_partitions() {
        let idx = index(3);
        let f = QueryFilter::new(vec![1, WILDCARD]);
        for i in 0..30 {
            let q = idx.vectors().row(i * 11).to_vec();
            for m in [1, 4, 12] {
                let mode = SubpartitionMode::Covering;
                let caps = run(&idx, Strategy::Caps, &q, &f, 10, m, mode).unwrap();
                let ivf = run(&idx, Strategy::SearchThenFilter, &q, &f, 10, m, mode).unwrap();
                let probed = probe(&idx, Strategy::Caps, &q, &f, 10, m, 0, mode).unwrap();
                assert_eq!(caps.ids, ivf.ids);
                assert_eq!(caps, probed);
                assert!(caps.stats.distance_computations <= ivf.stats.distance_computations);
                assert_eq!(ivf.stats.distance_computations, ivf.stats.candidates_scanned);
            }
        }
    }

    #[test]
    fn brute_force_equals_oracle() {
        let idx = index(0);
        let f = QueryFilter::new(vec![WILDCARD, 2]);
        let q = [10.0, 20.0, 30.0, 40.0];
        let got = filter_then_search(idx.vectors(), idx.attributes(), &q, &f, 25, idx.metric()).unwrap();
        let truth = ground_truth(idx.vectors(), idx.attributes(), &q, &f, 25, idx.metric()).unwrap();
        assert_eq!(got.ids, truth.ids);
        let passing = idx.attributes().rows().filter(|r| r[1] == 2).count();
        assert_eq!(got.stats.distance_computations, passing);
    }

    #[test]
    fn probing_continues_until_pass_target() {
        let idx = index(2);
        let f = QueryFilter::new(vec![3, 3]);
        let q = [0.0; 4];
        let mode = SubpartitionMode::Covering;
        let fixed = probe(&idx, Strategy::SearchThenFilter, &q, &f, 40, 1, 0, mode).unwrap();
        let grown = probe(&idx, Strategy::SearchThenFilter, &q, &f, 40, 1, 40, mode).unwrap();
        let caps = probe(&idx, Strategy::Caps, &q, &f, 40, 1, 40, mode).unwrap();
        assert_eq!(grown.ids, caps.ids);
        assert_eq!(grown.stats.partitions_probed, caps.stats.partitions_probed);
        assert_eq!(fixed.stats.partitions_probed, 1);
        assert!(grown.stats.partitions_probed > 1);
        assert!(grown.stats.filter_passes >= 40 || grown.stats.partitions_probed == 12);
    }

    #[test]
    fn disjunction_merges_without_duplicates() {
        let idx = index(2);
        let q = [25.0; 4];
        let fs = [QueryFilter::new(vec![0, WILDCARD]), QueryFilter::new(vec![WILDCARD, 1])];
        let got = search_any(&idx, &q, &fs, 30, 12).unwrap();
        let unique: HashSet<_> = got.ids.iter().collect();
        assert_eq!(unique.len(), got.ids.len());
        let mut expected: Vec<(f32, u32)> = (0..idx.len())
            .filter(|&i| {
                let r = idx.attributes().row(i);
                r[0] == 0 || r[1] == 1
            })
            .map(|i| (score(&q, idx.vectors().row(i), idx.metric()), i as u32))
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<u32> = expected.iter().take(30).map(|e| e.1).collect();
        assert_eq!(got.ids, want);
    }
}
