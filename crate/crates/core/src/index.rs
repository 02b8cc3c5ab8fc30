//! The two-level index: partitions, per-partition AFTs, filtered search.
//!
//! Member ids live in one flat array. Every partition owns `h + 1`
//! consecutive sub-partition slots (leaves `0..h`, remainder last; unused
//! leaf slots are empty), and `ends[s]` is the exclusive end offset of slot
//! `s`. This is the same layout the index file stores.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::aft::{Aft, Slot, SubpartitionMode, TagRouter};
use crate::analysis;
use crate::distance::{score, TopK};
use crate::error::{Error, Result};
use crate::partitioner::{self, KMeansConfig, PartitionModel};
use crate::types::{AttributeTable, EmbeddingMatrix, Metric, QueryFilter, WILDCARD};

/// Upper bound on the AFT height; slot counts are stored as `u32`.
pub const MAX_HEIGHT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    /// Partition count B. `None` picks [`partitioner::default_partitions`].
    pub partitions: Option<usize>,
    /// AFT height h.
    pub height: usize,
    pub metric: Metric,
    pub kmeans: KMeansConfig,
    /// Default sub-partition selection for [`CapsIndex::search`].
    pub mode: SubpartitionMode,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            partitions: None,
            height: 4,
            metric: Metric::SquaredEuclidean,
            kmeans: KMeansConfig::default(),
            mode: SubpartitionMode::default(),
        }
    }
}

/// Work counters for one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub partitions_probed: usize,
    pub subpartitions_scanned: usize,
    /// Members pulled from the selected sub-partitions.
    pub candidates_scanned: usize,
    /// Candidates that satisfied the filter.
    pub filter_passes: usize,
    pub distance_computations: usize,
}

impl std::ops::AddAssign for SearchStats {
    fn add_assign(&mut self, o: Self) {
        self.partitions_probed += o.partitions_probed;
        self.subpartitions_scanned += o.subpartitions_scanned;
        self.candidates_scanned += o.candidates_scanned;
        self.filter_passes += o.filter_passes;
        self.distance_computations += o.distance_computations;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub ids: Vec<u32>,
    /// Lower-is-better, ascending; ties ordered by id.
    pub scores: Vec<f32>,
    pub stats: SearchStats,
}

impl SearchResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CapsIndex {
    pub(crate) model: PartitionModel,
    pub(crate) height: usize,
    pub(crate) mode: SubpartitionMode,
    pub(crate) routers: Vec<TagRouter>,
    pub(crate) ends: Vec<u32>,
    pub(crate) ids: Vec<u32>,
    pub(crate) vectors: Arc<EmbeddingMatrix>,
    pub(crate) attrs: Arc<AttributeTable>,
}

fn check_dataset(vectors: &EmbeddingMatrix, attrs: &AttributeTable) -> Result<()> {
    if vectors.n() != attrs.n() {
        return Err(Error::InvalidData(format!(
            "{} vectors but {} attribute rows",
            vectors.n(),
            attrs.n()
        )));
    }
    if vectors.n() == 0 {
        return Err(Error::EmptyIndex);
    }
    if vectors.n() > u32::MAX as usize {
        return Err(Error::InvalidData("point ids must fit in u32".into()));
    }
    Ok(())
}

impl CapsIndex {
    /// Trains the partition model, assigns every point, and builds one AFT
    /// per partition.
    pub fn build(
        vectors: impl Into<Arc<EmbeddingMatrix>>,
        attrs: impl Into<Arc<AttributeTable>>,
        config: &IndexConfig,
    ) -> Result<Self> {
        let vectors = vectors.into();
        let attrs = attrs.into();
        check_dataset(&vectors, &attrs)?;
        let b = config
            .partitions
            .unwrap_or_else(|| partitioner::default_partitions(vectors.n()));
        let model = partitioner::train(&vectors, b, config.metric, &config.kmeans)?;
        Self::build_with_model(model, vectors, attrs, config.height, config.mode)
    }

    /// Builds on an already trained partition model.
    pub fn build_with_model(
        model: PartitionModel,
        vectors: impl Into<Arc<EmbeddingMatrix>>,
        attrs: impl Into<Arc<AttributeTable>>,
        height: usize,
        mode: SubpartitionMode,
    ) -> Result<Self> {
        let vectors = vectors.into();
        let attrs = attrs.into();
        check_dataset(&vectors, &attrs)?;
        if height > MAX_HEIGHT {
            return Err(Error::InvalidConfig(format!(
                "AFT height {height} exceeds {MAX_HEIGHT}"
            )));
        }
        let assignment = model.assign_all(&vectors)?;
        let b = model.b();
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); b];
        for (id, &p) in assignment.iter().enumerate() {
            members[p as usize].push(id as u32);
        }

        let trees: Vec<(TagRouter, Vec<Vec<u32>>)> = members
            .par_iter()
            .map(|m| Aft::build(m, &attrs, height).into_parts())
            .collect();

        let slots = height + 1;
        let mut routers = Vec::with_capacity(b);
        let mut ends = Vec::with_capacity(b * slots);
        let mut ids = Vec::with_capacity(vectors.n());
        for (router, lists) in trees {
            let leaves = lists.len() - 1;
            for (j, list) in lists.iter().enumerate() {
                if j == leaves {
                    // pad unused leaf slots
                    for _ in leaves..height {
                        ends.push(ids.len() as u32);
                    }
                }
                ids.extend_from_slice(list);
                ends.push(ids.len() as u32);
            }
            routers.push(router);
        }

        Ok(Self {
            model,
            height,
            mode,
            routers,
            ends,
            ids,
            vectors,
            attrs,
        })
    }

    pub fn model(&self) -> &PartitionModel {
        &self.model
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn partitions(&self) -> usize {
        self.model.b()
    }

    pub fn metric(&self) -> Metric {
        self.model.metric()
    }

    pub fn mode(&self) -> SubpartitionMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: SubpartitionMode) {
        self.mode = mode;
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.model.d()
    }

    pub fn attribute_count(&self) -> usize {
        self.attrs.l()
    }

    pub fn vectors(&self) -> &EmbeddingMatrix {
        &self.vectors
    }

    pub fn attributes(&self) -> &AttributeTable {
        &self.attrs
    }

    pub fn shared_vectors(&self) -> Arc<EmbeddingMatrix> {
        Arc::clone(&self.vectors)
    }

    pub fn shared_attributes(&self) -> Arc<AttributeTable> {
        Arc::clone(&self.attrs)
    }

    pub fn router(&self, partition: usize) -> &TagRouter {
        &self.routers[partition]
    }

    fn slot_index(&self, partition: usize, slot: Slot) -> usize {
        let base = partition * (self.height + 1);
        match slot {
            Slot::Leaf(j) => base + j,
            Slot::Remainder => base + self.height,
        }
    }

    fn slot_range(&self, s: usize) -> Range<usize> {
        let start = if s == 0 { 0 } else { self.ends[s - 1] as usize };
        start..self.ends[s] as usize
    }

    pub fn slot_members(&self, partition: usize, slot: Slot) -> &[u32] {
        &self.ids[self.slot_range(self.slot_index(partition, slot))]
    }

    /// All members of a partition (its slots are contiguous).
    pub fn partition_members(&self, partition: usize) -> &[u32] {
        let first = self.slot_index(partition, Slot::Leaf(0));
        let last = self.slot_index(partition, Slot::Remainder);
        &self.ids[self.slot_range(first).start..self.slot_range(last).end]
    }

    /// Bytes needed per stored attribute code and tag field.
    pub fn attribute_precision(&self) -> usize {
        let max_code = self.attrs.max_code().map_or(0, |c| c as u64);
        let symbols = (max_code + 1).max(self.attrs.l() as u64) + 1;
        analysis::attribute_precision(symbols)
    }

    fn check_query(&self, q: &[f32], filter: &QueryFilter, k: usize, m: usize) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::dims(self.dim(), q.len()));
        }
        if filter.len() != self.attribute_count() {
            return Err(Error::dims(self.attribute_count(), filter.len()));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if m == 0 || m > self.partitions() {
            return Err(Error::InvalidConfig(format!(
                "probe count {m} outside 1..={}",
                self.partitions()
            )));
        }
        Ok(())
    }

    /// Filtered top-`k` search probing `m` partitions with the index's mode.
    pub fn search(&self, q: &[f32], filter: &QueryFilter, k: usize, m: usize) -> Result<SearchResult> {
        self.search_with_mode(q, filter, k, m, self.mode)
    }

    pub fn search_with_mode(
        &self,
        q: &[f32],
        filter: &QueryFilter,
        k: usize,
        m: usize,
        mode: SubpartitionMode,
    ) -> Result<SearchResult> {
        self.search_adaptive(q, filter, k, m, 0, mode)
    }

    /// Probes at least `m` partitions in centroid order, then keeps going
    /// until `min_passes` points have passed the filter or every partition
    /// has been probed. Rare filters thereby probe further than common
    /// ones. `min_passes = 0` is plain fixed-`m` search.
    pub fn search_adaptive(
        &self,
        q: &[f32],
        filter: &QueryFilter,
        k: usize,
        m: usize,
        min_passes: usize,
        mode: SubpartitionMode,
    ) -> Result<SearchResult> {
        self.check_query(q, filter, k, m)?;
        let metric = self.metric();
        let mut stats = SearchStats::default();
        let mut top = TopK::new(k);
        let mut slots = Vec::with_capacity(self.height + 1);
        let order = self
            .model
            .top_m(q, if min_passes > 0 { self.partitions() } else { m })?;
        for (probed, &p) in order.iter().enumerate() {
            if probed >= m && stats.filter_passes >= min_passes {
                break;
            }
            let p = p as usize;
            stats.partitions_probed += 1;
            slots.clear();
            self.routers[p].select_into(filter, mode, &mut slots);
            for &slot in &slots {
                let range = self.slot_range(self.slot_index(p, slot));
                stats.subpartitions_scanned += 1;
                stats.candidates_scanned += range.len();
                // attribute match first, distance only for survivors
                for &id in &self.ids[range] {
                    if filter.matches_unchecked(self.attrs.row(id as usize)) {
                        stats.filter_passes += 1;
                        stats.distance_computations += 1;
                        top.push(id, score(q, self.vectors.row(id as usize), metric));
                    }
                }
            }
        }
        let (ids, scores) = top.into_sorted().into_iter().map(|n| (n.id, n.score)).unzip();
        Ok(SearchResult { ids, scores, stats })
    }

    /// The candidate set R(q): every member of the sub-partitions a query
    /// would scan, in scan order.
    pub fn candidates(&self, q: &[f32], filter: &QueryFilter, m: usize, mode: SubpartitionMode) -> Result<Vec<u32>> {
        self.check_query(q, filter, 1, m)?;
        let mut out = Vec::new();
        let mut slots = Vec::new();
        for p in self.model.top_m(q, m)? {
            let p = p as usize;
            slots.clear();
            self.routers[p].select_into(filter, mode, &mut slots);
            for &slot in &slots {
                out.extend_from_slice(self.slot_members(p, slot));
            }
        }
        Ok(out)
    }

    /// Appends a point and routes it to its nearest partition and the
    /// earliest leaf whose tag it carries. Centroids and tags stay fixed.
    pub fn insert(&mut self, x: &[f32], attrs: &[u32]) -> Result<u32> {
        if x.len() != self.dim() {
            return Err(Error::dims(self.dim(), x.len()));
        }
        if attrs.len() != self.attribute_count() {
            return Err(Error::dims(self.attribute_count(), attrs.len()));
        }
        if attrs.contains(&WILDCARD) {
            return Err(Error::InvalidData("wildcard code in data attributes".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in inserted vector".into()));
        }
        if self.len() >= u32::MAX as usize - 1 {
            return Err(Error::InvalidData("point ids must fit in u32".into()));
        }
        let id = self.vectors.n() as u32;
        Arc::make_mut(&mut self.vectors).push_row(x)?;
        Arc::make_mut(&mut self.attrs).push_row(attrs)?;

        let p = self.model.assign(x)? as usize;
        let slot = self.routers[p].route(attrs);
        let s = self.slot_index(p, slot);
        let at = self.ends[s] as usize;
        self.ids.insert(at, id);
        self.ends[s..].iter_mut().for_each(|e| *e += 1);
        Ok(id)
    }

    /// Verifies the structural invariants: the flat id array is a
    /// permutation of `0..N`, slot offsets are consistent, every leaf member
    /// carries its leaf's tag and none of the earlier leaves' tags, and no
    /// remainder member carries any tag of its tree.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.vectors.n();
        let slots = self.height + 1;
        let bad = |msg: String| Err(Error::Corrupt(msg));
        if self.attrs.n() != n || self.ids.len() != n {
            return bad(format!(
                "{} vectors, {} attribute rows, {} indexed ids",
                n,
                self.attrs.n(),
                self.ids.len()
            ));
        }
        if self.ends.len() != self.partitions() * slots || self.routers.len() != self.partitions() {
            return bad("slot table size disagrees with B(h+1)".into());
        }
        if self.ends.windows(2).any(|w| w[0] > w[1]) || self.ends.last().map(|&e| e as usize) != Some(n) {
            return bad("slot offsets are not a monotone cover of the id array".into());
        }
        let mut seen = vec![false; n];
        for &id in &self.ids {
            let Some(flag) = seen.get_mut(id as usize) else {
                return bad(format!("id {id} out of range"));
            };
            if std::mem::replace(flag, true) {
                return bad(format!("id {id} indexed twice"));
            }
        }
        for (p, router) in self.routers.iter().enumerate() {
            let tags = router.tags();
            if tags.len() > self.height {
                return bad(format!("partition {p} has more than h tags"));
            }
            if tags.iter().any(|t| t.position as usize >= self.attrs.l()) {
                return bad(format!("partition {p} has a tag beyond the attribute count"));
            }
            for j in 0..self.height {
                let members = self.slot_members(p, Slot::Leaf(j));
                if j >= tags.len() {
                    if !members.is_empty() {
                        return bad(format!("untagged leaf slot {j} of partition {p} is not empty"));
                    }
                    continue;
                }
                for &id in members {
                    let row = self.attrs.row(id as usize);
                    if !tags[j].is_in(row) || tags[..j].iter().any(|t| t.is_in(row)) {
                        return bad(format!("point {id} misplaced in leaf {j} of partition {p}"));
                    }
                }
            }
            for &id in self.slot_members(p, Slot::Remainder) {
                if tags.iter().any(|t| t.is_in(self.attrs.row(id as usize))) {
                    return bad(format!("remainder point {id} of partition {p} carries a tag"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, d: usize, l: usize, card: u32, seed: u64) -> (EmbeddingMatrix, AttributeTable) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f32> = (0..n * d).map(|_| rng.gen_range(0..64) as f32).collect();
        let a: Vec<u32> = (0..n * l)
            .map(|_| {
                // skewed: value 0 about half the time
                if rng.gen_bool(0.5) {
                    0
                } else {
                    rng.gen_range(0..card)
                }
            })
            .collect();
        (EmbeddingMatrix::new(d, v).unwrap(), AttributeTable::new(l, a).unwrap())
    }

    fn config(b: usize, h: usize) -> IndexConfig {
        IndexConfig {
            partitions: Some(b),
            height: h,
            ..Default::default()
        }
    }

    #[test]
    fn build_keeps_invariants() {
        let (v, a) = dataset(5_000, 8, 3, 6, 1);
        let index = CapsIndex::build(v, a, &config(16, 3)).unwrap();
        index.check_invariants().unwrap();
        assert_eq!(index.len(), 5_000);
        let total: usize = (0..16).map(|p| index.partition_members(p).len()).sum();
        assert_eq!(total, 5_000);
    }

    #[test]
    fn empty_and_mismatched_datasets_rejected() {
        let v = EmbeddingMatrix::new(2, vec![]).unwrap();
        let a = AttributeTable::new(1, vec![]).unwrap();
        assert!(matches!(CapsIndex::build(v, a, &config(1, 1)), Err(Error::EmptyIndex)));
        let v = EmbeddingMatrix::new(2, vec![0.0; 4]).unwrap();
        let a = AttributeTable::new(1, vec![0]).unwrap();
        assert!(matches!(
            CapsIndex::build(v, a, &config(1, 1)),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn height_zero_scans_whole_partitions() {
        let (v, a) = dataset(2_000, 4, 2, 4, 2);
        let index = CapsIndex::build(v, a, &config(8, 0)).unwrap();
        let q = index.vectors().row(0).to_vec();
        let f = QueryFilter::new(vec![0, WILDCARD]);
        let r = index.search(&q, &f, 10, 2).unwrap();
        let top = index.model().top_m(&q, 2).unwrap();
        let expected: usize = top.iter().map(|&p| index.partition_members(p as usize).len()).sum();
        assert_eq!(r.stats.candidates_scanned, expected);
        assert_eq!(r.stats.subpartitions_scanned, 2);
    }

    #[test]
    fn single_partition_scans_selected_slots_only() {
        let (v, a) = dataset(1_000, 4, 1, 3, 3);
        let index = CapsIndex::build(v, a, &config(1, 2)).unwrap();
        let q = vec![0.0; 4];
        let f = QueryFilter::new(vec![0]);
        let r = index.search(&q, &f, 5, 1).unwrap();
        let leaf = index.router(0).leaf_for(crate::Tag::new(0, 0)).unwrap();
        assert_eq!(
            r.stats.candidates_scanned,
            index.slot_members(0, Slot::Leaf(leaf)).len()
        );
    }

    #[test]
    fn search_argument_errors() {
        let (v, a) = dataset(500, 4, 2, 3, 4);
        let index = CapsIndex::build(v, a, &config(4, 1)).unwrap();
        let f = QueryFilter::any(2);
        assert!(index.search(&[0.0; 4], &f, 0, 1).is_err());
        assert!(index.search(&[0.0; 4], &f, 1, 0).is_err());
        assert!(index.search(&[0.0; 4], &f, 1, 5).is_err());
        assert!(index.search(&[0.0; 3], &f, 1, 1).is_err());
        assert!(index.search(&[0.0; 4], &QueryFilter::any(3), 1, 1).is_err());
    }

    #[test]
    fn unsatisfiable_filter_computes_no_distances() {
        let (v, a) = dataset(1_000, 4, 2, 3, 5);
        let index = CapsIndex::build(v, a, &config(4, 2)).unwrap();
        let r = index.search(&[0.0; 4], &QueryFilter::new(vec![99, 99]), 10, 4).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.stats.distance_computations, 0);
    }

    #[test]
    fn unfiltered_exhaustive_equals_exact_knn() {
        let (v, a) = dataset(3_000, 8, 2, 5, 6);
        let index = CapsIndex::build(v, a, &config(8, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..20 {
            let q: Vec<f32> = (0..8).map(|_| rng.gen_range(0..64) as f32).collect();
            let f = QueryFilter::any(2);
            let got = index.search(&q, &f, 25, 8).unwrap();
            let want = oracle::ground_truth(
                index.vectors(),
                index.attributes(),
                &q,
                &f,
                25,
                Metric::SquaredEuclidean,
            )
            .unwrap();
            assert_eq!(got.ids, want.ids);
        }
    }

    #[test]
    fn insert_self_retrieval_and_leaf_growth() {
        let (v, a) = dataset(2_000, 4, 2, 4, 7);
        let mut index = CapsIndex::build(v, a, &config(8, 3)).unwrap();
        let x = [13.0, 7.0, 21.0, 5.5];
        let p = index.model().assign(&x).unwrap() as usize;
        let tag = index.router(p).tags()[0];
        let mut row = vec![3, 3];
        row[tag.position as usize] = tag.value;
        let before = index.slot_members(p, Slot::Leaf(0)).len();

        let id = index.insert(&x, &row).unwrap();
        assert_eq!(id, 2_000);
        assert_eq!(index.slot_members(p, Slot::Leaf(0)).len(), before + 1);
        index.check_invariants().unwrap();

        let r = index.search(&x, &QueryFilter::new(row), 5, 8).unwrap();
        assert_eq!(r.ids[0], id);
        assert_eq!(r.scores[0], 0.0);
    }

    #[test]
    fn insert_rejects_wildcard_and_bad_dims() {
        let (v, a) = dataset(200, 4, 2, 4, 8);
        let mut index = CapsIndex::build(v, a, &config(2, 1)).unwrap();
        assert!(matches!(
            index.insert(&[0.0; 4], &[0, WILDCARD]),
            Err(Error::InvalidData(_))
        ));
        assert!(index.insert(&[0.0; 3], &[0, 0]).is_err());
        assert!(index.insert(&[0.0; 4], &[0]).is_err());
        assert_eq!(index.len(), 200);
        index.check_invariants().unwrap();
    }

    #[test]
    fn inserts_into_untagged_partition_land_in_remainder() {
        // partition 1 starts empty: its tree has no tags
        let v = EmbeddingMatrix::from_rows(&[[0.0f32], [0.1], [0.2]]).unwrap();
        let a = AttributeTable::from_rows(&[[1u32], [1], [2]]).unwrap();
        let centroids = EmbeddingMatrix::from_rows(&[[0.0f32], [100.0]]).unwrap();
        let model = PartitionModel::from_centroids(centroids, Metric::SquaredEuclidean, None).unwrap();
        let mut index = CapsIndex::build_with_model(model, v, a, 2, SubpartitionMode::Covering).unwrap();
        assert_eq!(index.router(1).leaf_count(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000 {
            let x = [rng.gen_range(90.0..110.0f32)];
            index.insert(&x, &[rng.gen_range(0..5)]).unwrap();
        }
        assert_eq!(index.slot_members(1, Slot::Remainder).len(), 1_000);
        index.check_invariants().unwrap();
    }

    #[test]
    fn candidates_match_scan_counter() {
        let (v, a) = dataset(3_000, 4, 3, 4, 9);
        let index = CapsIndex::build(v, a, &config(16, 4)).unwrap();
        let q = [10.0, 20.0, 30.0, 40.0];
        let f = QueryFilter::new(vec![0, WILDCARD, 1]);
        for mode in [
            SubpartitionMode::Literal,
            SubpartitionMode::Covering,
            SubpartitionMode::Exhaustive,
        ] {
            let c = index.candidates(&q, &f, 5, mode).unwrap();
            let r = index.search_with_mode(&q, &f, 10, 5, mode).unwrap();
            assert_eq!(c.len(), r.stats.candidates_scanned);
        }
    }

    #[test]
    fn adaptive_probing_reaches_pass_target() {
        let (v, a) = dataset(3_000, 4, 2, 6, 5);
        let index = CapsIndex::build(v, a, &config(16, 2)).unwrap();
        let q = [0.0; 4];
        let rare = QueryFilter::new(vec![5, 5]);
        let fixed = index
            .search_adaptive(&q, &rare, 10, 2, 0, SubpartitionMode::Covering)
            .unwrap();
        assert_eq!(fixed, index.search(&q, &rare, 10, 2).unwrap());
        let grown = index
            .search_adaptive(&q, &rare, 10, 2, 40, SubpartitionMode::Covering)
            .unwrap();
        assert!(grown.stats.partitions_probed > 2);
        assert!(grown.stats.filter_passes >= 40 || grown.stats.partitions_probed == 16);
        // the probed partitions are a prefix of the centroid order
        let m = grown.stats.partitions_probed;
        assert_eq!(grown, index.search(&q, &rare, 10, m).unwrap());
    }
}
