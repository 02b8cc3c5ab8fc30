//! Recall/QPS sweeps over index configurations.
//!
//! Each `(B, h)` pair is built once (with a partition model shared across
//! heights), then every probe count `m` runs the whole workload on the
//! calling thread after an untimed warmup. One CSV row is emitted per
//! `(config, strategy, m, survivor target)`; counters are per-query means.

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use caps_core::analysis::{estimate_index_size, CostModelParams};
use caps_core::datagen::QueryWorkload;
use caps_core::oracle::{recall_at_k_with, GroundTruth, RecallDenominator};
use caps_core::partitioner::{self, KMeansConfig};
use caps_core::{CapsIndex, Metric, SearchResult, SearchStats, SubpartitionMode};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::strategy::{self, Strategy};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub partitions: Vec<usize>,
    pub heights: Vec<usize>,
    /// Probe counts; `None` means every power of two up to B, then B.
    pub probes: Option<Vec<usize>>,
    /// Filter-pass targets for adaptive probing: probe at least `m`
    /// partitions, then continue until this many points pass the filter.
    /// 0 is fixed-`m` probing.
    pub survivors: Vec<usize>,
    pub mode: SubpartitionMode,
    pub metric: Metric,
    pub kmeans: KMeansConfig,
    pub k: usize,
    pub warmup: usize,
    /// Strategies measured besides CAPS. Search-then-filter rows are
    /// emitted once per B (it ignores h); filter-then-search once overall.
    pub baselines: Vec<Strategy>,
    /// Configs whose estimated index size exceeds this are skipped.
    pub memory_budget_bytes: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            partitions: vec![64],
            heights: vec![0, 4],
            probes: None,
            survivors: vec![0],
            mode: SubpartitionMode::default(),
            metric: Metric::SquaredEuclidean,
            kmeans: KMeansConfig::default(),
            k: 100,
            warmup: 100,
            baselines: Vec::new(),
            memory_budget_bytes: 8 << 30,
        }
    }
}

/// One CSV row. Field order is the frozen column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_id: String,
    pub strategy: String,
    pub mode: String,
    pub b: usize,
    pub h: usize,
    pub m: usize,
    pub absence: f64,
    pub recall: f64,
    pub mean_latency_us: f64,
    pub qps: f64,
    pub candidates_scanned: f64,
    pub filter_passes: f64,
    pub distance_computations: f64,
    pub index_overhead_bytes: u64,
    pub build_seconds: f64,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub config_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata {
    pub schema_version: u32,
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub queries: usize,
    pub k: usize,
    pub absence: f64,
    pub metric: String,
    pub build_threads: usize,
    pub query_threads: usize,
    pub warmup_queries: usize,
    pub recall_denominator: String,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
    /// Per row, the ids returned for each query, in workload order.
    pub results: Vec<Vec<Vec<u32>>>,
}

/// Outcome of timing one strategy over a workload.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub results: Vec<SearchResult>,
    pub total: SearchStats,
    pub seconds: f64,
}

/// Runs `search` for every query, timing only the pass after `warmup`
/// untimed queries.
pub fn measure(
    workload: &QueryWorkload,
    warmup: usize,
    mut search: impl FnMut(&[f32], &caps_core::QueryFilter) -> Result<SearchResult>,
) -> Result<Measurement> {
    let n = workload.len();
    if n > 0 {
        for i in 0..warmup {
            search(workload.queries.row(i % n), &workload.filters[i % n])?;
        }
    }
    let mut results = Vec::with_capacity(n);
    let mut total = SearchStats::default();
    let start = Instant::now();
    for (q, f) in workload.queries.rows().zip(&workload.filters) {
        let r = search(q, f)?;
        total += r.stats;
        results.push(r);
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(Measurement {
        results,
        total,
        seconds,
    })
}

/// Mean recall of `results` against the ground truth. Queries with fewer
/// than `k` valid points are scored against the points that exist.
pub fn mean_recall(results: &[SearchResult], truth: &GroundTruth, k: usize) -> Result<f64> {
    ensure!(
        results.len() == truth.rows.len(),
        "result and ground-truth counts differ"
    );
    if results.is_empty() {
        return Ok(1.0);
    }
    let mut sum = 0.0;
    for (r, t) in results.iter().zip(&truth.rows) {
        sum += recall_at_k_with(&r.ids, &t.ids, k, RecallDenominator::Truth)?;
    }
    Ok(sum / results.len() as f64)
}

fn probe_grid(spec: &SweepSpec, b: usize) -> Vec<usize> {
    match &spec.probes {
        Some(ms) => {
            let mut ms: Vec<usize> = ms.iter().copied().filter(|&m| m >= 1 && m <= b).collect();
            ms.sort_unstable();
            ms.dedup();
            ms
        }
        None => {
            let mut ms: Vec<usize> = std::iter::successors(Some(1usize), |m| Some(m * 2))
                .take_while(|&m| m < b)
                .collect();
            ms.push(b);
            ms
        }
    }
}

struct RowContext<'a> {
    config_id: String,
    strategy: Strategy,
    mode: &'a str,
    b: usize,
    h: usize,
    overhead: u64,
    build_seconds: f64,
}

fn row(ctx: &RowContext, (m, survivors): (usize, usize), absence: f64, recall: f64, meas: &Measurement) -> SweepRow {
    let q = meas.results.len().max(1) as f64;
    SweepRow {
        config_id: ctx.config_id.clone(),
        strategy: ctx.strategy.name().to_string(),
        mode: ctx.mode.to_string(),
        b: ctx.b,
        h: ctx.h,
        m,
        absence,
        recall,
        mean_latency_us: meas.seconds * 1e6 / q,
        qps: if meas.seconds > 0.0 {
            meas.results.len() as f64 / meas.seconds
        } else {
            f64::INFINITY
        },
        candidates_scanned: meas.total.candidates_scanned as f64 / q,
        filter_passes: meas.total.filter_passes as f64 / q,
        distance_computations: meas.total.distance_computations as f64 / q,
        index_overhead_bytes: ctx.overhead,
        build_seconds: ctx.build_seconds,
        survivors,
    }
}

/// Runs the sweep. `truth` must come from the oracle for this workload.
pub fn run_sweep(
    dataset: &Dataset,
    workload: &QueryWorkload,
    truth: &GroundTruth,
    spec: &SweepSpec,
) -> Result<SweepOutput> {
    ensure!(
        !spec.partitions.is_empty() && !spec.heights.is_empty(),
        "empty sweep grid"
    );
    ensure!(
        truth.k >= spec.k,
        "ground truth has k = {}, sweep needs {}",
        truth.k,
        spec.k
    );
    ensure!(
        truth.rows.len() == workload.len(),
        "ground truth does not match the workload"
    );
    let (n, d, l) = (dataset.n(), dataset.vectors.d(), dataset.attrs.l());
    let absence = workload.absence_fraction;
    let mode_name = spec.mode.to_string();
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    let mut survivors = spec.survivors.clone();
    survivors.sort_unstable();
    survivors.dedup();
    if survivors.is_empty() {
        survivors.push(0);
    }

    let mut push = |row: SweepRow, meas: Measurement, rows: &mut Vec<SweepRow>| {
        results.push(meas.results.into_iter().map(|r| r.ids).collect());
        rows.push(row);
    };

    if spec.baselines.contains(&Strategy::FilterThenSearch) {
        let meas = measure(workload, spec.warmup, |q, f| {
            strategy::filter_then_search(&dataset.vectors, &dataset.attrs, q, f, spec.k, spec.metric)
        })?;
        let recall = mean_recall(&meas.results, truth, spec.k)?;
        let ctx = RowContext {
            config_id: "brute".into(),
            strategy: Strategy::FilterThenSearch,
            mode: "none",
            b: 0,
            h: 0,
            overhead: 0,
            build_seconds: 0.0,
        };
        push(row(&ctx, (0, 0), absence, recall, &meas), meas, &mut rows);
    }

    for &b in &spec.partitions {
        let max_h = spec.heights.iter().copied().max().unwrap_or(0);
        let shape = |h: usize| CostModelParams {
            n: n as u64,
            d: d as u64,
            l: l as u64,
            b: b as u64,
            m: 1,
            h: h as u64,
            gamma: 0.0,
            r: 4,
            k_total_values: 1 << 24,
        };
        if b == 0 || b > n {
            skipped.push(Skipped {
                config_id: format!("B{b}"),
                reason: format!("B must be in 1..={n}"),
            });
            continue;
        }
        let need = estimate_index_size(&shape(max_h), true);
        if need > spec.memory_budget_bytes {
            skipped.push(Skipped {
                config_id: format!("B{b}"),
                reason: format!("estimated {need} bytes exceeds budget {}", spec.memory_budget_bytes),
            });
            continue;
        }
        let start = Instant::now();
        let model = partitioner::train(&dataset.vectors, b, spec.metric, &spec.kmeans)
            .with_context(|| format!("training B = {b}"))?;
        let train_seconds = start.elapsed().as_secs_f64();
        let probes = probe_grid(spec, b);

        for &h in &spec.heights {
            let config_id = format!("B{b}-h{h}");
            let start = Instant::now();
            let index = CapsIndex::build_with_model(
                model.clone(),
                dataset.vectors.clone(),
                dataset.attrs.clone(),
                h,
                spec.mode,
            );
            let index = match index {
                Ok(i) => i,
                Err(e) => {
                    skipped.push(Skipped {
                        config_id,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let build_seconds = train_seconds + start.elapsed().as_secs_f64();
            let overhead = index.to_bytes(false).len() as u64 - caps_core::io::HEADER_LEN as u64;
            log::info!("{config_id}: built in {build_seconds:.2}s, overhead {overhead} bytes");

            let mut strategies = vec![Strategy::Caps];
            if h == spec.heights[0] && spec.baselines.contains(&Strategy::SearchThenFilter) {
                strategies.push(Strategy::SearchThenFilter);
            }
            for strat in strategies {
                let ctx = RowContext {
                    config_id: if strat == Strategy::Caps {
                        config_id.clone()
                    } else {
                        format!("B{b}-ivf")
                    },
                    strategy: strat,
                    mode: if strat == Strategy::Caps { &mode_name } else { "none" },
                    b,
                    h: if strat == Strategy::Caps { h } else { 0 },
                    overhead,
                    build_seconds,
                };
                for &m in &probes {
                    for &s in &survivors {
                        let meas = measure(workload, spec.warmup, |q, f| {
                            strategy::probe(&index, strat, q, f, spec.k, m, s, spec.mode)
                        })?;
                        let recall = mean_recall(&meas.results, truth, spec.k)?;
                        push(row(&ctx, (m, s), absence, recall, &meas), meas, &mut rows);
                    }
                }
            }
        }
    }

    let metadata = SweepMetadata {
        schema_version: SCHEMA_VERSION,
        dataset: dataset.name.clone(),
        n,
        d,
        l,
        queries: workload.len(),
        k: spec.k,
        absence,
        metric: spec.metric.to_string(),
        build_threads: rayon::current_num_threads(),
        query_threads: 1,
        warmup_queries: spec.warmup,
        recall_denominator: "min(k, |valid points|)".into(),
        skipped,
    };
    Ok(SweepOutput {
        rows,
        metadata,
        results,
    })
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_metadata(path: &Path, meta: &SweepMetadata) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(f, meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use caps_core::datagen::{gen_workload, AttributeSpec, MixtureSpec};
    use caps_core::oracle::ground_truth_batch;

    fn fixture(absence: f64) -> (Dataset, QueryWorkload, GroundTruth) {
        let mix = MixtureSpec {
            d: 8,
            clusters: 12,
            center_scale: 60.0,
            spread: 5.0,
            quantize: true,
            intrinsic_dim: 0,
            seed: 8,
        };
        let spec = AttributeSpec::default_l3();
        let ds = Dataset::synthetic(2000, &mix, &spec).unwrap();
        let w = gen_workload(mix.sample(40, 5).unwrap(), &spec, absence, 1).unwrap();
        let gt = ground_truth_batch(
            &ds.vectors,
            &ds.attrs,
            &w.queries,
            &w.filters,
            10,
            Metric::SquaredEuclidean,
        )
        .unwrap();
        (ds, w, gt)
    }

    fn spec() -> SweepSpec {
        SweepSpec {
            partitions: vec![8],
            heights: vec![0, 3],
            k: 10,
            warmup: 5,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn full_probe_exhaustive_has_perfect_recall() {
        let (ds, w, gt) = fixture(0.3);
        let s = SweepSpec {
            probes: Some(vec![8]),
            mode: SubpartitionMode::Exhaustive,
            ..spec()
        };
        let out = run_sweep(&ds, &w, &gt, &s).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.recall == 1.0));
    }

    #[test]
    fn recall_non_decreasing_in_m() {
        let (ds, w, gt) = fixture(0.0);
        let out = run_sweep(&ds, &w, &gt, &spec()).unwrap();
        for h in [0, 3] {
            let rs: Vec<f64> = out.rows.iter().filter(|r| r.h == h).map(|r| r.recall).collect();
            assert_eq!(rs.len(), 4);
            assert!(rs.windows(2).all(|p| p[0] <= p[1]), "{rs:?}");
        }
    }

    #[test]
    fn pure_vector_search_matches_ivf_baseline() {
        let (ds, w, gt) = fixture(1.0);
        let s = SweepSpec {
            heights: vec![0],
            baselines: vec![Strategy::SearchThenFilter],
            ..spec()
        };
        let out = run_sweep(&ds, &w, &gt, &s).unwrap();
        let caps: Vec<_> = out
            .rows
            .iter()
            .zip(&out.results)
            .filter(|(r, _)| r.strategy == "caps")
            .collect();
        let ivf: Vec<_> = out
            .rows
            .iter()
            .zip(&out.results)
            .filter(|(r, _)| r.strategy != "caps")
            .collect();
        assert_eq!(caps.len(), ivf.len());
        for ((a, ra), (b, rb)) in caps.iter().zip(&ivf) {
            assert_eq!((a.m, a.recall), (b.m, b.recall));
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn counters_repeat_and_csv_round_trips() {
        let (ds, w, gt) = fixture(0.5);
        let a = run_sweep(&ds, &w, &gt, &spec()).unwrap();
        let b = run_sweep(&ds, &w, &gt, &spec()).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.candidates_scanned, y.candidates_scanned);
            assert_eq!(x.distance_computations, y.distance_computations);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_csv(&path, &a.rows).unwrap();
        assert_eq!(read_csv(&path).unwrap(), a.rows);
        write_metadata(&dir.path().join("meta.json"), &a.metadata).unwrap();
    }

    #[test]
    fn oversized_configs_are_skipped() {
        let (ds, w, gt) = fixture(0.0);
        let s = SweepSpec {
            partitions: vec![4000, 8],
            memory_budget_bytes: 1 << 40,
            ..spec()
        };
        let out = run_sweep(&ds, &w, &gt, &s).unwrap();
        assert_eq!(out.metadata.skipped.len(), 1);
        let tiny = SweepSpec {
            memory_budget_bytes: 1000,
            ..spec()
        };
        let out = run_sweep(&ds, &w, &gt, &tiny).unwrap();
        assert!(out.rows.is_empty());
        assert!(out.metadata.skipped[0].reason.contains("budget"));
    }

    #[test]
    fn survivor_targets_add_rows_and_never_lose_recall() {
        let (ds, w, gt) = fixture(0.0);
        let s = SweepSpec {
            heights: vec![3],
            probes: Some(vec![1, 2]),
            survivors: vec![50, 0],
            ..spec()
        };
        let out = run_sweep(&ds, &w, &gt, &s).unwrap();
        let keys: Vec<(usize, usize)> = out.rows.iter().map(|r| (r.m, r.survivors)).collect();
        assert_eq!(keys, [(1, 0), (1, 50), (2, 0), (2, 50)]);
        for pair in out.rows.chunks(2) {
            assert!(pair[1].recall >= pair[0].recall);
            assert!(pair[1].filter_passes >= pair[0].filter_passes.min(50.0));
        }
    }
}
