//! Index overhead: serialized bytes beyond the raw vectors and attribute
//! codes, cross-checked against the analytical size formula.

use std::time::Instant;

use anyhow::{ensure, Result};
use caps_core::analysis::{attribute_precision, estimate_index_size, CostModelParams};
use caps_core::io::HEADER_LEN;
use caps_core::{CapsIndex, IndexConfig};
use serde::Serialize;

use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadReport {
    pub n: u64,
    pub d: u64,
    pub l: u64,
    pub b: u64,
    pub h: u64,
    pub r: u64,
    pub header_bytes: u64,
    /// Serialized size minus header and raw data blocks.
    pub overhead_bytes: u64,
    pub data_bytes: u64,
    pub estimated_overhead_bytes: u64,
    /// `None` for purely analytical reports.
    pub build_seconds: Option<f64>,
}

impl OverheadReport {
    pub fn overhead_mb(&self) -> f64 {
        self.overhead_bytes as f64 / 1e6
    }

    pub fn matches_estimate(&self) -> bool {
        self.overhead_bytes == self.estimated_overhead_bytes
    }
}

/// Measures a built index.
pub fn report_overhead(index: &CapsIndex, build_seconds: Option<f64>) -> Result<OverheadReport> {
    let p = CostModelParams::for_index(index, 1, 0.0);
    let full = index.to_bytes(true).len() as u64;
    let data_bytes = estimate_index_size(&p, true) - estimate_index_size(&p, false);
    let lean = index.to_bytes(false).len() as u64;
    ensure!(
        full - data_bytes == lean,
        "embedded data blocks are {} bytes, expected {data_bytes}",
        full - lean
    );
    Ok(OverheadReport {
        n: p.n,
        d: p.d,
        l: p.l,
        b: p.b,
        h: p.h,
        r: p.r,
        header_bytes: HEADER_LEN as u64,
        overhead_bytes: full - data_bytes - HEADER_LEN as u64,
        data_bytes,
        estimated_overhead_bytes: estimate_index_size(&p, false),
        build_seconds,
    })
}

/// Builds `config` over `dataset` and measures it. An empty dataset has no
/// index, only a header.
pub fn build_and_report(dataset: &Dataset, config: &IndexConfig) -> Result<OverheadReport> {
    if dataset.n() == 0 {
        return Ok(OverheadReport {
            n: 0,
            d: dataset.vectors.d() as u64,
            l: dataset.attrs.l() as u64,
            b: 0,
            h: config.height as u64,
            r: 1,
            header_bytes: HEADER_LEN as u64,
            overhead_bytes: 0,
            data_bytes: 0,
            estimated_overhead_bytes: 0,
            build_seconds: Some(0.0),
        });
    }
    let start = Instant::now();
    let index = CapsIndex::build(dataset.vectors.clone(), dataset.attrs.clone(), config)?;
    report_overhead(&index, Some(start.elapsed().as_secs_f64()))
}

/// Formula-only report for shapes too large to build here.
pub fn analytic_overhead(n: u64, d: u64, l: u64, b: u64, h: u64, k_total_values: u64) -> OverheadReport {
    let r = attribute_precision(k_total_values) as u64;
    let p = CostModelParams {
        n,
        d,
        l,
        b,
        m: 1,
        h,
        gamma: 0.0,
        r,
        k_total_values,
    };
    let overhead = estimate_index_size(&p, false);
    OverheadReport {
        n,
        d,
        l,
        b,
        h,
        r,
        header_bytes: HEADER_LEN as u64,
        overhead_bytes: overhead,
        data_bytes: estimate_index_size(&p, true) - overhead,
        estimated_overhead_bytes: overhead,
        build_seconds: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use caps_core::datagen::{AttributeSpec, MixtureSpec};
    use caps_core::{AttributeTable, EmbeddingMatrix};

    #[test]
    fn measured_overhead_equals_formula() {
        let mix = MixtureSpec {
            d: 12,
            clusters: 8,
            center_scale: 30.0,
            spread: 4.0,
            quantize: false,
            intrinsic_dim: 0,
            seed: 2,
        };
        let ds = Dataset::synthetic(3000, &mix, &AttributeSpec::default_l3()).unwrap();
        for (b, h) in [(1, 0), (10, 4), (33, 15)] {
            let config = IndexConfig {
                partitions: Some(b),
                height: h,
                ..IndexConfig::default()
            };
            let rep = build_and_report(&ds, &config).unwrap();
            assert!(rep.matches_estimate(), "{rep:?}");
            assert_eq!(rep.data_bytes, 3000 * 12 * 4 + 3000 * 3);
        }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let ds = Dataset::new(
            "empty",
            EmbeddingMatrix::new(4, vec![]).unwrap(),
            AttributeTable::new(2, vec![]).unwrap(),
        )
        .unwrap();
        let rep = build_and_report(&ds, &IndexConfig::default()).unwrap();
        assert_eq!((rep.overhead_bytes, rep.header_bytes), (0, HEADER_LEN as u64));
    }

    #[test]
    fn sift_scale_overhead_band() {
        let lo = analytic_overhead(1_000_000, 128, 3, 1000, 4, 36);
        let hi = analytic_overhead(1_000_000, 128, 3, 8192, 4, 36);
        assert_eq!(lo.overhead_bytes, 4_542_000);
        assert!(lo.overhead_mb() >= 4.0 && hi.overhead_mb() <= 17.0);
    }
}
