//! Closed-form cost models: query-time upper bound, the partition-count
//! exponent minimising it, and index size in bytes.
//!
//! Query-time logs are base 2. The exponent is a ratio of logs, so its base
//! does not matter.

use crate::aft::SubpartitionMode;
use crate::error::{Error, Result};
use crate::index::CapsIndex;
use crate::types::QueryFilter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModelParams {
    /// N, points.
    pub n: u64,
    /// d, dimensionality.
    pub d: u64,
    /// L, attribute count.
    pub l: u64,
    /// B, partitions.
    pub b: u64,
    /// m, probed partitions.
    pub m: u64,
    /// h, AFT height.
    pub h: u64,
    /// Fraction of candidates passing the attribute match, in `[0, 1]`.
    pub gamma: f64,
    /// Bytes per attribute code.
    pub r: u64,
    /// Distinct attribute values overall.
    pub k_total_values: u64,
}

impl CostModelParams {
    /// Shape parameters of a built index.
    pub fn for_index(index: &CapsIndex, m: usize, gamma: f64) -> Self {
        let max_code = index.attributes().max_code().map_or(0, |c| c as u64);
        Self {
            n: index.len() as u64,
            d: index.dim() as u64,
            l: index.attribute_count() as u64,
            b: index.partitions() as u64,
            m: m as u64,
            h: index.height() as u64,
            gamma,
            r: index.attribute_precision() as u64,
            k_total_values: max_code + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.r < 1 {
            return Err(Error::InvalidConfig(
                "attribute precision must be at least 1 byte".into(),
            ));
        }
        if self.m > self.b {
            return Err(Error::InvalidConfig(format!("m = {} exceeds B = {}", self.m, self.b)));
        }
        Ok(())
    }
}

fn log2_or_zero(x: f64) -> f64 {
    if x > 1.0 {
        x.log2()
    } else {
        0.0
    }
}

/// Balanced upper bound
/// `B d + B log2 m + m + m (N / B) / (h + 1) (L + d gamma)`.
///
/// `m = 0` leaves only the centroid scan.
pub fn estimate_query_time(p: &CostModelParams) -> f64 {
    let (n, d, l, b, m, h) = (p.n as f64, p.d as f64, p.l as f64, p.b as f64, p.m as f64, p.h as f64);
    let centroid_scan = b * d;
    if p.m == 0 || p.b == 0 {
        return centroid_scan;
    }
    let selection = b * log2_or_zero(m);
    let per_partition = (n / b) / (h + 1.0);
    centroid_scan + selection + m + m * per_partition * (l + d * p.gamma)
}

/// Same bound with the balanced-leaf assumption replaced by the actual
/// sizes of the sub-partitions `filter` selects in the `m` partitions
/// nearest to `q`.
pub fn empirical_query_time(
    index: &CapsIndex,
    q: &[f32],
    filter: &QueryFilter,
    m: usize,
    gamma: f64,
    mode: SubpartitionMode,
) -> Result<f64> {
    let candidates = index.candidates(q, filter, m, mode)?.len() as f64;
    let (b, d, l) = (
        index.partitions() as f64,
        index.dim() as f64,
        index.attribute_count() as f64,
    );
    Ok(b * d + b * log2_or_zero(m as f64) + m as f64 + candidates * (l + d * gamma))
}

/// Exponent `t` with `B = N^t` minimising the query-time bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent {
    pub t: f64,
    pub theta: f64,
    /// `round(N^t)`.
    pub partitions: u64,
}

/// `theta = (L + d gamma) m / ((h + 1)(d + log2 m))`, `t = ln(N theta) / (2 ln N)`.
pub fn optimal_exponent(p: &CostModelParams) -> Result<Exponent> {
    let (d, l, m, h) = (p.d as f64, p.l as f64, p.m as f64, p.h as f64);
    let theta = (l + d * p.gamma) * m / ((h + 1.0) * (d + log2_or_zero(m)));
    exponent_for_theta(p.n, theta)
}

pub fn exponent_for_theta(n: u64, theta: f64) -> Result<Exponent> {
    if n <= 1 {
        return Err(Error::InvalidConfig("exponent needs N > 1".into()));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidConfig(format!("theta {theta} must be positive")));
    }
    let nf = n as f64;
    let t = (nf * theta).ln() / (2.0 * nf.ln());
    Ok(Exponent {
        t,
        theta,
        partitions: nf.powf(t).round() as u64,
    })
}

/// Bytes per attribute code for `k_total_values` distinct values:
/// `max(1, ceil(ceil(log2 k) / 8))`.
pub fn attribute_precision(k_total_values: u64) -> usize {
    if k_total_values <= 1 {
        return 1;
    }
    let bits = 64 - (k_total_values - 1).leading_zeros() as usize;
    bits.div_ceil(8).max(1)
}

/// `4Bd + 4N + 4B(h+1) + 2B(h+1)r`, plus `4Nd + NLr` with `include_data`.
pub fn estimate_index_size(p: &CostModelParams, include_data: bool) -> u64 {
    let slots = p.b * (p.h + 1);
    let overhead = 4 * p.b * p.d + 4 * p.n + 4 * slots + 2 * slots * p.r;
    if include_data {
        overhead + 4 * p.n * p.d + p.n * p.l * p.r
    } else {
        overhead
    }
}
