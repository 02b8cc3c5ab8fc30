//! Benchmark harness for the CAPS index.
//!
//! - [`strategy`]: the three query strategies compared in the experiments
//!   (filter-then-search, IVF search-then-filter, CAPS).
//! - [`sweep`]: recall/QPS sweeps over index configurations.
//! - [`unhappy`]: the sparsity sweep contrasting pre- and post-filtering.
//! - [`overhead`]: serialized index overhead against the size formula.
//! - [`verify`]: reference checks shared by the acceptance suite.

pub mod dataset;
pub mod overhead;
pub mod strategy;
pub mod sweep;
pub mod unhappy;
pub mod verify;

/// Version of the CSV and JSON output schemas.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the build thread count.
pub const THREADS_ENV: &str = "CAPS_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] if set. Returns the
/// thread count in effect.
pub fn configure_threads() -> anyhow::Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("{THREADS_ENV}={v:?} is not a thread count"))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}
