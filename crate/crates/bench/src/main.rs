use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use caps_bench::dataset::{self, Dataset};
use caps_bench::overhead::{self, OverheadReport};
use caps_bench::strategy::Strategy;
use caps_bench::sweep::{self, SweepSpec};
use caps_bench::unhappy::{self, UnhappySpec};
use caps_core::datagen::{self, AttributeSpec, MixtureSpec, QueryWorkload, ValueDistribution};
use caps_core::oracle::cached_ground_truth;
use caps_core::{io, Balance, CapsIndex, IndexConfig, KMeansConfig, Metric, SubpartitionMode};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "caps", version, about = "Filtered vector search with CAPS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an attribute table, and optionally a query filter file.
    GenAttrs(GenAttrsArgs),
    /// Build an index file.
    Build(BuildArgs),
    /// Run filtered queries against an index file.
    Search(SearchArgs),
    /// Compute (or reuse cached) exact filtered ground truth.
    Groundtruth(GroundTruthArgs),
    /// Recall/QPS sweep over B, h and m.
    Sweep(SweepArgs),
    /// Sparsity sweep comparing pre-filtering, post-filtering and CAPS.
    Unhappy(UnhappyArgs),
    /// Index overhead in bytes, measured or from the size formula.
    Overhead(OverheadArgs),
}

fn parse_distribution(s: &str) -> Result<ValueDistribution> {
    let (name, arg) = s.split_once(':').unwrap_or((s, ""));
    let param = || -> Result<f64> { arg.parse().with_context(|| format!("{s:?}: missing parameter")) };
    Ok(match name {
        "uniform" => ValueDistribution::Uniform,
        "exponential" | "exp" => ValueDistribution::Exponential { lambda: param()? },
        "powerlaw" | "power" => ValueDistribution::PowerLaw { alpha: param()? },
        _ => bail!("distribution must be uniform, exponential:<lambda> or powerlaw:<alpha>"),
    })
}

#[derive(Args, Clone)]
struct AttrArgs {
    /// Distinct values per attribute position; the count sets L.
    #[arg(long, value_delimiter = ',', default_value = "12,12,12")]
    cardinalities: Vec<u32>,
    /// uniform, exponential:<lambda> or powerlaw:<alpha>.
    #[arg(long, default_value = "exponential:1", value_parser = parse_distribution)]
    distribution: ValueDistribution,
    #[arg(long, default_value_t = 0)]
    attr_seed: u64,
}

impl AttrArgs {
    fn spec(&self) -> AttributeSpec {
        AttributeSpec {
            cardinalities: self.cardinalities.clone(),
            distribution: self.distribution,
            seed: self.attr_seed,
        }
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// squared-euclidean, inner-product or cosine.
    #[arg(long, default_value = "squared-euclidean")]
    metric: Metric,
    /// literal, covering or exhaustive.
    #[arg(long, default_value = "covering")]
    mode: SubpartitionMode,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 0x5eed)]
    kmeans_seed: u64,
    /// Partition size cap as a multiple of N/B; 0 disables balancing.
    #[arg(long, default_value_t = 1.25)]
    balance: f64,
    /// Training sample size per centroid.
    #[arg(long, default_value_t = 256)]
    points_per_centroid: usize,
}

impl TrainArgs {
    fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            iters: self.iters,
            seed: self.kmeans_seed,
            balance: if self.balance > 0.0 {
                Balance::Factor(self.balance)
            } else {
                Balance::Unbounded
            },
            max_points_per_centroid: self.points_per_centroid,
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Base vectors (.fvecs, .bvecs or .ivecs).
    #[arg(long, conflicts_with = "synthetic")]
    base: Option<PathBuf>,
    /// Attribute file (.csv or headered binary); generated when absent.
    #[arg(long)]
    attrs: Option<PathBuf>,
    /// Use the first N base vectors only.
    #[arg(long)]
    limit: Option<usize>,
    /// Generate N points from a Gaussian mixture instead of reading files.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Dimensionality of synthetic data.
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[command(flatten)]
    attr: AttrArgs,
}

impl DataArgs {
    fn mixture(&self) -> MixtureSpec {
        MixtureSpec {
            d: self.dim,
            ..MixtureSpec::sift_like(self.data_seed)
        }
    }

    fn dataset(&self) -> Result<Dataset> {
        match (&self.base, self.synthetic) {
            (Some(p), _) => Dataset::load(p, self.attrs.as_deref(), &self.attr.spec(), self.limit),
            (None, Some(n)) => Dataset::synthetic(n, &self.mixture(), &self.attr.spec()),
            (None, None) => bail!("need --base or --synthetic"),
        }
    }
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    /// Query vectors; synthetic datasets draw them from the mixture.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    query_count: usize,
    /// Filter file (CSV, `*` = wildcard); generated when absent.
    #[arg(long)]
    filters: Option<PathBuf>,
    /// Probability that a generated filter leaves a position unconstrained.
    #[arg(long, default_value_t = 0.0)]
    absence: f64,
    #[arg(long, default_value_t = 2)]
    workload_seed: u64,
}

impl WorkloadArgs {
    fn workload(&self, data: &DataArgs) -> Result<QueryWorkload> {
        let queries = match &self.queries {
            Some(p) => dataset::load_vectors(p, Some(self.query_count))?,
            None if data.synthetic.is_some() => data.mixture().sample(self.query_count, 1)?,
            None => bail!("--queries is required for file datasets"),
        };
        match &self.filters {
            Some(p) => {
                let filters = dataset::read_filters(p)?;
                ensure!(
                    filters.len() >= queries.n(),
                    "{} has fewer filters than queries",
                    p.display()
                );
                let filters = filters[..queries.n()].to_vec();
                let l = filters.first().map_or(1, |f| f.len()) as f64;
                let wild: usize = filters.iter().map(|f| f.wildcard_count()).sum();
                Ok(QueryWorkload {
                    absence_fraction: wild as f64 / (l * filters.len().max(1) as f64),
                    queries,
                    filters,
                })
            }
            None => Ok(datagen::gen_workload(
                queries,
                &data.attr.spec(),
                self.absence,
                self.workload_seed,
            )?),
        }
    }
}

#[derive(Args)]
struct GenAttrsArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    attr: AttrArgs,
    /// Output attribute file; `.csv` selects CSV, anything else binary.
    #[arg(long)]
    out: PathBuf,
    /// Also write this many query filters here.
    #[arg(long, requires = "filter_count")]
    filters_out: Option<PathBuf>,
    #[arg(long)]
    filter_count: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    absence: f64,
    #[arg(long, default_value_t = 2)]
    workload_seed: u64,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Partition count B; defaults to a power of two near sqrt(N).
    #[arg(long)]
    partitions: Option<usize>,
    /// AFT height h.
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long)]
    out: PathBuf,
    /// Leave vectors and attributes out of the file.
    #[arg(long)]
    no_embed: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    /// Dataset files for an index saved with --no-embed.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long, requires = "base")]
    attrs: Option<PathBuf>,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    filters: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Keep probing past m partitions until this many points pass the filter.
    #[arg(long, default_value_t = 0)]
    survivors: usize,
    /// Overrides the mode stored in the index.
    #[arg(long)]
    mode: Option<SubpartitionMode>,
    /// CSV of (query, rank, id, score); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GroundTruthArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value = "squared-euclidean")]
    metric: Metric,
    #[arg(long, default_value = "gt-cache")]
    cache_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Partition counts to build.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    partitions: Vec<usize>,
    /// AFT heights to build.
    #[arg(long, value_delimiter = ',', default_value = "0,4")]
    heights: Vec<usize>,
    /// Probe counts; default is powers of two up to B.
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<usize>>,
    /// Filter-pass targets for adaptive probing; 0 is fixed-m probing.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    survivors: Vec<usize>,
    /// Extra strategies: search-then-filter, filter-then-search.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<Strategy>,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    #[arg(long, default_value_t = 8 << 30)]
    memory_budget: u64,
    #[arg(long, default_value = "gt-cache")]
    cache_dir: PathBuf,
    /// CSV output; metadata goes next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UnhappyArgs {
    #[arg(long, default_value_t = 60_000)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    query_count: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2,0.5,0.9"
    )]
    sparsities: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    recall_floor: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverheadArgs {
    /// Measure an existing index file.
    #[arg(long, conflicts_with = "n")]
    index: Option<PathBuf>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 128)]
    dim: u64,
    #[arg(long, default_value_t = 3)]
    attributes: u64,
    #[arg(long, value_delimiter = ',', default_value = "1000,8192")]
    partitions: Vec<u64>,
    #[arg(long, default_value_t = 4)]
    height: u64,
    /// Distinct attribute values overall, for r.
    #[arg(long, default_value_t = 36)]
    values: u64,
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn gen_attrs(a: GenAttrsArgs) -> Result<()> {
    let spec = a.attr.spec();
    let table = datagen::gen_attributes(a.n, &spec)?;
    datagen::save_attributes(&a.out, &table)?;
    if let (Some(path), Some(count)) = (&a.filters_out, a.filter_count) {
        // filters do not depend on the query vectors
        let placeholder = caps_core::EmbeddingMatrix::new(1, vec![0.0; count])?;
        let w = datagen::gen_workload(placeholder, &spec, a.absence, a.workload_seed)?;
        dataset::write_filters(path, &w.filters)?;
    }
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let ds = a.data.dataset()?;
    let start = Instant::now();
    let config = IndexConfig {
        partitions: a.partitions,
        height: a.height,
        metric: a.train.metric,
        kmeans: a.train.kmeans(),
        mode: a.train.mode,
    };
    let index = CapsIndex::build(ds.vectors.clone(), ds.attrs.clone(), &config)?;
    let secs = start.elapsed().as_secs_f64();
    index.save_with(&a.out, !a.no_embed)?;
    print_json(&overhead::report_overhead(&index, Some(secs))?)
}

fn search(a: SearchArgs) -> Result<()> {
    let mut index = match &a.base {
        Some(base) => {
            let vectors = dataset::load_vectors(base, None)?;
            let attrs = match &a.attrs {
                Some(p) => datagen::load_attributes(p)?,
                None => bail!("--attrs is required with --base"),
            };
            io::load_with_dataset(&a.index, vectors, attrs)?
        }
        None => io::load(&a.index)?,
    };
    if let Some(mode) = a.mode {
        index.set_mode(mode);
    }
    let queries = dataset::load_vectors(&a.queries, None)?;
    let filters = dataset::read_filters(&a.filters)?;
    ensure!(filters.len() >= queries.n(), "fewer filters than queries");
    let out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query", "rank", "id", "score"])?;
    let mut total = caps_core::SearchStats::default();
    let start = Instant::now();
    for (i, q) in queries.rows().enumerate() {
        let r = index.search_adaptive(q, &filters[i], a.k, a.m, a.survivors, index.mode())?;
        total += r.stats;
        for (rank, (id, s)) in r.ids.iter().zip(&r.scores).enumerate() {
            w.write_record([i.to_string(), rank.to_string(), id.to_string(), s.to_string()])?;
        }
    }
    w.flush()?;
    log::info!(
        "{} queries in {:.3}s, {} distance computations",
        queries.n(),
        start.elapsed().as_secs_f64(),
        total.distance_computations
    );
    Ok(())
}

fn groundtruth(a: GroundTruthArgs) -> Result<()> {
    let ds = a.data.dataset()?;
    let w = a.workload.workload(&a.data)?;
    let (_, path) = cached_ground_truth(
        &a.cache_dir,
        &ds.vectors,
        &ds.attrs,
        &w.queries,
        &w.filters,
        a.k,
        a.metric,
    )?;
    println!("{}", path.display());
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let ds = a.data.dataset()?;
    let w = a.workload.workload(&a.data)?;
    let (truth, _) = cached_ground_truth(
        &a.cache_dir,
        &ds.vectors,
        &ds.attrs,
        &w.queries,
        &w.filters,
        a.k,
        a.train.metric,
    )?;
    let spec = SweepSpec {
        partitions: a.partitions,
        heights: a.heights,
        probes: a.probes,
        survivors: a.survivors,
        mode: a.train.mode,
        metric: a.train.metric,
        kmeans: a.train.kmeans(),
        k: a.k,
        warmup: a.warmup,
        baselines: a.baselines,
        memory_budget_bytes: a.memory_budget,
    };
    let out = sweep::run_sweep(&ds, &w, &truth, &spec)?;
    sweep::write_csv(&a.out, &out.rows)?;
    sweep::write_metadata(&a.out.with_extension("json"), &out.metadata)?;
    for s in &out.metadata.skipped {
        log::warn!("skipped {}: {}", s.config_id, s.reason);
    }
    Ok(())
}

fn unhappy_cmd(a: UnhappyArgs) -> Result<()> {
    let mix = MixtureSpec {
        d: a.dim,
        clusters: 100,
        center_scale: 100.0,
        spread: 15.0,
        quantize: true,
        intrinsic_dim: 0,
        seed: a.seed,
    };
    let vectors = std::sync::Arc::new(mix.sample(a.n, 0)?);
    let queries = mix.sample(a.query_count, 1)?;
    let spec = UnhappySpec {
        sparsities: a.sparsities,
        recall_floor: a.recall_floor,
        k: a.k,
        partitions: a.partitions,
        seed: a.seed,
        ..UnhappySpec::default()
    };
    let rows = unhappy::run_unhappy_middle(vectors, &queries, &spec)?;
    match &a.out {
        Some(p) => unhappy::write_csv(p, &rows),
        None => rows.iter().try_for_each(print_json),
    }
}

fn overhead_cmd(a: OverheadArgs) -> Result<()> {
    if let Some(p) = &a.index {
        let index = io::load(p)?;
        return print_json(&overhead::report_overhead(&index, None)?);
    }
    let Some(n) = a.n else { bail!("need --index or --n") };
    for &b in &a.partitions {
        let rep: OverheadReport = overhead::analytic_overhead(n, a.dim, a.attributes, b, a.height, a.values);
        print_json(&rep)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let threads = caps_bench::configure_threads()?;
    log::debug!("{threads} build threads");
    match Cli::parse().command {
        Command::GenAttrs(a) => gen_attrs(a),
        Command::Build(a) => build(a),
        Command::Search(a) => search(a),
        Command::Groundtruth(a) => groundtruth(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Unhappy(a) => unhappy_cmd(a),
        Command::Overhead(a) => overhead_cmd(a),
    }
}
