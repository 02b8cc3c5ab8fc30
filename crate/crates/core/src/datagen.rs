//! Dataset ingestion and synthetic workloads.
//!
//! `.fvecs` / `.bvecs` / `.ivecs`: each record is a little-endian `i32`
//! dimension followed by that many elements (`f32`, `u8` or `i32`). The
//! dimension must be the same for every record.
//!
//! Attribute files:
//!
//! - binary: `n: u32`, `L: u32`, then `n * L` codes as `u32`, little-endian
//! - CSV (`.csv` extension): one row per point, `L` comma-separated codes,
//!   no header

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::types::{AttributeTable, EmbeddingMatrix, QueryFilter, WILDCARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Float32,
    UInt8,
    Int32,
}

impl ElementKind {
    pub fn width(self) -> usize {
        match self {
            ElementKind::UInt8 => 1,
            ElementKind::Float32 | ElementKind::Int32 => 4,
        }
    }

    /// Guess from a `.fvecs` / `.bvecs` / `.ivecs` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(ElementKind::Float32),
            "bvecs" => Some(ElementKind::UInt8),
            "ivecs" => Some(ElementKind::Int32),
            _ => None,
        }
    }
}

/// Fills `buf` completely. `Ok(false)` on a clean EOF before the first byte.
fn read_record(r: &mut impl Read, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(io::Error::new(ErrorKind::UnexpectedEof, "truncated record")),
            Ok(k) => filled += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

/// Reads up to `limit` records (all when `None`).
pub fn read_vecs(reader: impl Read, kind: ElementKind, limit: Option<usize>) -> Result<EmbeddingMatrix> {
    let mut r = BufReader::new(reader);
    let mut dim_buf = [0u8; 4];
    let mut d: Option<usize> = None;
    let mut values = Vec::new();
    let mut record = Vec::new();
    let mut count = 0usize;
    while limit.is_none_or(|l| count < l) {
        let truncated = |what: &str| Error::InvalidData(format!("truncated {what} in record {count}"));
        match read_record(&mut r, &mut dim_buf) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Err(truncated("dimension")),
            Err(e) => return Err(e.into()),
        }
        let dim = i32::from_le_bytes(dim_buf);
        if dim <= 0 {
            return Err(Error::InvalidData(format!("record {count} has dimension {dim}")));
        }
        let dim = dim as usize;
        match d {
            None => d = Some(dim),
            Some(expected) if expected != dim => {
                return Err(Error::InvalidData(format!(
                    "record {count} has dimension {dim}, expected {expected}"
                )))
            }
            Some(_) => {}
        }
        record.resize(dim * kind.width(), 0);
        match read_record(&mut r, &mut record) {
            Ok(true) => {}
            Ok(false) => return Err(truncated("body")),
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Err(truncated("body")),
            Err(e) => return Err(e.into()),
        }
        match kind {
            ElementKind::Float32 => values.extend(
                record
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
            ),
            ElementKind::UInt8 => values.extend(record.iter().map(|&b| b as f32)),
            ElementKind::Int32 => values.extend(
                record
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f32),
            ),
        }
        count += 1;
    }
    match d {
        Some(d) => EmbeddingMatrix::new(d, values),
        None => Err(Error::InvalidData("no records".into())),
    }
}

pub fn load_vecs(path: impl AsRef<Path>, kind: ElementKind) -> Result<EmbeddingMatrix> {
    read_vecs(File::open(path)?, kind, None)
}

pub fn load_vecs_head(path: impl AsRef<Path>, kind: ElementKind, limit: usize) -> Result<EmbeddingMatrix> {
    read_vecs(File::open(path)?, kind, Some(limit))
}

/// Writes `m` in the given element kind. Integer kinds require integral,
/// in-range values.
pub fn write_vecs(writer: impl Write, m: &EmbeddingMatrix, kind: ElementKind) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (i, row) in m.rows().enumerate() {
        w.write_all(&(m.d() as i32).to_le_bytes())?;
        for &v in row {
            match kind {
                ElementKind::Float32 => w.write_all(&v.to_le_bytes())?,
                ElementKind::UInt8 => {
                    if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                        return Err(Error::InvalidData(format!("row {i}: {v} is not a u8")));
                    }
                    w.write_all(&[v as u8])?
                }
                ElementKind::Int32 => {
                    if v.fract() != 0.0 || v < i32::MIN as f32 || v >= i32::MAX as f32 {
                        return Err(Error::InvalidData(format!("row {i}: {v} is not an i32")));
                    }
                    w.write_all(&(v as i32).to_le_bytes())?
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_vecs(path: impl AsRef<Path>, m: &EmbeddingMatrix, kind: ElementKind) -> Result<()> {
    write_vecs(File::create(path)?, m, kind)
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("csv")
}

pub fn read_attributes_binary(reader: impl Read) -> Result<AttributeTable> {
    let mut r = BufReader::new(reader);
    let mut head = [0u8; 8];
    r.read_exact(&mut head)
        .map_err(|_| Error::InvalidData("truncated attribute header".into()))?;
    let n = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
    let l = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let mut body = vec![0u8; n * l * 4];
    r.read_exact(&mut body)
        .map_err(|_| Error::InvalidData(format!("attribute file shorter than {n}x{l} codes")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::InvalidData("trailing bytes after attribute codes".into()));
    }
    let codes = body
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    AttributeTable::new(l, codes)
}

pub fn write_attributes_binary(writer: impl Write, t: &AttributeTable) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(&(t.n() as u32).to_le_bytes())?;
    w.write_all(&(t.l() as u32).to_le_bytes())?;
    for &c in t.as_slice() {
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_attributes_csv(reader: impl Read) -> Result<AttributeTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidData(format!("csv row {i}: {e}")))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidData(format!("csv row {i}: {e}")))?;
        rows.push(row);
    }
    AttributeTable::from_rows(&rows)
}

pub fn write_attributes_csv(writer: impl Write, t: &AttributeTable) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in t.rows() {
        w.write_record(row.iter().map(|c| c.to_string()))
            .map_err(|e| Error::Io(io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an attribute file, CSV when the extension is `.csv`.
pub fn load_attributes(path: impl AsRef<Path>) -> Result<AttributeTable> {
    let path = path.as_ref();
    let f = File::open(path)?;
    if is_csv(path) {
        read_attributes_csv(f)
    } else {
        read_attributes_binary(f)
    }
}

pub fn save_attributes(path: impl AsRef<Path>, t: &AttributeTable) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path)?;
    if is_csv(path) {
        write_attributes_csv(f, t)
    } else {
        write_attributes_binary(f, t)
    }
}

/// Per-position value distribution over codes `0..cardinality`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueDistribution {
    Uniform,
    /// `P(j) ∝ exp(-lambda j)`.
    Exponential {
        lambda: f64,
    },
    /// `P(j) ∝ (j + 1)^-alpha`.
    PowerLaw {
        alpha: f64,
    },
}

impl ValueDistribution {
    /// Normalised probabilities of codes `0..cardinality`.
    pub fn probabilities(&self, cardinality: u32) -> Vec<f64> {
        let weights: Vec<f64> = (0..cardinality)
            .map(|j| match *self {
                ValueDistribution::Uniform => 1.0,
                ValueDistribution::Exponential { lambda } => (-lambda * j as f64).exp(),
                ValueDistribution::PowerLaw { alpha } => ((j + 1) as f64).powf(-alpha),
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    /// Distinct codes per position; the length is L.
    pub cardinalities: Vec<u32>,
    pub distribution: ValueDistribution,
    pub seed: u64,
}

impl AttributeSpec {
    /// L = 3, 12 values per position, exponential with lambda = 1.
    pub fn default_l3() -> Self {
        Self {
            cardinalities: vec![12; 3],
            distribution: ValueDistribution::Exponential { lambda: 1.0 },
            seed: 0,
        }
    }

    pub fn l(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cardinalities.is_empty() {
            return Err(Error::InvalidConfig(
                "attribute spec needs at least one position".into(),
            ));
        }
        if let Some(&c) = self.cardinalities.iter().find(|&&c| c == 0 || c == WILDCARD) {
            return Err(Error::InvalidConfig(format!("cardinality {c} out of range")));
        }
        match self.distribution {
            ValueDistribution::Exponential { lambda } if lambda.is_nan() || lambda <= 0.0 => {
                Err(Error::InvalidConfig(format!("lambda {lambda} must be positive")))
            }
            ValueDistribution::PowerLaw { alpha } if alpha.is_nan() || alpha <= 0.0 => {
                Err(Error::InvalidConfig(format!("alpha {alpha} must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn samplers(&self) -> Result<Vec<WeightedIndex<f64>>> {
        self.validate()?;
        self.cardinalities
            .iter()
            .map(|&c| {
                WeightedIndex::new(self.distribution.probabilities(c))
                    .map_err(|e| Error::InvalidConfig(format!("bad value weights: {e}")))
            })
            .collect()
    }
}

/// `n` rows, each position drawn i.i.d. from the spec's distribution.
pub fn gen_attributes(n: usize, spec: &AttributeSpec) -> Result<AttributeTable> {
    let samplers = spec.samplers()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut codes = Vec::with_capacity(n * spec.l());
    for _ in 0..n {
        for s in &samplers {
            codes.push(s.sample(&mut rng) as u32);
        }
    }
    AttributeTable::new(spec.l(), codes)
}

/// Query vectors with one filter each.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryWorkload {
    pub queries: EmbeddingMatrix,
    pub filters: Vec<QueryFilter>,
    pub absence_fraction: f64,
}

impl QueryWorkload {
    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Mean fraction of wildcard positions.
    pub fn observed_absence(&self) -> f64 {
        let total: usize = self.filters.iter().map(|f| f.len()).sum();
        if total == 0 {
            return 0.0;
        }
        self.filters.iter().map(|f| f.wildcard_count()).sum::<usize>() as f64 / total as f64
    }
}

/// Each position is a wildcard with probability `absence_fraction`,
/// otherwise a value drawn from the data distribution of `spec`.
pub fn gen_workload(
    queries: EmbeddingMatrix,
    spec: &AttributeSpec,
    absence_fraction: f64,
    seed: u64,
) -> Result<QueryWorkload> {
    if !(0.0..=1.0).contains(&absence_fraction) {
        return Err(Error::InvalidConfig(format!(
            "absence fraction {absence_fraction} outside [0, 1]"
        )));
    }
    let samplers = spec.samplers()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filters = (0..queries.n())
        .map(|_| {
            QueryFilter::new(
                samplers
                    .iter()
                    .map(|s| {
                        if rng.gen_bool(absence_fraction) {
                            WILDCARD
                        } else {
                            s.sample(&mut rng) as u32
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(QueryWorkload {
        queries,
        filters,
        absence_fraction,
    })
}

/// Gaussian mixture for synthetic embeddings: centres uniform in
/// `[0, center_scale]^r`, isotropic noise of standard deviation `spread`.
///
/// With `intrinsic_dim = 0` the mixture lives directly in `d` dimensions
/// (`r = d`). Otherwise it is drawn in `r = intrinsic_dim` latent
/// dimensions and mapped into `d` dimensions by a fixed random linear map
/// with unit-norm columns plus small ambient noise (`spread / 4`), so
/// neighbourhoods have low intrinsic dimension as in real descriptor data.
/// With `quantize` values are rounded and clamped to `0..=255`, like SIFT
/// descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub d: usize,
    pub clusters: usize,
    pub center_scale: f32,
    pub spread: f32,
    pub quantize: bool,
    pub intrinsic_dim: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// 128-dimensional, byte-valued data with 12 intrinsic dimensions,
    /// standing in for SIFT descriptors.
    pub fn sift_like(seed: u64) -> Self {
        Self {
            d: 128,
            clusters: 100,
            center_scale: 100.0,
            spread: 18.0,
            quantize: true,
            intrinsic_dim: 12,
            seed,
        }
    }

    fn latent_dim(&self) -> usize {
        if self.intrinsic_dim == 0 || self.intrinsic_dim >= self.d {
            self.d
        } else {
            self.intrinsic_dim
        }
    }

    fn centers(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        (0..self.clusters * self.latent_dim())
            .map(|_| rng.gen_range(0.0..self.center_scale.max(f32::MIN_POSITIVE)))
            .collect()
    }

    /// `r x d` map; each latent axis is a random unit vector.
    fn projection(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let unit = Normal::new(0.0f32, 1.0).unwrap();
        let mut w: Vec<f32> = (0..self.latent_dim() * self.d).map(|_| unit.sample(rng)).collect();
        for row in w.chunks_exact_mut(self.d) {
            let n = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(f32::MIN_POSITIVE);
            row.iter_mut().for_each(|v| *v /= n);
        }
        w
    }

    /// Draws `n` points; different `stream` values give independent samples
    /// from the same mixture (e.g. base vs queries).
    pub fn sample(&self, n: usize, stream: u64) -> Result<EmbeddingMatrix> {
        if self.d == 0 || self.clusters == 0 {
            return Err(Error::InvalidConfig("mixture needs d > 0 and clusters > 0".into()));
        }
        let noise = Normal::new(0.0f32, self.spread).map_err(|e| Error::InvalidConfig(format!("spread: {e}")))?;
        let r = self.latent_dim();
        let mut model_rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centers = self.centers(&mut model_rng);
        let projection = (r < self.d).then(|| self.projection(&mut model_rng));
        let ambient =
            Normal::new(0.0f32, self.spread / 4.0).map_err(|e| Error::InvalidConfig(format!("spread: {e}")))?;
        // projected data is centred on the middle of the value range
        let offset = self.center_scale / 2.0;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut values = Vec::with_capacity(n * self.d);
        let mut z = vec![0.0f32; r];
        let mut x = vec![0.0f32; self.d];
        for _ in 0..n {
            let c = rng.gen_range(0..self.clusters);
            for (zi, &mu) in z.iter_mut().zip(&centers[c * r..(c + 1) * r]) {
                *zi = mu + noise.sample(&mut rng);
            }
            match &projection {
                None => x.copy_from_slice(&z),
                Some(w) => {
                    x.iter_mut().for_each(|v| *v = offset + ambient.sample(&mut rng));
                    for (zi, row) in z.iter().zip(w.chunks_exact(self.d)) {
                        for (xv, &wv) in x.iter_mut().zip(row) {
                            *xv += (zi - offset) * wv;
                        }
                    }
                }
            }
            values.extend(
                x.iter()
                    .map(|&v| if self.quantize { v.round().clamp(0.0, 255.0) } else { v }),
            );
        }
        EmbeddingMatrix::new(self.d, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of(m: &EmbeddingMatrix, kind: ElementKind) -> Vec<u8> {
        let mut buf = Vec::new();
        write_vecs(&mut buf, m, kind).unwrap();
        buf
    }

    #[test]
    fn two_record_round_trip() {
        let m = EmbeddingMatrix::from_rows(&[[1.5f32, -2.0, 0.25, 8.0], [0.0, 1.0, 2.0, 3.0]]).unwrap();
        let buf = bytes_of(&m, ElementKind::Float32);
        assert_eq!(buf.len(), 2 * (4 + 16));
        assert_eq!(read_vecs(&buf[..], ElementKind::Float32, None).unwrap(), m);
    }

    #[test]
    fn byte_and_int_kinds() {
        let m = EmbeddingMatrix::from_rows(&[[0.0f32, 255.0, 7.0], [1.0, 2.0, 3.0]]).unwrap();
        for kind in [ElementKind::UInt8, ElementKind::Int32] {
            let buf = bytes_of(&m, kind);
            assert_eq!(buf.len(), 2 * (4 + 3 * kind.width()));
            assert_eq!(read_vecs(&buf[..], kind, None).unwrap(), m);
        }
        let frac = EmbeddingMatrix::from_rows(&[[0.5f32]]).unwrap();
        let mut sink = Vec::new();
        assert!(write_vecs(&mut sink, &frac, ElementKind::UInt8).is_err());
    }

    #[test]
    fn mismatched_dimension_rejected() {
        let mut buf = bytes_of(
            &EmbeddingMatrix::from_rows(&[[1.0f32, 2.0]]).unwrap(),
            ElementKind::Float32,
        );
        buf.extend(bytes_of(
            &EmbeddingMatrix::from_rows(&[[1.0f32, 2.0, 3.0]]).unwrap(),
            ElementKind::Float32,
        ));
        assert!(matches!(
            read_vecs(&buf[..], ElementKind::Float32, None),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn truncated_record_rejected() {
        let buf = bytes_of(
            &EmbeddingMatrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0]]).unwrap(),
            ElementKind::Float32,
        );
        for cut in [buf.len() - 1, buf.len() - 6, 13] {
            assert!(read_vecs(&buf[..cut], ElementKind::Float32, None).is_err(), "cut {cut}");
        }
        assert!(read_vecs(&buf[..0], ElementKind::Float32, None).is_err());
        assert_eq!(read_vecs(&buf[..], ElementKind::Float32, Some(1)).unwrap().n(), 1);
    }

    #[test]
    fn attribute_files_round_trip() {
        let t = AttributeTable::from_rows(&[[0u32, 5, 9], [1, 1, 1]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.bin", "a.csv"] {
            let p = dir.path().join(name);
            save_attributes(&p, &t).unwrap();
            assert_eq!(load_attributes(&p).unwrap(), t);
        }
        let mut bin = Vec::new();
        write_attributes_binary(&mut bin, &t).unwrap();
        assert_eq!(bin.len(), 8 + 6 * 4);
        assert!(read_attributes_binary(&bin[..bin.len() - 2]).is_err());
    }

    #[test]
    fn generation_is_deterministic_and_wildcard_free() {
        let spec = AttributeSpec {
            seed: 5,
            ..AttributeSpec::default_l3()
        };
        let a = gen_attributes(1_000, &spec).unwrap();
        assert_eq!(a, gen_attributes(1_000, &spec).unwrap());
        assert!(!a.as_slice().contains(&WILDCARD));
        assert!(a.as_slice().iter().all(|&c| c < 12));
    }

    /// Per-value counts within 3 multinomial sigma of `n * p_j`.
    fn assert_frequencies(spec: &AttributeSpec, n: usize) {
        let a = gen_attributes(n, spec).unwrap();
        for (pos, &c) in spec.cardinalities.iter().enumerate() {
            let probs = spec.distribution.probabilities(c);
            let mut counts = vec![0usize; c as usize];
            a.rows().for_each(|r| counts[r[pos] as usize] += 1);
            for (j, &p) in probs.iter().enumerate() {
                let mean = n as f64 * p;
                let sigma = (n as f64 * p * (1.0 - p)).sqrt();
                assert!(
                    (counts[j] as f64 - mean).abs() <= 3.0 * sigma.max(1e-9) + 1e-9,
                    "pos {pos} value {j}: {} vs {mean:.1} ± {sigma:.1}",
                    counts[j]
                );
            }
        }
    }

    #[test]
    fn uniform_frequencies() {
        let spec = AttributeSpec {
            cardinalities: vec![10],
            distribution: ValueDistribution::Uniform,
            seed: 1,
        };
        assert_frequencies(&spec, 100_000);
    }

    #[test]
    fn exponential_frequencies() {
        let spec = AttributeSpec {
            cardinalities: vec![12],
            distribution: ValueDistribution::Exponential { lambda: 1.0 },
            seed: 2,
        };
        // analytic: p_j = e^-j (1 - e^-1) / (1 - e^-12)
        let probs = spec.distribution.probabilities(12);
        let q = (-1.0f64).exp();
        for (j, p) in probs.iter().enumerate() {
            let want = q.powi(j as i32) * (1.0 - q) / (1.0 - q.powi(12));
            assert!((p - want).abs() < 1e-12);
        }
        assert_frequencies(&spec, 100_000);
    }

    #[test]
    fn invalid_specs() {
        let bad = AttributeSpec {
            cardinalities: vec![3],
            distribution: ValueDistribution::Exponential { lambda: 0.0 },
            seed: 0,
        };
        assert!(gen_attributes(10, &bad).is_err());
        let empty = AttributeSpec {
            cardinalities: vec![],
            ..AttributeSpec::default_l3()
        };
        assert!(gen_attributes(10, &empty).is_err());
    }

    fn queries(n: usize) -> EmbeddingMatrix {
        EmbeddingMatrix::new(2, vec![0.0; 2 * n]).unwrap()
    }

    #[test]
    fn absence_extremes() {
        let spec = AttributeSpec::default_l3();
        let all = gen_workload(queries(200), &spec, 1.0, 3).unwrap();
        assert!(all.filters.iter().all(|f| f.wildcard_count() == 3));
        let none = gen_workload(queries(200), &spec, 0.0, 3).unwrap();
        assert!(none.filters.iter().all(|f| f.wildcard_count() == 0));
        assert!(gen_workload(queries(1), &spec, 1.5, 3).is_err());
    }

    #[test]
    fn half_absence_mean_wildcards() {
        let spec = AttributeSpec {
            cardinalities: vec![12; 10],
            ..AttributeSpec::default_l3()
        };
        let n = 10_000;
        let w = gen_workload(queries(n), &spec, 0.5, 4).unwrap();
        let mean = w.filters.iter().map(|f| f.wildcard_count()).sum::<usize>() as f64 / n as f64;
        // binomial(10, 0.5) per query: sigma of the mean = sqrt(2.5 / n)
        let sigma = (2.5f64 / n as f64).sqrt();
        assert!((mean - 5.0).abs() <= 3.0 * sigma, "{mean}");
    }

    #[test]
    fn fully_specified_filters_are_satisfiable() {
        let spec = AttributeSpec {
            seed: 9,
            ..AttributeSpec::default_l3()
        };
        let data = gen_attributes(100_000, &spec).unwrap();
        let w = gen_workload(queries(1_000), &spec, 0.0, 10).unwrap();
        let satisfiable = w
            .filters
            .iter()
            .filter(|f| data.rows().any(|r| f.matches(r).unwrap()))
            .count();
        assert!(satisfiable >= 990, "{satisfiable}");
    }

    #[test]
    fn mixture_streams_differ_but_share_shape() {
        let spec = MixtureSpec::sift_like(1);
        let a = spec.sample(50, 0).unwrap();
        let b = spec.sample(50, 1).unwrap();
        assert_eq!(a.d(), 128);
        assert_ne!(a, b);
        assert!(a
            .as_slice()
            .iter()
            .all(|&v| v.fract() == 0.0 && (0.0..=255.0).contains(&v)));
        assert_eq!(a, spec.sample(50, 0).unwrap());
    }

    #[test]
    fn projected_mixture_spans_latent_dimensions_only() {
        let spec = MixtureSpec {
            d: 16,
            clusters: 10,
            center_scale: 100.0,
            spread: 0.0,
            quantize: false,
            intrinsic_dim: 2,
            seed: 3,
        };
        let x = spec.sample(40, 0).unwrap();
        let diff = |i: usize| -> Vec<f64> { x.row(i).iter().zip(x.row(0)).map(|(a, b)| (a - b) as f64).collect() };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let vs: Vec<Vec<f64>> = (1..40).map(diff).filter(|v| dot(v, v) > 1.0).take(3).collect();
        assert_eq!(vs.len(), 3);
        // Gram determinant of three differences in a 2-d affine plane vanishes
        let g: Vec<Vec<f64>> = vs.iter().map(|a| vs.iter().map(|b| dot(a, b)).collect()).collect();
        let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
            + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
        let scale = g[0][0] * g[1][1] * g[2][2];
        assert!(det.abs() < 1e-6 * scale, "{det} vs {scale}");
    }
}
