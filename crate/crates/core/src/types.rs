//! Core domain types: vectors, attribute rows, filters and metrics.

use std::fmt;

use crate::error::{Error, Result};

/// Reserved attribute code meaning "any value" in a [`QueryFilter`].
///
/// Never stored in an [`AttributeTable`].
pub const WILDCARD: u32 = u32::MAX;

/// Row-major `n x d` matrix of `f32` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-contiguous values. Every value must be finite.
    pub fn new(d: usize, values: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidData("dimensionality must be positive".into()));
        }
        if !values.len().is_multiple_of(d) {
            return Err(Error::InvalidData(format!(
                "{} values do not divide into rows of {d}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            n: values.len() / d,
            d,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::dims(d, row.len()));
            }
            values.extend_from_slice(row);
        }
        Self::new(d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.d {
            return Err(Error::dims(self.d, row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in inserted row".into()));
        }
        self.values.extend_from_slice(row);
        self.n += 1;
        Ok(())
    }

    /// First `n` rows (or all of them when `n` exceeds the row count).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.n);
        Self {
            n,
            d: self.d,
            values: self.values[..n * self.d].to_vec(),
        }
    }
}

/// Row-major `n x L` table of categorical attribute codes.
///
/// Codes are scoped by position: value 3 at position 0 and value 3 at
/// position 1 are unrelated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    n: usize,
    l: usize,
    values: Vec<u32>,
}

impl AttributeTable {
    pub fn new(l: usize, values: Vec<u32>) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidData("attribute count must be positive".into()));
        }
        if !values.len().is_multiple_of(l) {
            return Err(Error::InvalidData(format!(
                "{} codes do not divide into rows of {l}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v == WILDCARD) {
            return Err(Error::InvalidData(format!(
                "wildcard code stored at row {}, position {}",
                pos / l,
                pos % l
            )));
        }
        Ok(Self {
            n: values.len() / l,
            l,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[u32]>>(rows: &[R]) -> Result<Self> {
        let l = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * l);
        for row in rows {
            let row = row.as_ref();
            if row.len() != l {
                return Err(Error::dims(l, row.len()));
            }
            values.extend_from_slice(row);
        }
        Self::new(l, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.values[i * self.l..(i + 1) * self.l]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.values.chunks_exact(self.l)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.values
    }

    pub fn push_row(&mut self, row: &[u32]) -> Result<()> {
        if row.len() != self.l {
            return Err(Error::dims(self.l, row.len()));
        }
        if row.contains(&WILDCARD) {
            return Err(Error::InvalidData("wildcard code in data attributes".into()));
        }
        self.values.extend_from_slice(row);
        self.n += 1;
        Ok(())
    }

    /// Largest stored code, `None` for an empty table.
    pub fn max_code(&self) -> Option<u32> {
        self.values.iter().copied().max()
    }

    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.n);
        Self {
            n,
            l: self.l,
            values: self.values[..n * self.l].to_vec(),
        }
    }
}

/// Conjunctive equality filter: one required code or [`WILDCARD`] per position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryFilter {
    pattern: Vec<u32>,
}

impl QueryFilter {
    pub fn new(pattern: Vec<u32>) -> Self {
        Self { pattern }
    }

    /// Filter that every row satisfies.
    pub fn any(l: usize) -> Self {
        Self {
            pattern: vec![WILDCARD; l],
        }
    }

    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }

    pub fn pattern(&self) -> &[u32] {
        &self.pattern
    }

    /// Iterator over `(position, required value)` for constrained positions.
    pub fn constraints(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.pattern
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != WILDCARD)
            .map(|(i, &v)| (i, v))
    }

    pub fn wildcard_count(&self) -> usize {
        self.pattern.iter().filter(|&&v| v == WILDCARD).count()
    }

    pub fn is_wildcard(&self, position: usize) -> bool {
        self.pattern[position] == WILDCARD
    }

    /// Checked form of [`filter_matches`].
    pub fn matches(&self, row: &[u32]) -> Result<bool> {
        filter_matches(row, self)
    }

    /// Unchecked match used on the hot path; lengths must agree.
    #[inline]
    pub(crate) fn matches_unchecked(&self, row: &[u32]) -> bool {
        debug_assert_eq!(row.len(), self.pattern.len());
        self.pattern
            .iter()
            .zip(row)
            .all(|(&want, &have)| want == WILDCARD || want == have)
    }
}

impl fmt::Display for QueryFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, &v) in self.pattern.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if v == WILDCARD {
                f.write_str("*")?;
            } else {
                write!(f, "{v}")?;
            }
        }
        f.write_str("]")
    }
}

/// True iff every constrained position of `filter` equals the row's code.
pub fn filter_matches(row: &[u32], filter: &QueryFilter) -> Result<bool> {
    if row.len() != filter.len() {
        return Err(Error::dims(filter.len(), row.len()));
    }
    Ok(filter.matches_unchecked(row))
}

/// Similarity measure. Every metric is normalised to lower-is-better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    SquaredEuclidean,
    /// Negated dot product.
    InnerProduct,
    /// Negated cosine similarity.
    Cosine,
}

impl Metric {
    pub(crate) fn to_code(self) -> u8 {
        match self {
            Metric::SquaredEuclidean => 0,
            Metric::InnerProduct => 1,
            Metric::Cosine => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Metric::SquaredEuclidean),
            1 => Some(Metric::InnerProduct),
            2 => Some(Metric::Cosine),
            _ => None,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" | "squared-euclidean" => Ok(Metric::SquaredEuclidean),
            "ip" | "inner-product" | "dot" => Ok(Metric::InnerProduct),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::SquaredEuclidean => "squared-euclidean",
            Metric::InnerProduct => "inner-product",
            Metric::Cosine => "cosine",
        })
    }
}
