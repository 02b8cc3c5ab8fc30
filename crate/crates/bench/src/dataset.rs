//! Dataset assembly and the query filter file format.
//!
//! Filter files are CSV without a header, one filter per line, `*` for a
//! wildcard position: `3,*,0`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use caps_core::datagen::{self, AttributeSpec, ElementKind, MixtureSpec};
use caps_core::{AttributeTable, EmbeddingMatrix, QueryFilter, WILDCARD};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub vectors: Arc<EmbeddingMatrix>,
    pub attrs: Arc<AttributeTable>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, vectors: EmbeddingMatrix, attrs: AttributeTable) -> Result<Self> {
        if vectors.n() != attrs.n() {
            bail!("{} vectors but {} attribute rows", vectors.n(), attrs.n());
        }
        Ok(Self {
            name: name.into(),
            vectors: Arc::new(vectors),
            attrs: Arc::new(attrs),
        })
    }

    /// Reads a `.fvecs`/`.bvecs`/`.ivecs` file, keeping at most `limit`
    /// rows. Attributes come from `attrs` if given, else from `spec`.
    pub fn load(vectors: &Path, attrs: Option<&Path>, spec: &AttributeSpec, limit: Option<usize>) -> Result<Self> {
        let vecs = load_vectors(vectors, limit)?;
        let table = match attrs {
            Some(p) => {
                let t = datagen::load_attributes(p).with_context(|| format!("reading {}", p.display()))?;
                if t.n() < vecs.n() {
                    bail!("{} has {} rows, need {}", p.display(), t.n(), vecs.n());
                }
                t.head(vecs.n())
            }
            None => datagen::gen_attributes(vecs.n(), spec)?,
        };
        let name = vectors
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::new(name, vecs, table)
    }

    pub fn synthetic(n: usize, mix: &MixtureSpec, spec: &AttributeSpec) -> Result<Self> {
        Self::new(
            format!("mixture-d{}-n{n}", mix.d),
            mix.sample(n, 0)?,
            datagen::gen_attributes(n, spec)?,
        )
    }

    pub fn n(&self) -> usize {
        self.vectors.n()
    }
}

pub fn load_vectors(path: &Path, limit: Option<usize>) -> Result<EmbeddingMatrix> {
    let kind = ElementKind::from_path(path)
        .with_context(|| format!("{}: expected .fvecs, .bvecs or .ivecs", path.display()))?;
    let m = match limit {
        Some(n) => datagen::load_vecs_head(path, kind, n),
        None => datagen::load_vecs(path, kind),
    };
    m.with_context(|| format!("reading {}", path.display()))
}

/// Parses `3,*,0`.
pub fn parse_filter(s: &str) -> Result<QueryFilter> {
    let pattern = s
        .split(',')
        .map(|t| match t.trim() {
            "*" => Ok(WILDCARD),
            v => v
                .parse::<u32>()
                .ok()
                .filter(|&c| c != WILDCARD)
                .with_context(|| format!("bad filter value {v:?}")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QueryFilter::new(pattern))
}

pub fn read_filters(path: &Path) -> Result<Vec<QueryFilter>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_filter(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_filters(path: &Path, filters: &[QueryFilter]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for filter in filters {
        writeln!(f, "{}", format_filter(filter))?;
    }
    f.flush()?;
    Ok(())
}

pub fn format_filter(filter: &QueryFilter) -> String {
    filter
        .pattern()
        .iter()
        .map(|&v| if v == WILDCARD { "*".to_string() } else { v.to_string() })
        .collect::<Vec<_>>()
        .join(",")
}
