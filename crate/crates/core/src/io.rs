//! Index file format.
//!
//! Little-endian throughout. A fixed 64-byte header:
//!
//! | offset | size | field                                          |
//! |--------|------|------------------------------------------------|
//! | 0      | 4    | magic `CAPS`                                   |
//! | 4      | 4    | format version (1)                             |
//! | 8      | 8    | N, point count                                 |
//! | 16     | 4    | d, dimensionality                              |
//! | 20     | 4    | L, attribute count                             |
//! | 24     | 4    | B, partition count                             |
//! | 28     | 4    | h, AFT height                                  |
//! | 32     | 1    | metric (0 squared-euclidean, 1 ip, 2 cosine)   |
//! | 33     | 1    | r, attribute precision in bytes (1..=4)        |
//! | 34     | 1    | flags (bit 0: dataset blocks embedded)         |
//! | 35     | 1    | sub-partition mode (0 literal, 1 covering, 2 exhaustive) |
//! | 36     | 8    | tombstone count, reserved, always 0            |
//! | 44     | 8    | payload length in bytes                        |
//! | 52     | 4    | CRC-32 of header (this field zeroed) + payload |
//! | 56     | 8    | build-time balance cap (0 = none)              |
//!
//! followed by the payload blocks, in order:
//!
//! 1. centroids: `B*d` f32 (`4Bd` bytes)
//! 2. sub-partition end offsets: `B*(h+1)` u32 (`4B(h+1)` bytes)
//! 3. flat member ids: `N` u32 (`4N` bytes)
//! 4. tags: `B*(h+1)` slots of (position, value), each an `r`-byte
//!    unsigned integer (`2B(h+1)r` bytes); unused slots and the remainder
//!    slot hold all-ones in both fields
//! 5. only with the embedded flag: vectors `N*d` f32 (`4Nd` bytes), then
//!    attribute codes `N*L`, each `r` bytes (`NLr` bytes)
//!
//! The payload length without the embedded blocks is exactly
//! [`crate::analysis::estimate_index_size`] with `include_data = false`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::aft::{SubpartitionMode, Tag, TagRouter};
use crate::error::{Error, Result};
use crate::index::{CapsIndex, MAX_HEIGHT};
use crate::partitioner::PartitionModel;
use crate::types::{AttributeTable, EmbeddingMatrix, Metric};

pub const MAGIC: [u8; 4] = *b"CAPS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;
const FLAG_EMBEDDED: u8 = 1;

fn mode_code(mode: SubpartitionMode) -> u8 {
    match mode {
        SubpartitionMode::Literal => 0,
        SubpartitionMode::Covering => 1,
        SubpartitionMode::Exhaustive => 2,
    }
}

fn mode_from_code(code: u8) -> Option<SubpartitionMode> {
    match code {
        0 => Some(SubpartitionMode::Literal),
        1 => Some(SubpartitionMode::Covering),
        2 => Some(SubpartitionMode::Exhaustive),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Header {
    n: u64,
    d: u32,
    l: u32,
    b: u32,
    h: u32,
    metric: u8,
    r: u8,
    flags: u8,
    mode: u8,
    payload_len: u64,
    checksum: u32,
    balance_cap: u64,
}

impl Header {
    fn embedded(&self) -> bool {
        self.flags & FLAG_EMBEDDED != 0
    }

    /// Payload length implied by the shape fields, `None` on overflow.
    fn expected_payload(&self) -> Option<u64> {
        let (n, d, l, b) = (self.n, self.d as u64, self.l as u64, self.b as u64);
        let slots = b.checked_mul(self.h as u64 + 1)?;
        let r = self.r as u64;
        let mut len = 4u64
            .checked_mul(b)?
            .checked_mul(d)?
            .checked_add(slots.checked_mul(4)?)?
            .checked_add(n.checked_mul(4)?)?
            .checked_add(slots.checked_mul(2 * r)?)?;
        if self.embedded() {
            len = len
                .checked_add(n.checked_mul(d)?.checked_mul(4)?)?
                .checked_add(n.checked_mul(l)?.checked_mul(r)?)?;
        }
        Some(len)
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..16].copy_from_slice(&self.n.to_le_bytes());
        out[16..20].copy_from_slice(&self.d.to_le_bytes());
        out[20..24].copy_from_slice(&self.l.to_le_bytes());
        out[24..28].copy_from_slice(&self.b.to_le_bytes());
        out[28..32].copy_from_slice(&self.h.to_le_bytes());
        out[32] = self.metric;
        out[33] = self.r;
        out[34] = self.flags;
        out[35] = self.mode;
        // 36..44: tombstones, reserved
        out[44..52].copy_from_slice(&self.payload_len.to_le_bytes());
        out[52..56].copy_from_slice(&self.checksum.to_le_bytes());
        out[56..64].copy_from_slice(&self.balance_cap.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                needed: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let found: [u8; 4] = bytes[0..4].try_into().unwrap();
        if found != MAGIC {
            return Err(Error::BadMagic { expected: MAGIC, found });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if u64_at(36) != 0 {
            return Err(Error::Corrupt("tombstones are not supported".into()));
        }
        Ok(Self {
            n: u64_at(8),
            d: u32_at(16),
            l: u32_at(20),
            b: u32_at(24),
            h: u32_at(28),
            metric: bytes[32],
            r: bytes[33],
            flags: bytes[34],
            mode: bytes[35],
            payload_len: u64_at(44),
            checksum: u32_at(52),
            balance_cap: u64_at(56),
        })
    }
}

/// CRC-32 over the header with its checksum field zeroed, then the payload.
fn checksum(header: &[u8], payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&header[..52]);
    h.update(&[0u8; 4]);
    h.update(&header[56..HEADER_LEN]);
    h.update(payload);
    h.finalize()
}

fn put_uint(out: &mut Vec<u8>, v: u64, r: usize) {
    out.extend_from_slice(&v.to_le_bytes()[..r]);
}

fn sentinel(r: usize) -> u64 {
    if r >= 8 {
        u64::MAX
    } else {
        (1u64 << (8 * r)) - 1
    }
}

impl CapsIndex {
    /// Serialises the index. With `include_data` the vectors and attribute
    /// codes are embedded; otherwise [`load_with_dataset`] must be given the
    /// same dataset.
    pub fn to_bytes(&self, include_data: bool) -> Vec<u8> {
        let r = self.attribute_precision();
        let mut payload = Vec::new();
        for &c in self.model.centroids() {
            payload.extend_from_slice(&c.to_le_bytes());
        }
        for &e in &self.ends {
            payload.extend_from_slice(&e.to_le_bytes());
        }
        for &id in &self.ids {
            payload.extend_from_slice(&id.to_le_bytes());
        }
        let empty = sentinel(r);
        for router in &self.routers {
            let tags = router.tags();
            for j in 0..=self.height {
                match tags.get(j) {
                    Some(t) if j < self.height => {
                        put_uint(&mut payload, t.position as u64, r);
                        put_uint(&mut payload, t.value as u64, r);
                    }
                    _ => {
                        put_uint(&mut payload, empty, r);
                        put_uint(&mut payload, empty, r);
                    }
                }
            }
        }
        if include_data {
            for &v in self.vectors.as_slice() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            for &a in self.attrs.as_slice() {
                put_uint(&mut payload, a as u64, r);
            }
        }

        let mut header = Header {
            n: self.len() as u64,
            d: self.dim() as u32,
            l: self.attribute_count() as u32,
            b: self.partitions() as u32,
            h: self.height as u32,
            metric: self.metric().to_code(),
            r: r as u8,
            flags: if include_data { FLAG_EMBEDDED } else { 0 },
            mode: mode_code(self.mode),
            payload_len: payload.len() as u64,
            checksum: 0,
            balance_cap: self.model.balance_cap().map_or(0, |c| c as u64),
        };
        header.checksum = checksum(&header.encode(), &payload);
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(&header.encode());
        out.extend_from_slice(&payload);
        out
    }

    /// Writes the index to `path` with the dataset embedded.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_with(path, true)
    }

    pub fn save_with(&self, path: impl AsRef<Path>, include_data: bool) -> Result<()> {
        fs::write(path, self.to_bytes(include_data))?;
        Ok(())
    }
}

/// Reads an index file that embeds its dataset.
pub fn load(path: impl AsRef<Path>) -> Result<CapsIndex> {
    from_bytes(&fs::read(path)?, None)
}

/// Reads an index file, attaching an external dataset when the file does
/// not embed one.
pub fn load_with_dataset(
    path: impl AsRef<Path>,
    vectors: impl Into<Arc<EmbeddingMatrix>>,
    attrs: impl Into<Arc<AttributeTable>>,
) -> Result<CapsIndex> {
    from_bytes(&fs::read(path)?, Some((vectors.into(), attrs.into())))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> &'a [u8] {
        let s = &self.bytes[self.at..self.at + len];
        self.at += len;
        s
    }

    fn uint(&mut self, r: usize) -> u64 {
        let mut buf = [0u8; 8];
        buf[..r].copy_from_slice(self.take(r));
        u64::from_le_bytes(buf)
    }

    fn u32s(&mut self, count: usize) -> Vec<u32> {
        self.take(count * 4)
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    fn f32s(&mut self, count: usize) -> Vec<f32> {
        self.take(count * 4)
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

/// Parses a serialised index. Nothing is returned unless the whole file
/// validates.
pub fn from_bytes(bytes: &[u8], dataset: Option<(Arc<EmbeddingMatrix>, Arc<AttributeTable>)>) -> Result<CapsIndex> {
    let header = Header::decode(bytes)?;
    let corrupt = |m: &str| Error::Corrupt(m.to_string());
    let expected = header
        .expected_payload()
        .ok_or_else(|| corrupt("header sizes overflow"))?;
    if expected != header.payload_len {
        return Err(corrupt("payload length disagrees with header shape"));
    }
    let have = (bytes.len() - HEADER_LEN) as u64;
    if have < expected {
        return Err(Error::Truncated {
            needed: HEADER_LEN as u64 + expected,
            found: bytes.len() as u64,
        });
    }
    if have > expected {
        return Err(corrupt("trailing bytes after payload"));
    }
    let payload = &bytes[HEADER_LEN..];
    let computed = checksum(bytes, payload);
    if computed != header.checksum {
        return Err(Error::Checksum {
            stored: header.checksum,
            computed,
        });
    }

    let metric = Metric::from_code(header.metric).ok_or_else(|| corrupt("unknown metric code"))?;
    let mode = mode_from_code(header.mode).ok_or_else(|| corrupt("unknown sub-partition mode"))?;
    let r = header.r as usize;
    if !(1..=4).contains(&r) {
        return Err(corrupt("attribute precision outside 1..=4"));
    }
    if header.b == 0 || header.d == 0 || header.l == 0 {
        return Err(corrupt("zero partition count, dimensionality or attribute count"));
    }
    if header.h as usize > MAX_HEIGHT {
        return Err(corrupt("AFT height too large"));
    }
    let n = usize::try_from(header.n).map_err(|_| corrupt("point count too large"))?;
    let (d, l, b, h) = (
        header.d as usize,
        header.l as usize,
        header.b as usize,
        header.h as usize,
    );
    let slots = b * (h + 1);

    let mut cur = Cursor { bytes: payload, at: 0 };
    let centroids = EmbeddingMatrix::new(d, cur.f32s(b * d)).map_err(|e| Error::Corrupt(format!("centroids: {e}")))?;
    let ends = cur.u32s(slots);
    let ids = cur.u32s(n);

    let empty = sentinel(r);
    let mut routers = Vec::with_capacity(b);
    for p in 0..b {
        let mut tags = Vec::new();
        let mut closed = false;
        for j in 0..=h {
            let pos = cur.uint(r);
            let val = cur.uint(r);
            let is_empty = pos == empty && val == empty;
            if j == h || closed {
                if !is_empty {
                    return Err(Error::Corrupt(format!("partition {p}: tag in untagged slot {j}")));
                }
                continue;
            }
            if is_empty {
                closed = true;
                continue;
            }
            if pos >= l as u64 {
                return Err(Error::Corrupt(format!("partition {p}: tag position {pos} >= L")));
            }
            tags.push(Tag::new(pos as u32, val as u32));
        }
        let router = TagRouter::from_tags(tags);
        if (0..router.leaf_count()).any(|j| router.leaf_for(router.tags()[j]) != Some(j)) {
            return Err(Error::Corrupt(format!("partition {p}: duplicate tag")));
        }
        routers.push(router);
    }

    let (vectors, attrs) = if header.embedded() {
        let vectors = EmbeddingMatrix::new(d, cur.f32s(n * d)).map_err(|e| Error::Corrupt(format!("vectors: {e}")))?;
        let codes: Vec<u32> = (0..n * l)
            .map(|_| cur.uint(r))
            .map(|v| u32::try_from(v).map_err(|_| corrupt("attribute code overflow")))
            .collect::<Result<_>>()?;
        let attrs = AttributeTable::new(l, codes).map_err(|e| Error::Corrupt(format!("attributes: {e}")))?;
        (Arc::new(vectors), Arc::new(attrs))
    } else {
        let (vectors, attrs) =
            dataset.ok_or_else(|| Error::InvalidConfig("index file has no embedded dataset; supply one".into()))?;
        if vectors.n() != n || vectors.d() != d || attrs.n() != n || attrs.l() != l {
            return Err(Error::InvalidData(format!(
                "supplied dataset is {}x{} / {}x{}, index expects {n}x{d} / {n}x{l}",
                vectors.n(),
                vectors.d(),
                attrs.n(),
                attrs.l()
            )));
        }
        (vectors, attrs)
    };
    debug_assert_eq!(cur.at, payload.len());

    let balance_cap = (header.balance_cap != 0).then_some(header.balance_cap as usize);
    let index = CapsIndex {
        model: PartitionModel::from_centroids(centroids, metric, balance_cap)?,
        height: h,
        mode,
        routers,
        ends,
        ids,
        vectors,
        attrs,
    };
    index.check_invariants()?;
    Ok(index)
}
