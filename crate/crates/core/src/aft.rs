//! Attribute frequency tree (AFT).
//!
//! One tree per first-level partition. Each level peels every remaining
//! member that carries the currently most frequent `(position, value)` tag
//! into a leaf; after `h` levels the leftovers form the remainder. Leaves and
//! remainder are disjoint and together cover the partition.
//!
//! Frequencies are taken over all `(position, value)` pairs of the members
//! still remaining. Ties go to the lowest position, then the lowest value. A
//! tag held by a single member is never peeled; the tree stops early instead.

use std::cmp::Reverse;

use fnv::FnvHashMap;

use crate::types::{AttributeTable, QueryFilter};

/// An attribute identity: code `value` at attribute `position`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    pub position: u32,
    pub value: u32,
}

impl Tag {
    pub fn new(position: u32, value: u32) -> Self {
        Self { position, value }
    }

    #[inline]
    pub fn is_in(&self, row: &[u32]) -> bool {
        row.get(self.position as usize) == Some(&self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AftLeaf {
    pub tag: Tag,
    pub members: Vec<u32>,
}

/// Sub-partition of one tree: a tagged leaf or the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Leaf(usize),
    Remainder,
}

/// How a query filter picks sub-partitions inside a probed partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SubpartitionMode {
    /// Every leaf whose tag equals a constrained position of the filter; the
    /// remainder alone when nothing hits.
    Literal,
    /// The smallest slot set guaranteed to hold every matching member: the
    /// earliest hit leaf plus earlier leaves tagged on wildcard positions, or
    /// with no hit, all wildcard-tagged leaves plus the remainder. For a fully
    /// specified filter this is exactly one slot.
    #[default]
    Covering,
    /// All leaves and the remainder.
    Exhaustive,
}

impl std::str::FromStr for SubpartitionMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "covering" => Ok(Self::Covering),
            "exhaustive" => Ok(Self::Exhaustive),
            other => Err(crate::Error::InvalidConfig(format!(
                "unknown sub-partition mode {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for SubpartitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Literal => "literal",
            Self::Covering => "covering",
            Self::Exhaustive => "exhaustive",
        })
    }
}

/// Tag table of one tree: split-ordered tags and a tag -> leaf hash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagRouter {
    tags: Vec<Tag>,
    leaf_of: FnvHashMap<Tag, usize>,
}

impl TagRouter {
    pub fn from_tags(tags: Vec<Tag>) -> Self {
        let leaf_of = tags.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        Self { tags, leaf_of }
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn leaf_count(&self) -> usize {
        self.tags.len()
    }

    pub fn leaf_for(&self, tag: Tag) -> Option<usize> {
        self.leaf_of.get(&tag).copied()
    }

    #[inline]
    fn probe(&self, position: usize, value: u32) -> Option<usize> {
        if self.tags.is_empty() {
            return None;
        }
        self.leaf_of.get(&Tag::new(position as u32, value)).copied()
    }

    /// Leaves whose tag the filter names, or the remainder when none does.
    /// One hash probe per constrained position.
    pub fn lookup(&self, filter: &QueryFilter) -> Vec<Slot> {
        let mut out = Vec::new();
        self.select_into(filter, SubpartitionMode::Literal, &mut out);
        out
    }

    /// Slots to scan for `filter` under `mode`, appended to `out` in
    /// ascending slot order.
    pub fn select_into(&self, filter: &QueryFilter, mode: SubpartitionMode, out: &mut Vec<Slot>) {
        match mode {
            SubpartitionMode::Exhaustive => {
                out.extend((0..self.tags.len()).map(Slot::Leaf));
                out.push(Slot::Remainder);
            }
            SubpartitionMode::Literal => {
                let start = out.len();
                out.extend(
                    filter
                        .constraints()
                        .filter_map(|(pos, v)| self.probe(pos, v))
                        .map(Slot::Leaf),
                );
                if out.len() == start {
                    out.push(Slot::Remainder);
                } else {
                    out[start..].sort_unstable();
                }
            }
            SubpartitionMode::Covering => {
                let first_hit = filter.constraints().filter_map(|(pos, v)| self.probe(pos, v)).min();
                if filter.wildcard_count() > 0 {
                    let limit = first_hit.unwrap_or(self.tags.len());
                    out.extend(
                        self.tags[..limit]
                            .iter()
                            .enumerate()
                            .filter(|(_, t)| filter.is_wildcard(t.position as usize))
                            .map(|(j, _)| Slot::Leaf(j)),
                    );
                }
                out.push(first_hit.map_or(Slot::Remainder, Slot::Leaf));
            }
        }
    }

    /// Slot an attribute row belongs to: the earliest leaf whose tag it
    /// carries, else the remainder.
    pub fn route(&self, row: &[u32]) -> Slot {
        row.iter()
            .enumerate()
            .filter_map(|(pos, &v)| self.probe(pos, v))
            .min()
            .map_or(Slot::Remainder, Slot::Leaf)
    }
}

/// A built tree with its member lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aft {
    leaves: Vec<AftLeaf>,
    remainder: Vec<u32>,
    router: TagRouter,
}

impl Aft {
    /// Greedy frequency peeling of `members` for up to `h` levels.
    pub fn build(members: &[u32], attrs: &AttributeTable, h: usize) -> Self {
        let mut counts: FnvHashMap<Tag, usize> = FnvHashMap::default();
        if h > 0 {
            for &id in members {
                for (pos, &v) in attrs.row(id as usize).iter().enumerate() {
                    *counts.entry(Tag::new(pos as u32, v)).or_insert(0) += 1;
                }
            }
        }

        let mut remaining: Vec<u32> = members.to_vec();
        let mut leaves = Vec::new();
        while leaves.len() < h && !remaining.is_empty() {
            let best = counts
                .iter()
                .filter(|(_, &c)| c >= 2)
                .max_by_key(|(t, &c)| (c, Reverse(t.position), Reverse(t.value)))
                .map(|(&t, _)| t);
            let Some(tag) = best else { break };

            let (taken, kept): (Vec<u32>, Vec<u32>) =
                remaining.into_iter().partition(|&id| tag.is_in(attrs.row(id as usize)));
            for &id in &taken {
                for (pos, &v) in attrs.row(id as usize).iter().enumerate() {
                    let t = Tag::new(pos as u32, v);
                    let c = counts.get_mut(&t).expect("counted above");
                    *c -= 1;
                    if *c == 0 {
                        counts.remove(&t);
                    }
                }
            }
            remaining = kept;
            leaves.push(AftLeaf { tag, members: taken });
        }

        let router = TagRouter::from_tags(leaves.iter().map(|l| l.tag).collect());
        Self {
            leaves,
            remainder: remaining,
            router,
        }
    }

    pub fn leaves(&self) -> &[AftLeaf] {
        &self.leaves
    }

    pub fn remainder(&self) -> &[u32] {
        &self.remainder
    }

    pub fn router(&self) -> &TagRouter {
        &self.router
    }

    pub fn members(&self, slot: Slot) -> &[u32] {
        match slot {
            Slot::Leaf(j) => &self.leaves[j].members,
            Slot::Remainder => &self.remainder,
        }
    }

    /// See [`TagRouter::lookup`].
    pub fn lookup(&self, filter: &QueryFilter) -> Vec<Slot> {
        self.router.lookup(filter)
    }

    /// Splits into the tag router and the member lists in slot order
    /// (leaves first, remainder last).
    pub fn into_parts(self) -> (TagRouter, Vec<Vec<u32>>) {
        let mut lists: Vec<Vec<u32>> = self.leaves.into_iter().map(|l| l.members).collect();
        lists.push(self.remainder);
        (self.router, lists)
    }
}
