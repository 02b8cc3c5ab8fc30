//! Reference checks that do not reuse the code they check.

use std::collections::HashMap;

use caps_core::{filter_matches, Aft, AttributeTable, QueryFilter, SearchResult, Slot, Tag};

/// Peels tags by recounting every `(position, value)` pair over the points
/// still unpeeled, choosing the highest count, then lowest position, then
/// lowest value, and stopping when no pair occurs twice.
pub fn reference_tags(members: &[u32], attrs: &AttributeTable, h: usize) -> Vec<Tag> {
    let mut left: Vec<u32> = members.to_vec();
    let mut tags = Vec::new();
    while tags.len() < h {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for &i in &left {
            for (pos, &v) in attrs.row(i as usize).iter().enumerate() {
                *counts.entry((pos as u32, v)).or_default() += 1;
            }
        }
        let mut best: Option<((u32, u32), usize)> = None;
        for (key, c) in counts {
            if c < 2 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bk, bc)) => c > bc || (c == bc && key < bk),
            };
            if better {
                best = Some((key, c));
            }
        }
        let Some(((pos, value), _)) = best else { break };
        left.retain(|&i| attrs.row(i as usize)[pos as usize] != value);
        tags.push(Tag::new(pos, value));
    }
    tags
}

/// Disjoint cover, leaf purity, leaf exclusion, remainder exclusion and
/// greedy tag order. Returns the first violation found.
pub fn check_aft(aft: &Aft, members: &[u32], attrs: &AttributeTable, h: usize) -> Result<(), String> {
    let mut owner = vec![usize::MAX; attrs.n()];
    let leaves = aft.leaves();
    if leaves.len() > h {
        return Err(format!("{} leaves for height {h}", leaves.len()));
    }
    for (j, leaf) in leaves.iter().enumerate() {
        for &id in &leaf.members {
            let row = attrs.row(id as usize);
            if !leaf.tag.is_in(row) {
                return Err(format!("leaf {j}: point {id} lacks tag {:?}", leaf.tag));
            }
            if let Some(e) = leaves[..j].iter().position(|e| e.tag.is_in(row)) {
                return Err(format!("leaf {j}: point {id} carries earlier tag of leaf {e}"));
            }
            if owner[id as usize] != usize::MAX {
                return Err(format!("point {id} in two sub-partitions"));
            }
            owner[id as usize] = j;
        }
    }
    for &id in aft.members(Slot::Remainder) {
        if leaves.iter().any(|l| l.tag.is_in(attrs.row(id as usize))) {
            return Err(format!("remainder point {id} carries a tag"));
        }
        if owner[id as usize] != usize::MAX {
            return Err(format!("point {id} in two sub-partitions"));
        }
        owner[id as usize] = h;
    }
    let covered = owner.iter().filter(|&&o| o != usize::MAX).count();
    if covered != members.len() || members.iter().any(|&m| owner[m as usize] == usize::MAX) {
        return Err(format!("{covered} points covered, {} members", members.len()));
    }
    let got: Vec<Tag> = leaves.iter().map(|l| l.tag).collect();
    let want = reference_tags(members, attrs, h);
    if got != want {
        return Err(format!("tag order {got:?}, reference {want:?}"));
    }
    Ok(())
}

/// Tallies returned ids that fail their query's filter.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FilterAudit {
    pub checked: u64,
    pub violations: u64,
}

impl FilterAudit {
    pub fn record(&mut self, attrs: &AttributeTable, filter: &QueryFilter, result: &SearchResult) {
        for &id in &result.ids {
            self.checked += 1;
            let ok = (id as usize) < attrs.n() && filter_matches(attrs.row(id as usize), filter).unwrap_or(false);
            if !ok {
                self.violations += 1;
            }
        }
    }

    pub fn merge(&mut self, other: FilterAudit) {
        self.checked += other.checked;
        self.violations += other.violations;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use caps_core::SearchStats;

    #[test]
    fn reference_matches_hand_trace() {
        // (0,1) and (1,5) tie at 3, lower position wins; then (0,2) and
        // (1,5) tie at 2
        let attrs = AttributeTable::from_rows(&[[1, 5], [1, 6], [1, 7], [2, 5], [2, 5], [4, 7]]).unwrap();
        let members: Vec<u32> = (0..6).collect();
        let tags = reference_tags(&members, &attrs, 5);
        assert_eq!(tags, vec![Tag::new(0, 1), Tag::new(0, 2)]);
        let aft = Aft::build(&members, &attrs, 5);
        check_aft(&aft, &members, &attrs, 5).unwrap();
        assert!(check_aft(&aft, &members[..5], &attrs, 5).is_err());
    }

    #[test]
    fn audit_counts_violations() {
        let attrs = AttributeTable::from_rows(&[[0], [1]]).unwrap();
        let r = SearchResult {
            ids: vec![0, 1],
            scores: vec![0.0, 1.0],
            stats: SearchStats::default(),
        };
        let mut a = FilterAudit::default();
        a.record(&attrs, &QueryFilter::new(vec![1]), &r);
        assert_eq!(
            a,
            FilterAudit {
                checked: 2,
                violations: 1
            }
        );
    }
}
