use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use ordered_float::OrderedFloat;

use super::{check_threshold, Partition};
use crate::similarity::SparseDistanceMatrix;
use crate::{ResponseId, Result};

/// Heap key: (linkage, lower cluster id, higher cluster id, their versions).
type Candidate = Reverse<(OrderedFloat<f64>, u32, u32, u32, u32)>;

struct State {
    members: Vec<Vec<ResponseId>>,
    /// neighbour slot -> (max distance over observed cross pairs, number of
    /// cross pairs with distance < threshold).
    links: Vec<HashMap<u32, (f64, u64)>>,
    version: Vec<u32>,
    active: Vec<bool>,
    heap: BinaryHeap<Candidate>,
}

impl State {
    fn push(&mut self, a: u32, b: u32, linkage: f64) {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.heap.push(Reverse((
            OrderedFloat(linkage),
            a,
            b,
            self.version[a as usize],
            self.version[b as usize],
        )));
    }

    fn is_current(&self, a: u32, b: u32, va: u32, vb: u32) -> bool {
        self.active[a as usize]
            && self.active[b as usize]
            && self.version[a as usize] == va
            && self.version[b as usize] == vb
    }

    /// Absorbs `b` into `a` (`a < b`) and refreshes every link touching them.
    fn merge(&mut self, a: u32, b: u32) {
        let (ai, bi) = (a as usize, b as usize);
        let moved = std::mem::take(&mut self.members[bi]);
        self.members[ai].extend(moved);
        self.active[bi] = false;
        self.version[ai] += 1;

        let la = std::mem::take(&mut self.links[ai]);
        let lb = std::mem::take(&mut self.links[bi]);
        let mut combined: HashMap<u32, (f64, u64)> = HashMap::with_capacity(la.len() + lb.len());
        for (x, (d, c)) in la.into_iter().chain(lb) {
            if x == a || x == b {
                continue;
            }
            let e = combined.entry(x).or_insert((0.0, 0));
            e.0 = e.0.max(d);
            e.1 += c;
        }

        let size_c = self.members[ai].len() as u64;
        let mut fresh = Vec::new();
        for (&x, &(d, c)) in &combined {
            let xi = x as usize;
            self.links[xi].remove(&a);
            self.links[xi].remove(&b);
            self.links[xi].insert(a, (d, c));
            if c == size_c * self.members[xi].len() as u64 {
                fresh.push((x, d));
            }
        }
        self.links[ai] = combined;
        // deterministic push order; the heap key already orders ties
        fresh.sort_unstable_by_key(|&(x, _)| x);
        for (x, d) in fresh {
            self.push(a, x, d);
        }
    }
}

/// Complete-linkage agglomerative clustering on the candidate graph.
///
/// Repeatedly merges the two clusters with the smallest complete-linkage
/// distance while it is strictly below `threshold`; ties go to the pair with
/// the lowest (first id, second id), a cluster's id being its lowest member.
/// Pairs absent from `d` have distance 1 and can never be inside a cluster,
/// so only stored pairs below the threshold are ever inspected.
pub fn complete_linkage_cluster(d: &SparseDistanceMatrix, threshold: f64) -> Result<Partition> {
    check_threshold(threshold)?;
    let n = d.size();
    let mut st = State {
        members: (0..n as ResponseId).map(|i| vec![i]).collect(),
        links: vec![HashMap::new(); n],
        version: vec![0; n],
        active: vec![true; n],
        heap: BinaryHeap::new(),
    };
    for (p, dist) in d.entries() {
        if dist < threshold {
            st.links[p.lo() as usize].insert(p.hi(), (dist, 1));
            st.links[p.hi() as usize].insert(p.lo(), (dist, 1));
            st.push(p.lo(), p.hi(), dist);
        }
    }
    while let Some(Reverse((_, a, b, va, vb))) = st.heap.pop() {
        if st.is_current(a, b, va, vb) {
            st.merge(a, b);
        }
    }
    let groups = st
        .members
        .into_iter()
        .zip(st.active)
        .filter_map(|(m, alive)| alive.then_some(m))
        .collect();
    Ok(Partition::new(groups))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, entries: &[(u32, u32, f64)]) -> SparseDistanceMatrix {
        let mut m = SparseDistanceMatrix::new(n);
        for &(a, b, d) in entries {
            m.insert(a, b, d).unwrap();
        }
        m
    }

    #[test]
    fn tie_resolved_by_second_id() {
        let d = matrix(3, &[(0, 1, 0.1), (0, 2, 0.1)]);
        let p = complete_linkage_cluster(&d, 0.25).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1], vec![2]]);
    }

    #[test]
    fn all_zero_distances_merge_everything() {
        let mut e = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                e.push((a, b, 0.0));
            }
        }
        let p = complete_linkage_cluster(&matrix(4, &e), 0.25).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1, 2, 3]]);
    }

    #[test]
    fn no_pairs_gives_singletons() {
        let p = complete_linkage_cluster(&SparseDistanceMatrix::new(3), 0.25).unwrap();
        assert_eq!(p.groups(), &[vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn strict_inequality() {
        let p = complete_linkage_cluster(&matrix(2, &[(0, 1, 0.25)]), 0.25).unwrap();
        assert_eq!(p.len(), 2);
        let p = complete_linkage_cluster(&matrix(2, &[(0, 1, 0.24)]), 0.25).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn complete_not_single_linkage() {
        // chain 0-1-2 with 0-2 far: single linkage would join all three
        let d = matrix(3, &[(0, 1, 0.1), (1, 2, 0.05), (0, 2, 0.9)]);
        let p = complete_linkage_cluster(&d, 0.25).unwrap();
        assert_eq!(p.groups(), &[vec![0], vec![1, 2]]);
    }

    #[test]
    fn bad_threshold() {
        let d = SparseDistanceMatrix::new(1);
        assert!(complete_linkage_cluster(&d, 0.0).is_err());
        assert!(complete_linkage_cluster(&d, 1.5).is_err());
        assert!(complete_linkage_cluster(&d, 1.0).is_ok());
    }
}
