use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Aain, AainEdge, Direction, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemporalPattern {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
}

impl TemporalPattern {
    pub const ALL: [TemporalPattern; 6] = [
        TemporalPattern::A1,
        TemporalPattern::A2,
        TemporalPattern::A3,
        TemporalPattern::A4,
        TemporalPattern::A5,
        TemporalPattern::A6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The 2-edge taxonomy, seen from the center: direction of the earlier and
/// later edge, and whether both edges touch the same neighbor.
///
/// Distinct neighbors: in/out = a1, out/in = a2, out/out = a3, in/in = a4.
/// Same neighbor: opposite directions (either order) = a5, same = a6.
pub(crate) const fn taxonomy(first: Direction, second: Direction, same: bool) -> TemporalPattern {
    use Direction::{In, Out};
    use TemporalPattern::*;
    match (first, second, same) {
        (In, Out, false) => A1,
        (Out, In, false) => A2,
        (Out, Out, false) => A3,
        (In, In, false) => A4,
        (In, Out, true) | (Out, In, true) => A5,
        (In, In, true) | (Out, Out, true) => A6,
    }
}

/// Direction and neighbor of a non-self-loop edge relative to `center`.
fn orient(center: NodeId, e: &AainEdge) -> Option<(Direction, NodeId)> {
    if e.is_self_loop() {
        None
    } else if e.dst == center {
        Some((Direction::In, e.src))
    } else if e.src == center {
        Some((Direction::Out, e.dst))
    } else {
        None
    }
}

/// Classifies an ordered edge pair at `center` (`e1` earlier). Pairs with a
/// self-loop have no pattern.
pub fn classify_edge_pair(center: NodeId, e1: &AainEdge, e2: &AainEdge) -> Result<Option<TemporalPattern>> {
    for e in [e1, e2] {
        if e.src != center && e.dst != center {
            return Err(Error::NotIncident {
                src: e.src,
                dst: e.dst,
                tx: e.tx,
            });
        }
    }
    Ok(match (orient(center, e1), orient(center, e2)) {
        (Some((d1, n1)), Some((d2, n2))) => Some(taxonomy(d1, d2, n1 == n2)),
        _ => None,
    })
}

/// Per-address a1..a6 counts (center-based) for one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalCensus {
    pub delta: u64,
    /// Indexed by node id of the address book.
    pub counts: Vec<[u64; 6]>,
}

impl TemporalCensus {
    pub fn get(&self, node: NodeId) -> &[u64; 6] {
        &self.counts[node as usize]
    }

    pub fn totals(&self) -> [u64; 6] {
        let mut out = [0u64; 6];
        for c in &self.counts {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v;
            }
        }
        out
    }
}

/// Counts, for every center `u`, the ordered pairs of distinct incident
/// edges `e1 < e2` (in the graph's total order) with `t2 - t1 <= delta`.
///
/// A single pass over each incidence list keeps running in/out totals and
/// per-neighbor tallies for the edges still inside the window, so each pair
/// is classified in O(1) without being enumerated.
pub fn count_temporal_motifs(aain: &Aain, delta: u64) -> TemporalCensus {
    let counts = (0..aain.book().len() as NodeId)
        .into_par_iter()
        .map(|u| count_center(aain, u, delta))
        .collect();
    TemporalCensus { delta, counts }
}

fn count_center(aain: &Aain, u: NodeId, delta: u64) -> [u64; 6] {
    let mut counts = [0u64; 6];
    let edges: Vec<(u64, Direction, NodeId)> = aain
        .incident(u)
        .iter()
        .filter_map(|&e| {
            let edge = aain.edge(e);
            orient(u, edge).map(|(d, n)| (edge.t, d, n))
        })
        .collect();
    if edges.len() < 2 {
        return counts;
    }

    // Per neighbor: [edges from it into u, edges from u to it] inside the window.
    let mut by_neighbor: HashMap<NodeId, [u64; 2]> = HashMap::new();
    let mut totals = [0u64; 2];
    let slot = |d: Direction| match d {
        Direction::In => 0,
        Direction::Out => 1,
    };
    let mut left = 0;
    for &(t, dir, nb) in &edges {
        while edges[left].0 + delta < t {
            let (_, d, n) = edges[left];
            totals[slot(d)] -= 1;
            let tally = by_neighbor.get_mut(&n).expect("neighbor inside window");
            tally[slot(d)] -= 1;
            if tally == &[0, 0] {
                by_neighbor.remove(&n);
            }
            left += 1;
        }
        let same = by_neighbor.get(&nb).copied().unwrap_or([0, 0]);
        for first in [Direction::In, Direction::Out] {
            let s = slot(first);
            counts[taxonomy(first, dir, true).index()] += same[s];
            counts[taxonomy(first, dir, false).index()] += totals[s] - same[s];
        }
        totals[slot(dir)] += 1;
        by_neighbor.entry(nb).or_insert([0, 0])[slot(dir)] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AddressBook;
    use crate::ingest::{AddressUniverse, TxRecord};

    fn edge(src: NodeId, dst: NodeId, t: u64) -> AainEdge {
        AainEdge { src, dst, tx: 0, t }
    }

    #[test]
    fn classify_examples() {
        let (u, v, w) = (0, 1, 2);
        let got = classify_edge_pair(u, &edge(v, u, 0), &edge(u, w, 100)).unwrap();
        assert_eq!(got, Some(TemporalPattern::A1));
        let got = classify_edge_pair(u, &edge(u, w, 0), &edge(v, u, 50)).unwrap();
        assert_eq!(got, Some(TemporalPattern::A2));
        let got = classify_edge_pair(u, &edge(v, u, 0), &edge(u, v, 10)).unwrap();
        assert_eq!(got, Some(TemporalPattern::A5));
        let got = classify_edge_pair(u, &edge(u, v, 0), &edge(v, u, 10)).unwrap();
        assert_eq!(got, Some(TemporalPattern::A5));
        let got = classify_edge_pair(u, &edge(u, v, 0), &edge(u, w, 0)).unwrap();
        assert_eq!(got, Some(TemporalPattern::A3));
        let got = classify_edge_pair(u, &edge(v, u, 0), &edge(w, u, 0)).unwrap();
        assert_eq!(got, Some(TemporalPattern::A4));
        let got = classify_edge_pair(u, &edge(v, u, 0), &edge(v, u, 1)).unwrap();
        assert_eq!(got, Some(TemporalPattern::A6));
        let got = classify_edge_pair(u, &edge(u, u, 0), &edge(v, u, 1)).unwrap();
        assert_eq!(got, None);
        assert!(classify_edge_pair(u, &edge(v, w, 0), &edge(v, u, 1)).is_err());
    }

    fn graph(edges: &[(&str, &str, u64)]) -> Aain {
        let recs: Vec<TxRecord> = edges
            .iter()
            .enumerate()
            .map(|(i, (s, d, t))| TxRecord {
                tx_id: format!("t{i}"),
                timestamp: *t,
                inputs: vec![(s.to_string(), 1)],
                outputs: vec![(d.to_string(), 1)],
            })
            .collect();
        crate::graph::build_aain(&recs, &AddressUniverse::all(&recs)).unwrap()
    }

    fn counts_of(g: &Aain, c: &TemporalCensus, name: &str) -> [u64; 6] {
        let book: &AddressBook = g.book();
        *c.get(book.id(name).unwrap())
    }

    #[test]
    fn window_includes_and_excludes() {
        let g = graph(&[("v", "u", 0), ("u", "w", 3600)]);
        let c = count_temporal_motifs(&g, 10_800);
        assert_eq!(counts_of(&g, &c, "u"), [1, 0, 0, 0, 0, 0]);
        let c = count_temporal_motifs(&g, 60);
        assert_eq!(counts_of(&g, &c, "u"), [0; 6]);
    }

    #[test]
    fn window_boundary_is_inclusive() {
        let g = graph(&[("v", "u", 0), ("u", "w", 60)]);
        let c = count_temporal_motifs(&g, 60);
        assert_eq!(counts_of(&g, &c, "u"), [1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn self_loops_are_skipped() {
        let g = graph(&[("u", "u", 0), ("v", "u", 1), ("u", "v", 2)]);
        let c = count_temporal_motifs(&g, 100);
        assert_eq!(counts_of(&g, &c, "u"), [0, 0, 0, 0, 1, 0]);
        assert_eq!(counts_of(&g, &c, "v"), [0, 0, 0, 0, 1, 0]);
    }
}
