//! The address-address interaction network (AAIN), the transaction-address
//! interaction network (TAIN), and per-address event series.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{AddressUniverse, TxRecord};

pub type NodeId = u32;
pub type TxIdx = u32;

pub const DEFAULT_EDGE_CAP: u64 = 100_000_000;

/// Interns every address seen in a dataset. Ids follow lexicographic order of
/// the address strings, so comparing ids compares addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressBook {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    retained: Vec<bool>,
}

impl AddressBook {
    pub fn new(records: &[TxRecord], universe: &AddressUniverse) -> Self {
        let all: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| r.inputs.iter().chain(&r.outputs))
            .map(|(a, _)| a.as_str())
            .collect();
        let names: Vec<String> = all.into_iter().map(str::to_string).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as NodeId))
            .collect();
        let retained = names.iter().map(|n| universe.contains(n)).collect();
        AddressBook {
            names,
            index,
            retained,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, address: &str) -> Option<NodeId> {
        self.index.get(address).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id as usize]
    }

    pub fn is_retained(&self, id: NodeId) -> bool {
        self.retained[id as usize]
    }

    /// Ids of the retained (filtered-universe) addresses, ascending.
    pub fn retained_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len() as NodeId).filter(|&i| self.retained[i as usize])
    }

    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    fn retained_id(&self, address: &str) -> Result<NodeId> {
        self.id(address)
            .filter(|&i| self.is_retained(i))
            .ok_or_else(|| Error::UnknownAddress(address.to_string()))
    }
}

/// A transaction node. `inputs`/`outputs` hold the distinct participant ids
/// (retained or not), sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxNode {
    pub tx_id: String,
    pub t: u64,
    /// Position of `tx_id` in the lexicographic order of all transaction ids.
    pub rank: u32,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
}

fn tx_nodes(records: &[TxRecord], book: &AddressBook) -> Vec<TxNode> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].tx_id.cmp(&records[b].tx_id));
    let mut rank = vec![0u32; records.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32;
    }
    let distinct = |slots: &[(String, u64)]| -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = slots
            .iter()
            .map(|(a, _)| book.id(a).expect("book covers every address"))
            .collect();
        set.into_iter().collect()
    };
    records
        .iter()
        .zip(rank)
        .map(|(r, rank)| TxNode {
            tx_id: r.tx_id.clone(),
            t: r.timestamp,
            rank,
            inputs: distinct(&r.inputs),
            outputs: distinct(&r.outputs),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AainEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub tx: TxIdx,
    pub t: u64,
}

impl AainEdge {
    pub fn is_self_loop(&self) -> bool {
        self.src == self.dst
    }
}

/// Temporal directed multigraph over the retained addresses: one edge per
/// (input address, output address, transaction).
#[derive(Debug, Clone)]
pub struct Aain {
    book: AddressBook,
    txs: Vec<TxNode>,
    edges: Vec<AainEdge>,
    incidence: Vec<Vec<u32>>,
}

impl Aain {
    pub(crate) fn from_parts(book: AddressBook, txs: Vec<TxNode>, edges: Vec<AainEdge>) -> Self {
        let mut incidence: Vec<Vec<u32>> = vec![Vec::new(); book.len()];
        for (i, e) in edges.iter().enumerate() {
            incidence[e.src as usize].push(i as u32);
            if e.dst != e.src {
                incidence[e.dst as usize].push(i as u32);
            }
        }
        let mut g = Aain {
            book,
            txs,
            edges,
            incidence: Vec::new(),
        };
        incidence
            .par_iter_mut()
            .for_each(|list| list.sort_by(|&a, &b| g.edge_order(a, b)));
        g.incidence = incidence;
        g
    }

    /// Deterministic total order on edges: (t, tx_id, src, dst), then edge index.
    pub fn edge_order(&self, a: u32, b: u32) -> Ordering {
        let (ea, eb) = (&self.edges[a as usize], &self.edges[b as usize]);
        ea.t.cmp(&eb.t)
            .then_with(|| self.txs[ea.tx as usize].rank.cmp(&self.txs[eb.tx as usize].rank))
            .then_with(|| ea.src.cmp(&eb.src))
            .then_with(|| ea.dst.cmp(&eb.dst))
            .then_with(|| a.cmp(&b))
    }

    pub fn book(&self) -> &AddressBook {
        &self.book
    }

    pub fn transactions(&self) -> &[TxNode] {
        &self.txs
    }

    pub fn edges(&self) -> &[AainEdge] {
        &self.edges
    }

    pub fn edge(&self, idx: u32) -> &AainEdge {
        &self.edges[idx as usize]
    }

    /// Edge indices incident to `node`, in the deterministic total order.
    pub fn incident(&self, node: NodeId) -> &[u32] {
        &self.incidence[node as usize]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.book.retained_ids()
    }

    pub fn node_count(&self) -> usize {
        self.book.retained_count()
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.incident(node)
            .iter()
            .filter(|&&e| self.edge(e).dst == node)
            .count()
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.incident(node)
            .iter()
            .filter(|&&e| self.edge(e).src == node)
            .count()
    }

    pub fn successors(&self, node: NodeId) -> BTreeSet<NodeId> {
        self.incident(node)
            .iter()
            .map(|&e| self.edge(e))
            .filter(|e| e.src == node)
            .map(|e| e.dst)
            .collect()
    }

    pub fn predecessors(&self, node: NodeId) -> BTreeSet<NodeId> {
        self.incident(node)
            .iter()
            .map(|&e| self.edge(e))
            .filter(|e| e.dst == node)
            .map(|e| e.src)
            .collect()
    }

    /// Tab-separated `src dst tx_id t` rows.
    pub fn write_edges<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.edges {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.book.name(e.src),
                self.book.name(e.dst),
                self.txs[e.tx as usize].tx_id,
                e.t
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn build_aain(records: &[TxRecord], universe: &AddressUniverse) -> Result<Aain> {
    build_aain_with_cap(records, universe, DEFAULT_EDGE_CAP)
}

/// Builds the AAIN. `cap` bounds the total input x output expansion (over
/// distinct addresses, before filtering).
pub fn build_aain_with_cap(records: &[TxRecord], universe: &AddressUniverse, cap: u64) -> Result<Aain> {
    let book = AddressBook::new(records, universe);
    let txs = tx_nodes(records, &book);
    let mut expansion: u64 = 0;
    let mut edges = Vec::new();
    for (i, tx) in txs.iter().enumerate() {
        expansion += tx.inputs.len() as u64 * tx.outputs.len() as u64;
        if expansion > cap {
            return Err(Error::EdgeCapExceeded {
                tx_id: tx.tx_id.clone(),
                cap,
            });
        }
        for &src in tx.inputs.iter().filter(|&&a| book.is_retained(a)) {
            for &dst in tx.outputs.iter().filter(|&&a| book.is_retained(a)) {
                edges.push(AainEdge {
                    src,
                    dst,
                    tx: i as TxIdx,
                    t: tx.t,
                });
            }
        }
    }
    Ok(Aain::from_parts(book, txs, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TainEdgeKind {
    /// Funds flow from the transaction into the address (amount `a`).
    TxToAddress,
    /// Funds flow from the address into the transaction (amount `b`).
    AddressToTx,
}

impl TainEdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TainEdgeKind::TxToAddress => "transaction-address",
            TainEdgeKind::AddressToTx => "address-transaction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TainEdge {
    pub address: NodeId,
    pub tx: TxIdx,
    pub kind: TainEdgeKind,
    pub amount: u64,
    pub t: u64,
}

/// Bipartite attributed temporal network of address and transaction nodes.
#[derive(Debug, Clone)]
pub struct Tain {
    book: AddressBook,
    txs: Vec<TxNode>,
    edges: Vec<TainEdge>,
    incidence: Vec<Vec<u32>>,
}

impl Tain {
    pub(crate) fn from_parts(book: AddressBook, txs: Vec<TxNode>, edges: Vec<TainEdge>) -> Self {
        let mut incidence: Vec<Vec<u32>> = vec![Vec::new(); book.len()];
        for (i, e) in edges.iter().enumerate() {
            incidence[e.address as usize].push(i as u32);
        }
        Tain {
            book,
            txs,
            edges,
            incidence,
        }
    }

    pub fn book(&self) -> &AddressBook {
        &self.book
    }

    pub fn transactions(&self) -> &[TxNode] {
        &self.txs
    }

    pub fn edges(&self) -> &[TainEdge] {
        &self.edges
    }

    pub fn incident(&self, node: NodeId) -> &[u32] {
        &self.incidence[node as usize]
    }

    pub fn tx_id(&self, tx: TxIdx) -> &str {
        &self.txs[tx as usize].tx_id
    }

    /// Tab-separated `kind address tx_id amount t` rows.
    pub fn write_edges<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.edges {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.kind.as_str(),
                self.book.name(e.address),
                self.txs[e.tx as usize].tx_id,
                e.amount,
                e.t
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds the TAIN. Slots of one address on one side of a transaction merge
/// into a single edge carrying the summed amount.
pub fn build_tain(records: &[TxRecord], universe: &AddressUniverse) -> Tain {
    let book = AddressBook::new(records, universe);
    let txs = tx_nodes(records, &book);
    let mut edges = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let mut merge = |slots: &[(String, u64)], kind: TainEdgeKind| {
            let mut summed: BTreeMap<NodeId, u64> = BTreeMap::new();
            for (a, amount) in slots {
                let id = book.id(a).expect("book covers every address");
                if book.is_retained(id) {
                    *summed.entry(id).or_default() += amount;
                }
            }
            edges.extend(summed.into_iter().map(|(address, amount)| TainEdge {
                address,
                tx: i as TxIdx,
                kind,
                amount,
                t: rec.timestamp,
            }));
        };
        merge(&rec.inputs, TainEdgeKind::AddressToTx);
        merge(&rec.outputs, TainEdgeKind::TxToAddress);
    }
    Tain::from_parts(book, txs, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub direction: Direction,
    pub amount: u64,
    pub tx: TxIdx,
    pub co_input_count: u32,
    pub co_output_count: u32,
    pub(crate) rank: u32,
}

impl Event {
    fn key(&self) -> (u64, u32, Direction) {
        (self.t, self.rank, self.direction)
    }
}

/// Time-ordered view of one address's TAIN edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSeries {
    pub address: String,
    pub events: Vec<Event>,
}

pub fn event_series(tain: &Tain, address: &str) -> Result<EventSeries> {
    let id = tain.book.retained_id(address)?;
    Ok(series_for(tain, id))
}

pub(crate) fn series_events(tain: &Tain, id: NodeId) -> Vec<Event> {
    let mut events: Vec<Event> = tain
        .incident(id)
        .iter()
        .map(|&e| {
            let e = &tain.edges[e as usize];
            let tx = &tain.txs[e.tx as usize];
            Event {
                t: e.t,
                direction: match e.kind {
                    TainEdgeKind::TxToAddress => Direction::In,
                    TainEdgeKind::AddressToTx => Direction::Out,
                },
                amount: e.amount,
                tx: e.tx,
                co_input_count: tx.inputs.len() as u32,
                co_output_count: tx.outputs.len() as u32,
                rank: tx.rank,
            }
        })
        .collect();
    events.sort_by_key(Event::key);
    events
}

pub(crate) fn series_for(tain: &Tain, id: NodeId) -> EventSeries {
    EventSeries {
        address: tain.book.name(id).to_string(),
        events: series_events(tain, id),
    }
}

/// Event series for every retained address, ascending by address.
pub fn all_event_series(tain: &Tain) -> Vec<EventSeries> {
    let ids: Vec<NodeId> = tain.book.retained_ids().collect();
    ids.par_iter().map(|&id| series_for(tain, id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::filter_addresses;

    fn tx(id: &str, t: u64, ins: &[(&str, u64)], outs: &[(&str, u64)]) -> TxRecord {
        TxRecord {
            tx_id: id.into(),
            timestamp: t,
            inputs: ins.iter().map(|(a, v)| (a.to_string(), *v)).collect(),
            outputs: outs.iter().map(|(a, v)| (a.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn cross_product_edges() {
        let recs = vec![tx(
            "t",
            10,
            &[("A", 1), ("B", 1)],
            &[("C", 1), ("D", 1), ("E", 1)],
        )];
        let g = build_aain(&recs, &AddressUniverse::all(&recs)).unwrap();
        assert_eq!(g.edges().len(), 6);
        assert!(g.edges().iter().all(|e| e.t == 10));
    }

    #[test]
    fn coinbase_has_no_edges() {
        let recs = vec![tx("cb", 1, &[], &[("A", 50)])];
        let g = build_aain(&recs, &AddressUniverse::all(&recs)).unwrap();
        assert!(g.edges().is_empty());
    }

    #[test]
    fn mixing_scenario_paths() {
        // Three sources pay three mixer addresses, which pay three destinations.
        let mut recs = Vec::new();
        for i in 1..=3 {
            recs.push(tx(
                &format!("d{i}"),
                i,
                &[(&format!("A{i}"), 100)],
                &[(&format!("M{i}"), 100)],
            ));
        }
        for i in 1..=3 {
            recs.push(tx(
                &format!("p{i}"),
                10 + i,
                &[(&format!("M{i}"), 100)],
                &[(&format!("A{}", i + 3), 100)],
            ));
        }
        let g = build_aain(&recs, &AddressUniverse::all(&recs)).unwrap();
        assert_eq!(g.edges().len(), 6);
        for i in 1..=3 {
            let m = g.book().id(&format!("M{i}")).unwrap();
            assert_eq!(g.in_degree(m), 1);
            assert_eq!(g.out_degree(m), 1);
            let src = g.book().id(&format!("A{i}")).unwrap();
            assert_eq!(g.out_degree(src), 1);
            assert_eq!(g.in_degree(src), 0);
        }
    }

    #[test]
    fn edge_cap_names_transaction() {
        let recs = vec![
            tx("small", 1, &[("A", 1)], &[("B", 1)]),
            tx("big", 2, &[("A", 1), ("B", 1)], &[("C", 1), ("D", 1)]),
        ];
        match build_aain_with_cap(&recs, &AddressUniverse::all(&recs), 3) {
            Err(Error::EdgeCapExceeded { tx_id, .. }) => assert_eq!(tx_id, "big"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn filtered_addresses_drop_edges() {
        let recs = vec![
            tx("t1", 1, &[("A", 5)], &[("B", 5)]),
            tx("t2", 2, &[("B", 5)], &[("C", 5)]),
        ];
        let u = filter_addresses(&recs);
        let g = build_aain(&recs, &u).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.node_count(), 1);
    }

    #[test]
    fn tain_edges() {
        let recs = vec![tx("t1", 7, &[("A", 5)], &[("B", 3), ("C", 2)])];
        let g = build_tain(&recs, &AddressUniverse::all(&recs));
        let mut got: Vec<_> = g
            .edges()
            .iter()
            .map(|e| (g.book().name(e.address).to_string(), e.kind, e.amount, e.t))
            .collect();
        got.sort();
        assert_eq!(
            got,
            vec![
                ("A".to_string(), TainEdgeKind::AddressToTx, 5, 7),
                ("B".to_string(), TainEdgeKind::TxToAddress, 3, 7),
                ("C".to_string(), TainEdgeKind::TxToAddress, 2, 7),
            ]
        );
    }

    #[test]
    fn tain_merges_slots() {
        let recs = vec![tx("t", 1, &[("A", 3)], &[("B", 1), ("B", 2)])];
        let g = build_tain(&recs, &AddressUniverse::all(&recs));
        let to_b: Vec<_> = g
            .edges()
            .iter()
            .filter(|e| e.kind == TainEdgeKind::TxToAddress)
            .collect();
        assert_eq!(to_b.len(), 1);
        assert_eq!(to_b[0].amount, 3);
    }

    #[test]
    fn empty_tain() {
        let g = build_tain(&[], &AddressUniverse::default());
        assert!(g.edges().is_empty());
        assert!(g.transactions().is_empty());
    }

    #[test]
    fn series_projection_and_order() {
        let recs = vec![tx("t1", 7, &[("A", 5)], &[("B", 3), ("C", 2)])];
        let g = build_tain(&recs, &AddressUniverse::all(&recs));
        let s = event_series(&g, "A").unwrap();
        assert_eq!(s.events.len(), 1);
        let e = s.events[0];
        assert_eq!(
            (
                e.t,
                e.direction,
                e.amount,
                g.tx_id(e.tx),
                e.co_input_count,
                e.co_output_count
            ),
            (7, Direction::Out, 5, "t1", 1, 2)
        );

        let recs = vec![
            tx("b", 5, &[("X", 1)], &[("A", 1)]),
            tx("a", 5, &[("A", 1)], &[("Y", 1)]),
            tx("c", 1, &[("Z", 1)], &[("A", 1)]),
            tx("s", 9, &[("A", 4)], &[("A", 2), ("W", 2)]),
        ];
        let g = build_tain(&recs, &AddressUniverse::all(&recs));
        let s = event_series(&g, "A").unwrap();
        let got: Vec<_> = s.events.iter().map(|e| (g.tx_id(e.tx), e.direction)).collect();
        assert_eq!(
            got,
            vec![
                ("c", Direction::In),
                ("a", Direction::Out),
                ("b", Direction::In),
                ("s", Direction::In),
                ("s", Direction::Out),
            ]
        );
        assert!(matches!(event_series(&g, "nope"), Err(Error::UnknownAddress(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_records() -> impl Strategy<Value = Vec<TxRecord>> {
            let slot = ("[A-G]", 1u64..100);
            prop::collection::vec(
                (
                    0u64..50,
                    prop::collection::vec(slot.clone(), 0..4),
                    prop::collection::vec(slot, 1..4),
                ),
                0..15,
            )
            .prop_map(|txs| {
                txs.into_iter()
                    .enumerate()
                    .map(|(i, (t, inputs, outputs))| TxRecord {
                        tx_id: format!("tx{i:02}"),
                        timestamp: t,
                        inputs,
                        outputs,
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn degrees_match_recount(recs in arb_records()) {
                let u = AddressUniverse::all(&recs);
                let g = build_aain(&recs, &u).unwrap();
                let expected: usize = recs.iter().map(|r| {
                    let i: BTreeSet<_> = r.inputs.iter().map(|s| &s.0).collect();
                    let o: BTreeSet<_> = r.outputs.iter().map(|s| &s.0).collect();
                    i.len() * o.len()
                }).sum();
                prop_assert_eq!(g.edges().len(), expected);
                for node in g.nodes() {
                    let name = g.book().name(node);
                    let brute: usize = recs.iter()
                        .filter(|r| r.outputs.iter().any(|(a, _)| a == name))
                        .map(|r| r.inputs.iter().map(|s| &s.0).collect::<BTreeSet<_>>().len())
                        .sum();
                    prop_assert_eq!(g.in_degree(node), brute);
                }
                for node in g.nodes() {
                    let inc = g.incident(node);
                    for w in inc.windows(2) {
                        prop_assert_eq!(g.edge_order(w[0], w[1]), Ordering::Less);
                        prop_assert!(g.edge(w[0]).t <= g.edge(w[1]).t);
                    }
                }
            }

            #[test]
            fn tain_amounts_and_series_cover_edges(recs in arb_records()) {
                let u = AddressUniverse::all(&recs);
                let g = build_tain(&recs, &u);
                for (i, r) in recs.iter().enumerate() {
                    let (mut sent, mut recv) = (0u64, 0u64);
                    for e in g.edges().iter().filter(|e| e.tx as usize == i) {
                        prop_assert_eq!(e.t, r.timestamp);
                        match e.kind {
                            TainEdgeKind::AddressToTx => sent += e.amount,
                            TainEdgeKind::TxToAddress => recv += e.amount,
                        }
                    }
                    prop_assert_eq!(sent, r.total_in());
                    prop_assert_eq!(recv, r.total_out());
                }
                let series = all_event_series(&g);
                let total: usize = series.iter().map(|s| s.events.len()).sum();
                prop_assert_eq!(total, g.edges().len());
                for s in &series {
                    for w in s.events.windows(2) {
                        prop_assert!(w[0].key() <= w[1].key());
                    }
                }
            }
        }
    }
}
