//! Brute-force reference implementations used as test oracles. Each one
//! recomputes its answer from first principles without the library's
//! indexes or sliding windows.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use mixscope_core::graph::{Aain, Direction, NodeId, Tain, TainEdgeKind};
use mixscope_core::ingest::TxRecord;
use mixscope_core::matrix::Matrix;
use mixscope_core::pulearn::WeightedLogistic;
use proptest::prelude::*;

/// Small random transaction sets over at most `n_addr` addresses with
/// clustered timestamps (ties included), at most `max_edges` AAIN edges.
pub fn arb_records(n_addr: usize, max_tx: usize, max_edges: usize) -> impl Strategy<Value = Vec<TxRecord>> {
    let slot = (0..n_addr, 1u64..50);
    let tx = (
        0u64..40,
        prop::collection::vec(slot.clone(), 0..3),
        prop::collection::vec(slot, 1..3),
    );
    prop::collection::vec(tx, 1..=max_tx).prop_map(move |txs| {
        let mut edges = 0;
        let mut out = Vec::new();
        for (i, (t, ins, outs)) in txs.into_iter().enumerate() {
            let distinct = |s: &[(usize, u64)]| {
                let mut v: Vec<usize> = s.iter().map(|x| x.0).collect();
                v.sort_unstable();
                v.dedup();
                v.len()
            };
            let e = distinct(&ins) * distinct(&outs);
            if edges + e > max_edges {
                break;
            }
            edges += e;
            let name = |a: usize| format!("addr{a:02}");
            out.push(TxRecord {
                tx_id: format!("tx{:03}", (i * 37) % 1000),
                timestamp: t,
                inputs: ins.iter().map(|&(a, v)| (name(a), v)).collect(),
                outputs: outs.iter().map(|&(a, v)| (name(a), v)).collect(),
            });
        }
        out
    })
}

/// Total edge order recomputed from names: (t, tx id, src name, dst name, index).
fn oracle_order(aain: &Aain, a: usize, b: usize) -> Ordering {
    let (ea, eb) = (&aain.edges()[a], &aain.edges()[b]);
    let txs = aain.transactions();
    let book = aain.book();
    ea.t.cmp(&eb.t)
        .then_with(|| txs[ea.tx as usize].tx_id.cmp(&txs[eb.tx as usize].tx_id))
        .then_with(|| book.name(ea.src).cmp(book.name(eb.src)))
        .then_with(|| book.name(ea.dst).cmp(book.name(eb.dst)))
        .then_with(|| a.cmp(&b))
}

/// a1..a6 per node by enumerating every ordered pair of incident edges.
pub fn pair_oracle(aain: &Aain, delta: u64) -> Vec<[u64; 6]> {
    let n = aain.book().len();
    let mut counts = vec![[0u64; 6]; n];
    let m = aain.edges().len();
    for (c, slot) in counts.iter_mut().enumerate() {
        let c = c as NodeId;
        let touching: Vec<usize> = (0..m)
            .filter(|&i| {
                let e = &aain.edges()[i];
                e.src != e.dst && (e.src == c || e.dst == c)
            })
            .collect();
        for &i in &touching {
            for &j in &touching {
                if i == j || oracle_order(aain, i, j) != Ordering::Less {
                    continue;
                }
                let (e1, e2) = (&aain.edges()[i], &aain.edges()[j]);
                if e2.t - e1.t > delta {
                    continue;
                }
                let side = |e: &mixscope_core::AainEdge| {
                    if e.dst == c {
                        ("in", e.src)
                    } else {
                        ("out", e.dst)
                    }
                };
                let ((d1, n1), (d2, n2)) = (side(e1), side(e2));
                let idx = if n1 == n2 {
                    if d1 == d2 {
                        5
                    } else {
                        4
                    }
                } else {
                    match (d1, d2) {
                        ("in", "out") => 0,
                        ("out", "in") => 1,
                        ("out", "out") => 2,
                        _ => 3,
                    }
                };
                slot[idx] += 1;
            }
        }
    }
    counts
}

/// b1..b6 per node: rebuild every address's event list from the raw edge
/// array, cut tumbling windows and classify each from scratch.
pub fn window_oracle(tain: &Tain, delta: u64) -> Vec<[u64; 6]> {
    let n = tain.book().len();
    let mut counts = vec![[0u64; 6]; n];
    for (id, slot) in counts.iter_mut().enumerate() {
        let mut ev: Vec<(u64, String, Direction, u64)> = tain
            .edges()
            .iter()
            .filter(|e| e.address as usize == id)
            .map(|e| {
                let d = match e.kind {
                    TainEdgeKind::TxToAddress => Direction::In,
                    TainEdgeKind::AddressToTx => Direction::Out,
                };
                (e.t, tain.tx_id(e.tx).to_string(), d, e.amount)
            })
            .collect();
        ev.sort();
        let mut i = 0;
        while i < ev.len() {
            let mut j = i;
            while j < ev.len() && ev[j].0 - ev[i].0 <= delta {
                j += 1;
            }
            let w = &ev[i..j];
            let ins: Vec<_> = w.iter().filter(|e| e.2 == Direction::In).collect();
            let outs: Vec<_> = w.iter().filter(|e| e.2 == Direction::Out).collect();
            let idx = if outs.is_empty() {
                0
            } else if ins.is_empty() {
                1
            } else {
                let (ni, no) = (ins.len() as u128, outs.len() as u128);
                let amt_in: u128 = ins.iter().map(|e| e.3 as u128).sum();
                let amt_out: u128 = outs.iter().map(|e| e.3 as u128).sum();
                let t_in: u128 = ins.iter().map(|e| e.0 as u128).sum();
                let t_out: u128 = outs.iter().map(|e| e.0 as u128).sum();
                let amount_bit = amt_in * no < amt_out * ni;
                let time_bit = t_in * no <= t_out * ni;
                2 + 2 * amount_bit as usize + time_bit as usize
            };
            slot[idx] += 1;
            i = j;
        }
    }
    counts
}

/// Counts template instances by trying every strictly increasing edge
/// sequence and checking for a consistent injective node mapping.
pub fn template_oracle(aain: &Aain, template: &[(u8, u8)], delta: u64) -> u64 {
    let m = aain.edges().len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| oracle_order(aain, a, b));
    let l = template.len();
    let mut count = 0;
    let mut idx = vec![0usize; l];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        aain: &Aain,
        order: &[usize],
        template: &[(u8, u8)],
        delta: u64,
        depth: usize,
        start: usize,
        idx: &mut Vec<usize>,
        count: &mut u64,
    ) {
        if depth == template.len() {
            let edges: Vec<_> = idx.iter().map(|&p| aain.edges()[order[p]]).collect();
            if edges.last().unwrap().t - edges[0].t > delta {
                return;
            }
            let mut map: BTreeMap<u8, NodeId> = BTreeMap::new();
            for (&(a, b), e) in template.iter().zip(&edges) {
                for (k, v) in [(a, e.src), (b, e.dst)] {
                    if *map.entry(k).or_insert(v) != v {
                        return;
                    }
                }
            }
            let mut images: Vec<NodeId> = map.values().copied().collect();
            images.sort_unstable();
            images.dedup();
            if images.len() == map.len() {
                *count += 1;
            }
            return;
        }
        for p in start..order.len() {
            idx[depth] = p;
            rec(aain, order, template, delta, depth + 1, p + 1, idx, count);
        }
    }
    rec(aain, &order, template, delta, 0, 0, &mut idx, &mut count);
    count
}

/// Scans the whole grid with exact rational comparisons, returning the
/// first grid point with the largest increment difference.
pub fn theta_oracle(spy: &[f64], unl: &[f64], dp: f64) -> f64 {
    let k = (1.0 / dp - 1e-9).ceil() as usize;
    let grid: Vec<f64> = (1..=k).map(|i| (i as f64 * dp).min(1.0)).collect();
    let frac_le = |xs: &[f64], p: f64| xs.iter().filter(|&&x| x <= p).count() as i128;
    let (ns, nu) = (spy.len() as i128, unl.len() as i128);
    let mut best = (i128::MIN, 0.0);
    let mut prev = 0.0;
    for &p in &grid {
        let du = frac_le(unl, p) - frac_le(unl, prev);
        let ds = frac_le(spy, p) - frac_le(spy, prev);
        let score = du * ns - ds * nu;
        if score > best.0 {
            best = (score, p);
        }
        prev = p;
    }
    best.1
}

/// Central finite-difference gradient.
pub fn numeric_gradient(f: &WeightedLogistic<'_>, params: &[f64], h: f64) -> Vec<f64> {
    (0..params.len())
        .map(|j| {
            let mut up = params.to_vec();
            let mut down = params.to_vec();
            up[j] += h;
            down[j] -= h;
            (f.value(&up) - f.value(&down)) / (2.0 * h)
        })
        .collect()
}

/// Random matrix with labels that have both classes.
pub fn random_problem(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> (Matrix, Vec<i8>) {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x = Matrix::from_vec(rows, cols, data).unwrap();
    let mut y: Vec<i8> = (0..rows)
        .map(|_| if rng.gen_bool(0.4) { 1 } else { -1 })
        .collect();
    y[0] = 1;
    y[1] = -1;
    (x, y)
}
