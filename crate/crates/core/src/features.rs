//! The 29 per-address features: network (NF1-NF17), account (AF1-AF6) and
//! transaction (TF1-TF6) level, plus standardization and the feature file.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{
    build_aain, build_tain, series_events, Aain, Direction, Event, EventSeries, NodeId, Tain,
};
use crate::ingest::{filter_addresses, LabelSet, TxRecord};
use crate::matrix::Matrix;
use crate::motif::{count_ath_motifs, count_temporal_motifs, AthCensus, TemporalCensus};

pub const FEATURE_COUNT: usize = 29;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "NF1", "NF2", "NF3", "NF4", "NF5", "NF6", "NF7", "NF8", "NF9", "NF10", "NF11", "NF12", "NF13", "NF14",
    "NF15", "NF16", "NF17", "AF1", "AF2", "AF3", "AF4", "AF5", "AF6", "TF1", "TF2", "TF3", "TF4", "TF5",
    "TF6",
];

/// Column offsets into [`FEATURE_NAMES`].
pub mod col {
    pub const NF1: usize = 0;
    pub const NF7: usize = 6;
    pub const NF11: usize = 10;
    pub const NF12: usize = 11;
    pub const NF13: usize = 12;
    pub const NF14: usize = 13;
    pub const NF15: usize = 14;
    pub const NF16: usize = 15;
    pub const NF17: usize = 16;
    pub const AF1: usize = 17;
    pub const AF2: usize = 18;
    pub const AF3: usize = 19;
    pub const AF4: usize = 20;
    pub const AF5: usize = 21;
    pub const AF6: usize = 22;
    pub const TF1: usize = 23;
    pub const TF2: usize = 24;
    pub const TF3: usize = 25;
    pub const TF4: usize = 26;
    pub const TF5: usize = 27;
    pub const TF6: usize = 28;
}

/// Indices (into b1..b6) of the ATH patterns used for NF7-NF10: b2, b4, b5, b6.
pub const CONSIDERED_ATH: [usize; 4] = [1, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// An ordered pair of a maximal run of incoming events and the maximal run of
/// outgoing events that follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    pub in_events: Vec<Event>,
    pub out_events: Vec<Event>,
    /// Received minus sent, satoshi.
    pub balance: i128,
    /// Seconds from the first incoming to the last outgoing event.
    pub duration: u64,
}

pub fn transaction_cycles(events: &[Event]) -> Vec<Cycle> {
    let mut cycles = Vec::new();
    let mut i = 0;
    while i < events.len() && events[i].direction == Direction::Out {
        i += 1;
    }
    while i < events.len() {
        let in_start = i;
        while i < events.len() && events[i].direction == Direction::In {
            i += 1;
        }
        let out_start = i;
        while i < events.len() && events[i].direction == Direction::Out {
            i += 1;
        }
        if out_start == i {
            break;
        }
        let in_events = events[in_start..out_start].to_vec();
        let out_events = events[out_start..i].to_vec();
        let received: i128 = in_events.iter().map(|e| e.amount as i128).sum();
        let sent: i128 = out_events.iter().map(|e| e.amount as i128).sum();
        let duration = out_events[out_events.len() - 1].t - in_events[0].t;
        cycles.push(Cycle {
            in_events,
            out_events,
            balance: received - sent,
            duration,
        });
    }
    cycles
}

/// `num / den`, with a zero denominator treated as one.
fn ratio(num: f64, den: f64) -> f64 {
    num / den.max(1.0)
}

fn proportions(counts: &[u64], out: &mut [f64]) {
    let total: u64 = counts.iter().sum();
    if total > 0 {
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = c as f64 / total as f64;
        }
    }
}

fn mean_u32(values: impl Iterator<Item = u32>) -> f64 {
    let (n, sum) = values.fold((0u64, 0u64), |(n, s), v| (n + 1, s + v as u64));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn extract_features(
    address: &str,
    aain: &Aain,
    tain: &Tain,
    temporal: &TemporalCensus,
    ath: &AthCensus,
    series: &EventSeries,
) -> Result<FeatureVector> {
    if temporal.delta != ath.delta {
        return Err(Error::DeltaMismatch(temporal.delta, ath.delta));
    }
    if series.address != address {
        return Err(Error::invalid(format!(
            "event series belongs to {:?}, not {address:?}",
            series.address
        )));
    }
    let node = aain
        .book()
        .id(address)
        .filter(|&n| aain.book().is_retained(n))
        .ok_or_else(|| Error::UnknownAddress(address.to_string()))?;
    Ok(features_for(node, aain, tain, temporal, ath, &series.events))
}

fn features_for(
    node: NodeId,
    aain: &Aain,
    tain: &Tain,
    temporal: &TemporalCensus,
    ath: &AthCensus,
    events: &[Event],
) -> FeatureVector {
    let mut f = [0.0; FEATURE_COUNT];

    proportions(temporal.get(node), &mut f[col::NF1..col::NF1 + 6]);
    let b = ath.get(node);
    let considered: Vec<u64> = CONSIDERED_ATH.iter().map(|&i| b[i]).collect();
    proportions(&considered, &mut f[col::NF7..col::NF7 + 4]);

    let in_deg = aain.in_degree(node) as f64;
    let out_deg = aain.out_degree(node) as f64;
    let succ = aain.successors(node).len() as f64;
    let pred = aain.predecessors(node).len() as f64;
    f[col::NF11] = in_deg;
    f[col::NF12] = out_deg;
    f[col::NF13] = ratio(in_deg, out_deg);
    f[col::NF14] = succ;
    f[col::NF15] = pred;
    f[col::NF16] = ratio(in_deg, succ);
    f[col::NF17] = ratio(out_deg, pred);

    let ins = || events.iter().filter(|e| e.direction == Direction::In);
    let outs = || events.iter().filter(|e| e.direction == Direction::Out);
    let n_in = ins().count() as f64;
    let n_out = outs().count() as f64;
    let v_in: u64 = ins().map(|e| e.amount).sum();
    let v_out: u64 = outs().map(|e| e.amount).sum();
    f[col::AF1] = n_in;
    f[col::AF2] = n_out;
    f[col::AF3] = ratio(n_in, n_out);
    f[col::AF4] = v_in as f64;
    f[col::AF5] = v_out as f64;
    f[col::AF6] = ratio(v_in as f64, v_out as f64);

    let cycles = transaction_cycles(events);
    if cycles.len() >= 2 {
        let balances: Vec<f64> = cycles.iter().map(|c| c.balance as f64).collect();
        f[col::TF1] = population_std(&balances);
    }
    if !cycles.is_empty() {
        f[col::TF2] = cycles.iter().map(|c| c.duration as f64).sum::<f64>() / cycles.len() as f64;
    }

    // Co-participants: the address sends in `outs` (it is one of the
    // transaction's inputs) and receives in `ins`.
    f[col::TF3] = mean_u32(outs().map(|e| e.co_input_count));
    f[col::TF4] = mean_u32(ins().map(|e| e.co_output_count));
    let txs = tain.transactions();
    let co_inputs: BTreeSet<NodeId> = outs()
        .flat_map(|e| txs[e.tx as usize].inputs.iter().copied())
        .filter(|&a| a != node)
        .collect();
    let co_outputs: BTreeSet<NodeId> = ins()
        .flat_map(|e| txs[e.tx as usize].outputs.iter().copied())
        .filter(|&a| a != node)
        .collect();
    f[col::TF5] = co_inputs.len() as f64;
    f[col::TF6] = co_outputs.len() as f64;

    FeatureVector(f)
}

/// Per-address features with labels; the contract between feature
/// extraction and learning.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub addresses: Vec<String>,
    /// `true` for labeled (positive) addresses.
    pub positive: Vec<bool>,
    pub features: Matrix,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.positive[i]).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.positive[i]).collect()
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "address\t{}\tlabel", FEATURE_NAMES.join("\t"))?;
        for (i, addr) in self.addresses.iter().enumerate() {
            write!(out, "{addr}")?;
            for v in self.features.row(i) {
                write!(out, "\t{v}")?;
            }
            let label = if self.positive[i] { "positive" } else { "unlabeled" };
            writeln!(out, "\t{label}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<Self> {
        let mut lines = source.lines().enumerate();
        let expected = format!("address\t{}\tlabel", FEATURE_NAMES.join("\t"));
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => String::new(),
        };
        if header.trim_end() != expected {
            return Err(Error::parse(1, "missing or unexpected feature header"));
        }
        let mut addresses = Vec::new();
        let mut positive = Vec::new();
        let mut data = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split('\t').collect();
            if fields.len() != FEATURE_COUNT + 2 {
                return Err(Error::parse(
                    lineno,
                    format!("expected {} fields, got {}", FEATURE_COUNT + 2, fields.len()),
                ));
            }
            addresses.push(fields[0].to_string());
            for v in &fields[1..=FEATURE_COUNT] {
                let v: f64 = v
                    .parse()
                    .map_err(|e| Error::parse(lineno, format!("bad value {v:?}: {e}")))?;
                data.push(v);
            }
            positive.push(match fields[FEATURE_COUNT + 1] {
                "positive" => true,
                "unlabeled" => false,
                other => return Err(Error::parse(lineno, format!("bad label {other:?}"))),
            });
        }
        let features = Matrix::from_vec(addresses.len(), FEATURE_COUNT, data)?;
        Ok(FeatureTable {
            addresses,
            positive,
            features,
        })
    }
}

/// Runs filter, graph construction, both censuses and feature extraction.
/// Rows follow the lexicographic order of the retained addresses.
pub fn build_feature_table(records: &[TxRecord], labels: &LabelSet, delta: u64) -> Result<FeatureTable> {
    let universe = filter_addresses(records);
    let aain = build_aain(records, &universe)?;
    let tain = build_tain(records, &universe);
    let temporal = count_temporal_motifs(&aain, delta);
    let ath = count_ath_motifs(&tain, delta);
    let dropped = labels.positives.iter().filter(|a| !universe.contains(a)).count();
    if dropped > 0 {
        log::info!("{dropped} labeled addresses removed by the activity filter");
    }

    let nodes: Vec<NodeId> = aain.book().retained_ids().collect();
    let rows: Vec<FeatureVector> = nodes
        .par_iter()
        .map(|&n| features_for(n, &aain, &tain, &temporal, &ath, &series_events(&tain, n)))
        .collect();
    let addresses: Vec<String> = nodes.iter().map(|&n| aain.book().name(n).to_string()).collect();
    let positive = addresses.iter().map(|a| labels.is_positive(a)).collect();
    let features = Matrix::from_rows(&rows.iter().map(|r| r.0).collect::<Vec<_>>())?;
    Ok(FeatureTable {
        addresses,
        positive,
        features: if rows.is_empty() {
            Matrix::zeros(0, FEATURE_COUNT)
        } else {
            features
        },
    })
}

/// Per-column mean and population std learned on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationParams {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("cannot fit standardization on an empty matrix"));
        }
        let n = x.rows() as f64;
        let mut mean = Vec::with_capacity(x.cols());
        let mut std = Vec::with_capacity(x.cols());
        for c in 0..x.cols() {
            let m = x.column(c).sum::<f64>() / n;
            let first = x.get(0, c);
            let constant = x.column(c).all(|v| v == first);
            let s = (x.column(c).map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            mean.push(m);
            std.push(if constant || s == 0.0 { 1.0 } else { s });
        }
        Ok(StandardizationParams { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: x.cols(),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        Ok(out)
    }
}

/// Without `params`, fits on `x` and transforms it; with `params`, applies
/// the stored transform.
pub fn standardize(
    x: &Matrix,
    params: Option<&StandardizationParams>,
) -> Result<(Matrix, StandardizationParams)> {
    let params = match params {
        Some(p) => p.clone(),
        None => StandardizationParams::fit(x)?,
    };
    Ok((params.apply(x)?, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TxIdx;

    fn ev(t: u64, direction: Direction, amount: u64) -> Event {
        Event {
            t,
            direction,
            amount,
            tx: 0 as TxIdx,
            co_input_count: 1,
            co_output_count: 1,
            rank: 0,
        }
    }

    use Direction::{In, Out};

    #[test]
    fn cycles_examples() {
        let c = transaction_cycles(&[ev(0, In, 5), ev(1, In, 3), ev(2, Out, 8)]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].balance, 0);
        assert_eq!(c[0].duration, 2);

        let c = transaction_cycles(&[ev(0, In, 5), ev(1, Out, 2), ev(2, In, 1), ev(3, Out, 4)]);
        assert_eq!(c.iter().map(|c| c.balance).collect::<Vec<_>>(), vec![3, -3]);

        assert!(transaction_cycles(&[ev(0, Out, 7)]).is_empty());
        let c = transaction_cycles(&[ev(0, Out, 1), ev(1, In, 2), ev(2, Out, 2), ev(3, In, 9)]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].in_events.len(), 1);
    }

    #[test]
    fn standardize_examples() {
        let x = Matrix::from_rows(&[[1.0, 4.0], [3.0, 4.0]]).unwrap();
        let (z, p) = standardize(&x, None).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(p.std[1], 1.0);
        let test = Matrix::from_rows(&[[2.0, 4.0]]).unwrap();
        let (zt, _) = standardize(&test, Some(&p)).unwrap();
        assert_eq!(zt.as_slice(), &[0.0, 0.0]);
        assert!(standardize(&Matrix::zeros(0, 2), None).is_err());
        assert!(standardize(&Matrix::zeros(1, 3), Some(&p)).is_err());
    }

    #[test]
    fn proportion_arithmetic() {
        let mut out = [0.0; 6];
        proportions(&[3, 0, 1, 0, 0, 0], &mut out);
        assert_eq!(out, [0.75, 0.0, 0.25, 0.0, 0.0, 0.0]);
        let mut out = [0.0; 4];
        proportions(&[0, 0, 0, 0], &mut out);
        assert_eq!(out, [0.0; 4]);
    }
}
