//! Configuration-model null networks and motif z-scores.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Aain, AainEdge, Tain, TainEdge, TainEdgeKind};
use crate::motif::{count_ath_motifs, count_temporal_motifs, PATTERN_NAMES};
use crate::rng::{derive_seed, seeded};

pub const DEFAULT_NULL_SAMPLES: usize = 100;
pub const Z_THRESHOLD: f64 = 2.0;

/// Directed configuration model: out-stubs are paired with a uniformly
/// shuffled list of in-stubs, then the `(tx, t)` attribute pairs are permuted
/// over the new edges. Self-loops and multi-edges are kept.
pub fn randomize_aain(aain: &Aain, seed: u64) -> Aain {
    let mut rng = seeded(seed);
    let edges = aain.edges();
    let mut dsts: Vec<_> = edges.iter().map(|e| e.dst).collect();
    dsts.shuffle(&mut rng);
    let mut attrs: Vec<_> = edges.iter().map(|e| (e.tx, e.t)).collect();
    attrs.shuffle(&mut rng);
    let rewired = edges
        .iter()
        .zip(dsts)
        .zip(attrs)
        .map(|((e, dst), (tx, t))| AainEdge {
            src: e.src,
            dst,
            tx,
            t,
        })
        .collect();
    Aain::from_parts(aain.book().clone(), aain.transactions().to_vec(), rewired)
}

/// Rewires each TAIN edge type separately (transaction endpoints stay put,
/// address endpoints are shuffled) and permutes `(amount, t)` within type.
pub fn randomize_tain(tain: &Tain, seed: u64) -> Tain {
    let mut rng = seeded(seed);
    let mut rewired: Vec<TainEdge> = Vec::with_capacity(tain.edges().len());
    for kind in [TainEdgeKind::AddressToTx, TainEdgeKind::TxToAddress] {
        let typed: Vec<&TainEdge> = tain.edges().iter().filter(|e| e.kind == kind).collect();
        let mut addresses: Vec<_> = typed.iter().map(|e| e.address).collect();
        addresses.shuffle(&mut rng);
        let mut attrs: Vec<_> = typed.iter().map(|e| (e.amount, e.t)).collect();
        attrs.shuffle(&mut rng);
        rewired.extend(
            typed
                .iter()
                .zip(addresses)
                .zip(attrs)
                .map(|((e, address), (amount, t))| TainEdge {
                    address,
                    tx: e.tx,
                    kind,
                    amount,
                    t,
                }),
        );
    }
    Tain::from_parts(tain.book().clone(), tain.transactions().to_vec(), rewired)
}

/// `(n_real - mean) / std` over the null counts, population std. A zero std
/// yields +inf, -inf or 0 depending on the sign of the difference.
pub fn zscore(n_real: u64, null_counts: &[u64]) -> Result<f64> {
    if null_counts.is_empty() {
        return Err(Error::invalid("z-score needs at least one null count"));
    }
    let (mean, std) = mean_std(null_counts);
    let diff = n_real as f64 - mean;
    Ok(if std > 0.0 {
        diff / std
    } else if diff > 0.0 {
        f64::INFINITY
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    })
}

fn mean_std(values: &[u64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSignificance {
    pub pattern: &'static str,
    pub n_real: u64,
    pub null_mean: f64,
    pub null_std: f64,
    pub z: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceReport {
    pub delta: u64,
    pub n_null: usize,
    pub seed: u64,
    /// a1..a6 then b1..b6.
    pub patterns: Vec<PatternSignificance>,
}

impl SignificanceReport {
    pub fn get(&self, pattern: &str) -> Option<&PatternSignificance> {
        self.patterns.iter().find(|p| p.pattern == pattern)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "pattern\tn_real\tnull_mean\tnull_std\tz\tsignificant")?;
        for p in &self.patterns {
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                p.pattern, p.n_real, p.null_mean, p.null_std, p.z, p.significant
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn census_totals(aain: &Aain, tain: &Tain, delta: u64) -> [u64; 12] {
    let mut out = [0u64; 12];
    out[..6].copy_from_slice(&count_temporal_motifs(aain, delta).totals());
    out[6..].copy_from_slice(&count_ath_motifs(tain, delta).totals());
    out
}

/// Compares the real census with `n_null` randomized replicas. AAIN and
/// TAIN replicas are drawn independently from seeds derived from `seed`.
pub fn significance_report(
    aain: &Aain,
    tain: &Tain,
    delta: u64,
    n_null: usize,
    seed: u64,
) -> Result<SignificanceReport> {
    if n_null < 2 {
        return Err(Error::invalid(format!(
            "significance needs at least 2 null replicas, got {n_null}"
        )));
    }
    let real = census_totals(aain, tain, delta);
    let nulls: Vec<[u64; 12]> = (0..n_null as u64)
        .into_par_iter()
        .map(|i| {
            let a = randomize_aain(aain, derive_seed(seed, 2 * i));
            let t = randomize_tain(tain, derive_seed(seed, 2 * i + 1));
            census_totals(&a, &t, delta)
        })
        .collect();

    let mut patterns = Vec::with_capacity(12);
    for (p, &name) in PATTERN_NAMES.iter().enumerate() {
        let column: Vec<u64> = nulls.iter().map(|row| row[p]).collect();
        let (null_mean, null_std) = mean_std(&column);
        let z = zscore(real[p], &column)?;
        patterns.push(PatternSignificance {
            pattern: name,
            n_real: real[p],
            null_mean,
            null_std,
            z,
            significant: z > Z_THRESHOLD,
        });
    }
    Ok(SignificanceReport {
        delta,
        n_null,
        seed,
        patterns,
    })
}
