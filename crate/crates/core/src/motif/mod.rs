//! Hybrid motif counting: 2-edge temporal motifs in the AAIN and
//! attributed temporal heterogeneous (ATH) window motifs in the TAIN.

mod ath;
mod generic;
mod temporal;

use std::fmt;
use std::io::Write;

pub use ath::{ath_windows, classify_window, count_ath_motifs, AthCensus, AthPattern};
pub use generic::{enumerate_generic, Template};
pub use temporal::{classify_edge_pair, count_temporal_motifs, TemporalCensus, TemporalPattern};

use crate::error::{Error, Result};
use crate::graph::AddressBook;

/// Default motif window: three hours.
pub const DEFAULT_DELTA: u64 = 3 * 3600;

/// Labels of the twelve candidate patterns, in census column order.
pub const PATTERN_NAMES: [&str; 12] = [
    "a1", "a2", "a3", "a4", "a5", "a6", "b1", "b2", "b3", "b4", "b5", "b6",
];

/// Both censuses, computed with one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotifCensus {
    pub temporal: TemporalCensus,
    pub ath: AthCensus,
}

impl MotifCensus {
    pub fn new(temporal: TemporalCensus, ath: AthCensus) -> Result<Self> {
        if temporal.delta != ath.delta {
            return Err(Error::DeltaMismatch(temporal.delta, ath.delta));
        }
        if temporal.counts.len() != ath.counts.len() {
            return Err(Error::invalid("censuses cover different address books"));
        }
        Ok(MotifCensus { temporal, ath })
    }

    pub fn delta(&self) -> u64 {
        self.temporal.delta
    }

    /// Network totals for a1..a6 followed by b1..b6.
    pub fn totals(&self) -> [u64; 12] {
        let mut out = [0u64; 12];
        out[..6].copy_from_slice(&self.temporal.totals());
        out[6..].copy_from_slice(&self.ath.totals());
        out
    }

    /// One tab-separated row per retained address plus a `#total` footer.
    pub fn write_tsv<W: Write>(&self, book: &AddressBook, mut out: W) -> Result<()> {
        writeln!(out, "address\t{}", PATTERN_NAMES.join("\t"))?;
        for id in book.retained_ids() {
            let a = &self.temporal.counts[id as usize];
            let b = &self.ath.counts[id as usize];
            write!(out, "{}", book.name(id))?;
            for c in a.iter().chain(b) {
                write!(out, "\t{c}")?;
            }
            writeln!(out)?;
        }
        write!(out, "#total")?;
        for c in self.totals() {
            write!(out, "\t{c}")?;
        }
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }
}

impl fmt::Display for TemporalPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(PATTERN_NAMES[self.index()])
    }
}

impl fmt::Display for AthPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(PATTERN_NAMES[6 + self.index()])
    }
}
