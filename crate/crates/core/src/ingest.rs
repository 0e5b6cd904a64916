//! Transaction and label ingestion.
//!
//! Orientation used throughout the crate: an *input transaction* of an
//! address is one where the address appears among the transaction's outputs
//! (funds flow in); an *output transaction* is one where it appears among the
//! inputs (funds flow out).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One Bitcoin transaction. Amounts are satoshi.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub tx_id: String,
    #[serde(rename = "time")]
    pub timestamp: u64,
    pub inputs: Vec<(String, u64)>,
    pub outputs: Vec<(String, u64)>,
}

impl TxRecord {
    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn total_in(&self) -> u64 {
        self.inputs.iter().map(|(_, a)| a).sum()
    }

    pub fn total_out(&self) -> u64 {
        self.outputs.iter().map(|(_, a)| a).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxFormat {
    JsonLines,
    Csv,
}

impl TxFormat {
    /// Guesses the format from a file extension, defaulting to JSON Lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TxFormat::Csv,
            _ => TxFormat::JsonLines,
        }
    }
}

impl FromStr for TxFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Ok(TxFormat::JsonLines),
            "csv" => Ok(TxFormat::Csv),
            other => Err(Error::invalid(format!("unknown transaction format {other:?}"))),
        }
    }
}

impl fmt::Display for TxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxFormat::JsonLines => f.write_str("jsonl"),
            TxFormat::Csv => f.write_str("csv"),
        }
    }
}

#[derive(Deserialize)]
struct RawTx {
    tx_id: String,
    time: i64,
    inputs: Vec<(String, i64)>,
    outputs: Vec<(String, i64)>,
}

fn check_slots(line: usize, side: &str, slots: Vec<(String, i64)>) -> Result<Vec<(String, u64)>> {
    slots
        .into_iter()
        .map(|(address, amount)| {
            if address.is_empty() {
                return Err(Error::parse(line, format!("empty address in {side}")));
            }
            if amount <= 0 {
                return Err(Error::parse(
                    line,
                    format!("{side} amount {amount} for {address:?} must be positive"),
                ));
            }
            Ok((address, amount as u64))
        })
        .collect()
}

fn validate(line: usize, raw: RawTx) -> Result<TxRecord> {
    if raw.tx_id.is_empty() {
        return Err(Error::parse(line, "empty tx_id"));
    }
    if raw.time < 0 {
        return Err(Error::parse(line, format!("negative time {}", raw.time)));
    }
    let inputs = check_slots(line, "input", raw.inputs)?;
    let outputs = check_slots(line, "output", raw.outputs)?;
    if outputs.is_empty() {
        return Err(Error::parse(
            line,
            format!("transaction {:?} has no outputs", raw.tx_id),
        ));
    }
    Ok(TxRecord {
        tx_id: raw.tx_id,
        timestamp: raw.time as u64,
        inputs,
        outputs,
    })
}

/// Parses a transaction stream. Records come back in file order; any
/// malformed line aborts the parse with its 1-based line number.
pub fn parse_transactions<R: BufRead>(source: R, format: TxFormat) -> Result<Vec<TxRecord>> {
    match format {
        TxFormat::JsonLines => parse_jsonl(source),
        TxFormat::Csv => parse_csv(source),
    }
}

fn parse_jsonl<R: BufRead>(source: R) -> Result<Vec<TxRecord>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTx = serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let rec = validate(lineno, raw)?;
        if seen.insert(rec.tx_id.clone(), lineno).is_some() {
            return Err(Error::DuplicateTx {
                tx_id: rec.tx_id,
                line: lineno,
            });
        }
        records.push(rec);
    }
    Ok(records)
}

const CSV_HEADER: [&str; 5] = ["tx_id", "time", "side", "address", "amount"];

fn parse_csv<R: BufRead>(source: R) -> Result<Vec<TxRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(Error::parse(
            1,
            format!("expected header {:?}, got {:?}", CSV_HEADER.join(","), headers),
        ));
    }

    let mut seen: HashSet<String> = HashSet::new();
    let mut records: Vec<TxRecord> = Vec::new();
    // Rows of one transaction are contiguous; `current` holds the open group.
    let mut current: Option<(usize, RawTx)> = None;

    for row in reader.records() {
        let row = row?;
        let lineno = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::parse(lineno, format!("missing field {}", CSV_HEADER[i])))
        };
        let tx_id = field(0)?;
        let time: i64 = field(1)?
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad time: {e}")))?;
        let side = field(2)?;
        let address = field(3)?.to_string();
        let amount: i64 = field(4)?
            .parse()
            .map_err(|e| Error::parse(lineno, format!("bad amount: {e}")))?;

        let same_group = matches!(&current, Some((_, raw)) if raw.tx_id == tx_id);
        if !same_group {
            if let Some((start, raw)) = current.take() {
                records.push(validate(start, raw)?);
            }
            if !seen.insert(tx_id.to_string()) {
                return Err(Error::DuplicateTx {
                    tx_id: tx_id.to_string(),
                    line: lineno,
                });
            }
            current = Some((
                lineno,
                RawTx {
                    tx_id: tx_id.to_string(),
                    time,
                    inputs: Vec::new(),
                    outputs: Vec::new(),
                },
            ));
        }
        let (_, raw) = current.as_mut().expect("group opened above");
        if raw.time != time {
            return Err(Error::parse(
                lineno,
                format!("time {time} differs from earlier rows of {tx_id:?}"),
            ));
        }
        if amount <= 0 {
            return Err(Error::parse(lineno, format!("amount {amount} must be positive")));
        }
        match side {
            "in" => raw.inputs.push((address, amount)),
            "out" => raw.outputs.push((address, amount)),
            other => {
                return Err(Error::parse(
                    lineno,
                    format!("side must be in|out, got {other:?}"),
                ))
            }
        }
    }
    if let Some((start, raw)) = current.take() {
        records.push(validate(start, raw)?);
    }
    Ok(records)
}

pub fn write_transactions<W: Write>(records: &[TxRecord], format: TxFormat, out: W) -> Result<()> {
    match format {
        TxFormat::JsonLines => write_jsonl(records, out),
        TxFormat::Csv => write_csv(records, out),
    }
}

fn write_jsonl<W: Write>(records: &[TxRecord], mut out: W) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_csv<W: Write>(records: &[TxRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for rec in records {
        let time = rec.timestamp.to_string();
        let sides = rec
            .inputs
            .iter()
            .map(|s| ("in", s))
            .chain(rec.outputs.iter().map(|s| ("out", s)));
        for (side, (addr, amount)) in sides {
            w.write_record([rec.tx_id.as_str(), &time, side, addr, &amount.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Known mixing-service addresses. Every other address is unlabeled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    pub positives: BTreeSet<String>,
}

impl LabelSet {
    pub fn is_positive(&self, address: &str) -> bool {
        self.positives.contains(address)
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for a in &self.positives {
            writeln!(out, "{a}")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelLoad {
    pub labels: LabelSet,
    pub duplicates: usize,
    pub blank_lines: usize,
}

pub fn load_labels<R: BufRead>(source: R) -> Result<LabelLoad> {
    let mut load = LabelLoad::default();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let addr = line.trim();
        if addr.is_empty() {
            log::warn!("labels line {}: blank line skipped", idx + 1);
            load.blank_lines += 1;
            continue;
        }
        if !load.labels.positives.insert(addr.to_string()) {
            load.duplicates += 1;
        }
    }
    if load.labels.is_empty() {
        log::warn!("label file contains no addresses");
    }
    log::info!(
        "loaded {} labeled addresses ({} duplicates dropped)",
        load.labels.len(),
        load.duplicates
    );
    Ok(load)
}

/// Addresses that survive the two-sided activity filter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressUniverse {
    pub addresses: BTreeSet<String>,
    pub removed_count: usize,
}

impl AddressUniverse {
    /// Every address that appears anywhere in `records`, unfiltered.
    pub fn all(records: &[TxRecord]) -> Self {
        let addresses = records
            .iter()
            .flat_map(|r| r.inputs.iter().chain(&r.outputs))
            .map(|(a, _)| a.clone())
            .collect();
        AddressUniverse {
            addresses,
            removed_count: 0,
        }
    }

    pub fn contains(&self, address: &str) -> bool {
        self.addresses.contains(address)
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }
}

/// Keeps addresses that both receive (appear in some outputs) and send
/// (appear in some inputs).
pub fn filter_addresses(records: &[TxRecord]) -> AddressUniverse {
    let mut receives: HashSet<&str> = HashSet::new();
    let mut sends: HashSet<&str> = HashSet::new();
    for r in records {
        receives.extend(r.outputs.iter().map(|(a, _)| a.as_str()));
        sends.extend(r.inputs.iter().map(|(a, _)| a.as_str()));
    }
    let total = receives.union(&sends).count();
    let addresses: BTreeSet<String> = receives.intersection(&sends).map(|a| a.to_string()).collect();
    AddressUniverse {
        removed_count: total - addresses.len(),
        addresses,
    }
}
