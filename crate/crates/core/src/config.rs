//! Plain-text `key = value` configuration shared by every pipeline stage.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::eval::DEFAULT_RUNS;
use crate::motif::DEFAULT_DELTA;
use crate::nullmodel::DEFAULT_NULL_SAMPLES;
use crate::pulearn::{PuConfig, DEFAULT_DELTA_P, DEFAULT_EPSILON, DEFAULT_LAMBDA, DEFAULT_SPY_RATE};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

/// Parses a duration in seconds. Accepts a bare number of seconds or a
/// number with an `s`, `m` or `h` suffix; fractional values must land on a
/// whole second.
pub fn parse_duration(text: &str) -> Result<u64> {
    let t = text.trim();
    let (num, unit) = match t.char_indices().last() {
        Some((i, 'h')) => (&t[..i], 3600.0),
        Some((i, 'm')) => (&t[..i], 60.0),
        Some((i, 's')) => (&t[..i], 1.0),
        _ => (t, 1.0),
    };
    let bad = || Error::Config(format!("invalid duration {text:?}; use e.g. 10800, 180m or 3h"));
    let v: f64 = num.trim().parse().map_err(|_| bad())?;
    let secs = v * unit;
    if !secs.is_finite() || secs < 0.0 || (secs - secs.round()).abs() > 1e-6 || secs > u64::MAX as f64 {
        return Err(bad());
    }
    Ok(secs.round() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Motif window in seconds.
    pub delta: u64,
    pub epsilon: f64,
    pub spy_rate: f64,
    pub delta_p: f64,
    pub lambda: f64,
    pub null_samples: usize,
    pub runs: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            delta: DEFAULT_DELTA,
            epsilon: DEFAULT_EPSILON,
            spy_rate: DEFAULT_SPY_RATE,
            delta_p: DEFAULT_DELTA_P,
            lambda: DEFAULT_LAMBDA,
            null_samples: DEFAULT_NULL_SAMPLES,
            runs: DEFAULT_RUNS,
            seed: 0,
            input: None,
            labels: None,
            out: None,
        }
    }
}

impl PipelineConfig {
    /// Overlays the keys found in `text`; unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            match k.as_str() {
                "delta" => self.delta = parse_duration(&v)?,
                "epsilon" => self.epsilon = parse_value(&k, &v)?,
                "spy_rate" => self.spy_rate = parse_value(&k, &v)?,
                "delta_p" => self.delta_p = parse_value(&k, &v)?,
                "lambda" => self.lambda = parse_value(&k, &v)?,
                "null_samples" => self.null_samples = parse_value(&k, &v)?,
                "runs" => self.runs = parse_value(&k, &v)?,
                "seed" => self.seed = parse_value(&k, &v)?,
                "input" => self.input = Some(PathBuf::from(v)),
                "labels" => self.labels = Some(PathBuf::from(v)),
                "out" => self.out = Some(PathBuf::from(v)),
                _ => return Err(Error::Config(format!("unknown configuration key {k:?}"))),
            }
        }
        Ok(())
    }

    pub fn pu(&self) -> PuConfig {
        PuConfig {
            spy_rate: self.spy_rate,
            delta_p: self.delta_p,
            lambda: self.lambda,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pu().validate()?;
        if self.null_samples < 2 {
            return Err(Error::Config("null_samples must be at least 2".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        Ok(())
    }
}
