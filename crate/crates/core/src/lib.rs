//! Detection of Bitcoin mixing-service addresses from transaction graphs.
//!
//! The pipeline: ingest transactions, build the address-address (AAIN) and
//! transaction-address (TAIN) networks, count hybrid motifs, extract 29
//! per-address features, and train a two-stage positive-unlabeled
//! classifier.

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod matrix;
pub mod motif;
pub mod nullmodel;
pub mod pulearn;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{MetricsReport, SplitPlan};
pub use features::{FeatureTable, FeatureVector, StandardizationParams, FEATURE_NAMES};
pub use graph::{Aain, AainEdge, EventSeries, Tain};
pub use ingest::{AddressUniverse, LabelSet, TxFormat, TxRecord};
pub use matrix::Matrix;
pub use motif::{AthPattern, MotifCensus, TemporalPattern, DEFAULT_DELTA};
pub use pulearn::{LinearModel, PuConfig, PuModel};
pub use synth::{SynthConfig, SynthDataset};
