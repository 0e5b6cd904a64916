use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mixscope_core::config::{parse_duration, PipelineConfig};
use mixscope_core::eval::{self, MetricsReport, MetricsSummary};
use mixscope_core::features::{build_feature_table, FeatureTable};
use mixscope_core::graph::{build_aain, build_tain};
use mixscope_core::ingest::{self, filter_addresses, load_labels, LabelSet, TxFormat, TxRecord};
use mixscope_core::io::write_atomic;
use mixscope_core::motif::{count_ath_motifs, count_temporal_motifs, MotifCensus};
use mixscope_core::nullmodel::significance_report;
use mixscope_core::pulearn::{predict, PuModel};
use mixscope_core::synth::{self, SynthConfig};
use mixscope_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mixscope",
    version,
    about = "Detect mixing-service addresses in Bitcoin transaction data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Key-value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Motif window: seconds, or with an m/h suffix (e.g. 3h).
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true)]
    null_samples: Option<usize>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset into the --out directory. Here
    /// --config names a generator configuration file.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Override the number of generated transactions.
        #[arg(long)]
        transactions: Option<usize>,
    },
    /// Motif census and null-model significance report.
    Census {
        #[command(flatten)]
        common: Common,
        /// Also write per-address motif counts here.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Extract the per-address feature table.
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Train a two-stage model on a feature table.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a feature table with a trained model.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Score labeled rows too.
        #[arg(long)]
        all: bool,
    },
    /// Repeated hold-out evaluation; writes a TSV report and a JSON summary.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Evaluate the naive supervised baseline instead.
        #[arg(long)]
        baseline: bool,
    },
    /// Evaluate across a grid of epsilon or delta values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated grid, e.g. 0.5,0.6,0.7 or 15m,1h,3h.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Epsilon,
    Delta,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Census { common, .. }
            | Command::Features { common }
            | Command::Train { common }
            | Command::Predict { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }
}

/// Defaults, then the config file (unless it belongs to the generator), then flags.
fn pipeline_config(c: &Common, read_file: bool) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let (true, Some(path)) = (read_file, &c.config) {
        cfg.apply_text(&read_text(path)?)?;
    }
    if let Some(d) = &c.delta {
        cfg.delta = parse_duration(d)?;
    }
    if let Some(v) = c.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.runs {
        cfg.runs = v;
    }
    if let Some(v) = c.null_samples {
        cfg.null_samples = v;
    }
    for (slot, flag) in [
        (&mut cfg.input, &c.input),
        (&mut cfg.labels, &c.labels),
        (&mut cfg.out, &c.out),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("missing --{flag} (or `{flag} = ...` in the config file)")))
}

fn read_transactions(path: &Path) -> Result<Vec<TxRecord>> {
    let records = ingest::parse_transactions(open(path)?, TxFormat::from_path(path))?;
    info!("read {} transactions from {}", records.len(), path.display());
    Ok(records)
}

fn read_labels(path: &Path) -> Result<LabelSet> {
    Ok(load_labels(open(path)?)?.labels)
}

fn read_features(path: &Path) -> Result<FeatureTable> {
    FeatureTable::read_tsv(open(path)?)
}

fn json_sibling(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    write_atomic(path, |w| report.write_tsv(w))?;
    let json = json_sibling(path);
    write_atomic(&json, |w| report.write_json(w))?;
    let back: MetricsSummary = serde_json::from_str(&read_text(&json)?)?;
    if back.failed_runs != report.summary.failed_runs {
        return Err(Error::invalid("metrics summary did not round-trip"));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let is_synth = matches!(cli.command, Command::Synth { .. });
    let cfg = pipeline_config(cli.command.common(), !is_synth)?;
    match &cli.command {
        Command::Synth { common, transactions } => {
            let mut sc = match &common.config {
                Some(p) => SynthConfig::from_text(&read_text(p)?)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = common.seed {
                sc.seed = s;
            }
            if let Some(n) = transactions {
                sc.n_transactions = *n;
            }
            let dir = required(&cfg.out, "out")?;
            std::fs::create_dir_all(dir)?;
            let data = synth::generate(&sc)?;
            let tx_path = dir.join("transactions.jsonl");
            write_atomic(&tx_path, |w| {
                ingest::write_transactions(&data.records, TxFormat::JsonLines, w)
            })?;
            write_atomic(&dir.join("labels.txt"), |w| data.labels.write(w))?;
            write_atomic(&dir.join("mixers.txt"), |w| {
                LabelSet {
                    positives: data.mixers.clone(),
                }
                .write(w)
            })?;
            if read_transactions(&tx_path)?.len() != data.records.len() {
                return Err(Error::invalid("generated transactions did not round-trip"));
            }
            println!(
                "wrote {} transactions, {} labeled of {} mixer addresses to {}",
                data.records.len(),
                data.labels.len(),
                data.mixers.len(),
                dir.display()
            );
        }
        Command::Census { counts, .. } => {
            let records = read_transactions(required(&cfg.input, "input")?)?;
            let out = required(&cfg.out, "out")?;
            let universe = filter_addresses(&records);
            let aain = build_aain(&records, &universe)?;
            let tain = build_tain(&records, &universe);
            if let Some(path) = counts {
                let census = MotifCensus::new(
                    count_temporal_motifs(&aain, cfg.delta),
                    count_ath_motifs(&tain, cfg.delta),
                )?;
                write_atomic(path, |w| census.write_tsv(aain.book(), w))?;
            }
            let report = significance_report(&aain, &tain, cfg.delta, cfg.null_samples, cfg.seed)?;
            write_atomic(out, |w| report.write_tsv(w))?;
            let significant: Vec<String> = report
                .patterns
                .iter()
                .filter(|p| p.significant)
                .map(|p| p.pattern.to_string())
                .collect();
            println!("significant patterns: {}", significant.join(" "));
        }
        Command::Features { .. } => {
            let records = read_transactions(required(&cfg.input, "input")?)?;
            let labels = read_labels(required(&cfg.labels, "labels")?)?;
            let out = required(&cfg.out, "out")?;
            let table = build_feature_table(&records, &labels, cfg.delta)?;
            write_atomic(out, |w| table.write_tsv(w))?;
            if read_features(out)?.len() != table.len() {
                return Err(Error::invalid("feature table did not round-trip"));
            }
            let n_pos = table.positive_indices().len();
            println!(
                "wrote {} rows ({} positive) to {}",
                table.len(),
                n_pos,
                out.display()
            );
        }
        Command::Train { .. } => {
            let table = read_features(required(&cfg.input, "input")?)?;
            let out = required(&cfg.out, "out")?;
            let (x_pos, x_unl) = eval::partition(&table);
            let model = PuModel::train(&x_pos, &x_unl, &cfg.pu(), cfg.seed)?;
            write_atomic(out, |w| model.write(w))?;
            if PuModel::from_text(&read_text(out)?)? != model {
                return Err(Error::invalid("model file did not round-trip"));
            }
            println!("theta = {}; model written to {}", model.theta, out.display());
        }
        Command::Predict { common, model, all } => {
            let table = read_features(required(&cfg.input, "input")?)?;
            let out = required(&cfg.out, "out")?;
            let mut model = PuModel::from_text(&read_text(model)?)?;
            if common.epsilon.is_some() {
                model.epsilon = cfg.epsilon;
            }
            let rows: Vec<usize> = if *all {
                (0..table.len()).collect()
            } else {
                table.unlabeled_indices()
            };
            let x = model.standardization.apply(&table.features.select_rows(&rows))?;
            let names: Vec<String> = rows.iter().map(|&i| table.addresses[i].clone()).collect();
            let detections = predict(&model, &x, &names)?;
            write_atomic(out, |w| {
                writeln!(w, "address\tprobability\tdetected")?;
                for d in &detections {
                    writeln!(w, "{}\t{}\t{}", d.address, d.probability, d.detected)?;
                }
                Ok(())
            })?;
            let n = detections.iter().filter(|d| d.detected).count();
            println!("{n} of {} addresses detected", detections.len());
        }
        Command::Evaluate { baseline, .. } => {
            let table = read_features(required(&cfg.input, "input")?)?;
            let out = required(&cfg.out, "out")?;
            let report = if *baseline {
                eval::run_naive_baseline(&table, cfg.runs, cfg.seed, &cfg.pu())?
            } else {
                eval::run_experiments(&table, cfg.runs, cfg.seed, &cfg.pu())?
            };
            write_report(out, &report)?;
            let s = &report.summary;
            println!(
                "TPR {:.4}±{:.4}  FPR {:.4}±{:.4}  G-Mean {:.4}±{:.4}  failed runs {}",
                s.tpr_mean, s.tpr_std, s.fpr_mean, s.fpr_std, s.gmean_mean, s.gmean_std, s.failed_runs
            );
        }
        Command::Sweep { param, values, .. } => {
            let out = required(&cfg.out, "out")?;
            let rows: Vec<(String, MetricsSummary)> = match param {
                SweepParam::Epsilon => {
                    let eps = values
                        .iter()
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|e| Error::Config(format!("bad epsilon {v:?}: {e}")))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    let table = read_features(required(&cfg.input, "input")?)?;
                    let reports = eval::epsilon_sweep(&table, cfg.runs, cfg.seed, &cfg.pu(), &eps)?;
                    eps.iter()
                        .zip(reports)
                        .map(|(e, r)| (e.to_string(), r.summary))
                        .collect()
                }
                SweepParam::Delta => {
                    let deltas = values
                        .iter()
                        .map(|v| parse_duration(v))
                        .collect::<Result<Vec<u64>>>()?;
                    let records = read_transactions(required(&cfg.input, "input")?)?;
                    let labels = read_labels(required(&cfg.labels, "labels")?)?;
                    let mut rows = Vec::new();
                    for d in deltas {
                        info!("delta = {d}s");
                        let table = build_feature_table(&records, &labels, d)?;
                        let r = eval::run_experiments(&table, cfg.runs, cfg.seed, &cfg.pu())?;
                        rows.push((d.to_string(), r.summary));
                    }
                    rows
                }
            };
            let name = match param {
                SweepParam::Epsilon => "epsilon",
                SweepParam::Delta => "delta",
            };
            write_atomic(out, |w| {
                writeln!(
                    w,
                    "{name}\ttpr_mean\ttpr_std\tfpr_mean\tfpr_std\tgmean_mean\tgmean_std\tfailed_runs"
                )?;
                for (v, s) in &rows {
                    writeln!(
                        w,
                        "{v}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        s.tpr_mean,
                        s.tpr_std,
                        s.fpr_mean,
                        s.fpr_std,
                        s.gmean_mean,
                        s.gmean_std,
                        s.failed_runs
                    )?;
                }
                Ok(())
            })?;
            for (v, s) in &rows {
                println!(
                    "{name}={v}\tTPR {:.4}\tFPR {:.4}\tG-Mean {:.4}",
                    s.tpr_mean, s.fpr_mean, s.gmean_mean
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
