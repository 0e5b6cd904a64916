//! Repeated 70/30 hold-out experiments with TPR, FPR and G-Mean reporting.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{population_std, FeatureTable, StandardizationParams};
use crate::matrix::Matrix;
use crate::pulearn::{
    predict_proba, stage1_reliable_negatives, stage2_train, stage2_weights, train_weighted_lr, PuConfig,
    PuModel,
};
use crate::rng::{derive_seed, seeded};

pub const DEFAULT_RUNS: usize = 100;

/// Index sets of one experiment. Positive indices refer to the positive
/// rows, every other set to the unlabeled rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_pos: Vec<usize>,
    pub test_pos: Vec<usize>,
    pub train_unl: Vec<usize>,
    pub test_unl: Vec<usize>,
    pub train_rn: Vec<usize>,
    pub test_rn: Vec<usize>,
}

fn seventy(n: usize) -> usize {
    n * 7 / 10
}

fn split_shuffled(n: usize, rng: &mut crate::rng::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut test = idx.split_off(seventy(n));
    idx.sort_unstable();
    test.sort_unstable();
    (idx, test)
}

pub fn make_split(n_pos: usize, n_unl: usize, seed: u64) -> Result<SplitPlan> {
    if n_pos < 4 {
        return Err(Error::invalid(format!("need at least 4 positives, got {n_pos}")));
    }
    if n_unl < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 unlabeled rows, got {n_unl}"
        )));
    }
    let mut rng = seeded(seed);
    let (train_pos, test_pos) = split_shuffled(n_pos, &mut rng);
    let (train_unl, test_unl) = split_shuffled(n_unl, &mut rng);
    Ok(SplitPlan {
        seed,
        train_pos,
        test_pos,
        train_unl,
        test_unl,
        train_rn: Vec::new(),
        test_rn: Vec::new(),
    })
}

impl SplitPlan {
    /// Splits reliable negatives (unlabeled indices) 70/30 with its own seed.
    pub fn assign_reliable_negatives(&mut self, reliable: &[usize], seed: u64) {
        let mut rng = seeded(seed);
        let (train, test) = split_shuffled(reliable.len(), &mut rng);
        self.train_rn = train.into_iter().map(|i| reliable[i]).collect();
        self.test_rn = test.into_iter().map(|i| reliable[i]).collect();
        self.train_rn.sort_unstable();
        self.test_rn.sort_unstable();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub fpr: f64,
    pub gmean: f64,
}

pub fn gmean(tpr: f64, fpr: f64) -> f64 {
    (tpr * (1.0 - fpr)).sqrt()
}

pub fn compute_metrics(predicted: &[bool], truth: &[bool]) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let (mut tp, mut fnn, mut fp, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (t, p) {
            (true, true) => tp += 1,
            (true, false) => fnn += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    if tp + fnn == 0 || fp + tn == 0 {
        return Err(Error::SingleClass);
    }
    let tpr = tp as f64 / (tp + fnn) as f64;
    let fpr = fp as f64 / (fp + tn) as f64;
    Ok(Metrics {
        tpr,
        fpr,
        gmean: gmean(tpr, fpr),
    })
}

/// Test-set probabilities of one run, reusable for any decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RunScores {
    pub run: usize,
    pub seed: u64,
    pub probabilities: Vec<f64>,
    pub truth: Vec<bool>,
}

impl RunScores {
    pub fn metrics_at(&self, epsilon: f64) -> Result<Metrics> {
        let predicted: Vec<bool> = self.probabilities.iter().map(|&p| p > epsilon).collect();
        compute_metrics(&predicted, &self.truth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Scored(RunScores),
    Failed { run: usize, seed: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub tpr: f64,
    pub fpr: f64,
    pub gmean: f64,
}

/// Aggregate over successful runs; std is the population std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub tpr_mean: f64,
    pub tpr_std: f64,
    pub fpr_mean: f64,
    pub fpr_std: f64,
    pub gmean_mean: f64,
    pub gmean_std: f64,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub epsilon: f64,
    pub runs: Vec<RunMetrics>,
    pub summary: MetricsSummary,
}

impl MetricsReport {
    pub fn from_outcomes(outcomes: &[RunOutcome], epsilon: f64) -> Result<Self> {
        let mut runs = Vec::new();
        let mut failed_runs = 0;
        for o in outcomes {
            match o {
                RunOutcome::Scored(s) => {
                    let m = s.metrics_at(epsilon)?;
                    runs.push(RunMetrics {
                        run: s.run,
                        seed: s.seed,
                        tpr: m.tpr,
                        fpr: m.fpr,
                        gmean: m.gmean,
                    });
                }
                RunOutcome::Failed { .. } => failed_runs += 1,
            }
        }
        if runs.is_empty() {
            return Err(Error::invalid(format!("all {failed_runs} runs failed")));
        }
        let stat = |f: fn(&RunMetrics) -> f64| {
            let v: Vec<f64> = runs.iter().map(f).collect();
            (v.iter().sum::<f64>() / v.len() as f64, population_std(&v))
        };
        let (tpr_mean, tpr_std) = stat(|r| r.tpr);
        let (fpr_mean, fpr_std) = stat(|r| r.fpr);
        let (gmean_mean, gmean_std) = stat(|r| r.gmean);
        Ok(MetricsReport {
            epsilon,
            runs,
            summary: MetricsSummary {
                tpr_mean,
                tpr_std,
                fpr_mean,
                fpr_std,
                gmean_mean,
                gmean_std,
                failed_runs,
            },
        })
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "run\tseed\ttpr\tfpr\tgmean")?;
        for r in &self.runs {
            writeln!(out, "{}\t{}\t{}\t{}\t{}", r.run, r.seed, r.tpr, r.fpr, r.gmean)?;
        }
        let s = &self.summary;
        writeln!(out, "#mean\t\t{}\t{}\t{}", s.tpr_mean, s.fpr_mean, s.gmean_mean)?;
        writeln!(out, "#std\t\t{}\t{}\t{}", s.tpr_std, s.fpr_std, s.gmean_std)?;
        writeln!(out, "#failed_runs\t{}", s.failed_runs)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.summary)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }
}

/// Positive and unlabeled rows of a feature table as separate matrices.
pub fn partition(table: &FeatureTable) -> (Matrix, Matrix) {
    (
        table.features.select_rows(&table.positive_indices()),
        table.features.select_rows(&table.unlabeled_indices()),
    )
}

/// Everything produced by one PU run.
#[derive(Debug, Clone, PartialEq)]
pub struct PuRun {
    pub split: SplitPlan,
    pub model: PuModel,
    pub scores: RunScores,
}

/// One experiment: split, standardize on training rows, stage one on the
/// training part, 70/30 split of reliable negatives, stage two, score the
/// held-out positives and reliable negatives.
pub fn pu_run(x_pos: &Matrix, x_unl: &Matrix, run: usize, seed: u64, config: &PuConfig) -> Result<PuRun> {
    config.validate()?;
    let mut split = make_split(x_pos.rows(), x_unl.rows(), seed)?;
    let train_pos = x_pos.select_rows(&split.train_pos);
    let train_unl = x_unl.select_rows(&split.train_unl);
    let params = StandardizationParams::fit(&train_pos.vstack(&train_unl)?)?;
    let zp = params.apply(&train_pos)?;
    let zu = params.apply(&train_unl)?;
    let s1 = stage1_reliable_negatives(
        &zp,
        &zu,
        config.spy_rate,
        config.lambda,
        config.delta_p,
        derive_seed(seed, 1),
    )?;
    let reliable: Vec<usize> = s1
        .reliable_negatives
        .iter()
        .map(|&i| split.train_unl[i])
        .collect();
    split.assign_reliable_negatives(&reliable, derive_seed(seed, 2));
    if split.train_rn.is_empty() || split.test_rn.is_empty() {
        return Err(Error::NoReliableNegatives { theta: s1.theta });
    }
    let z_rn = params.apply(&x_unl.select_rows(&split.train_rn))?;
    let stage2 = stage2_train(&zp, &z_rn, config.lambda)?;
    let (c_pos, c_neg) = stage2_weights(zp.rows(), z_rn.rows());

    let test = x_pos
        .select_rows(&split.test_pos)
        .vstack(&x_unl.select_rows(&split.test_rn))?;
    let probabilities = predict_proba(&stage2, &params.apply(&test)?)?;
    let mut truth = vec![true; split.test_pos.len()];
    truth.resize(test.rows(), false);
    Ok(PuRun {
        model: PuModel {
            stage1: s1.model,
            theta: s1.theta,
            stage2,
            c_pos,
            c_neg,
            epsilon: config.epsilon,
            spy_rate: config.spy_rate,
            delta_p: config.delta_p,
            seed,
            standardization: params,
        },
        scores: RunScores {
            run,
            seed,
            probabilities,
            truth,
        },
        split,
    })
}

fn run_seed(base_seed: u64, run: usize) -> u64 {
    derive_seed(base_seed, run as u64)
}

fn collect<F>(n_runs: usize, base_seed: u64, f: F) -> Result<Vec<RunOutcome>>
where
    F: Fn(usize, u64) -> Result<RunScores> + Sync,
{
    if n_runs == 0 {
        return Err(Error::invalid("number of runs must be positive"));
    }
    (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let seed = run_seed(base_seed, run);
            match f(run, seed) {
                Ok(s) => Ok(RunOutcome::Scored(s)),
                Err(e @ Error::NoReliableNegatives { .. }) => {
                    log::warn!("run {run} failed: {e}");
                    Ok(RunOutcome::Failed {
                        run,
                        seed,
                        reason: e.to_string(),
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Scores `n_runs` seeded PU experiments. Runs execute in parallel and
/// return in run order.
pub fn pu_outcomes(
    table: &FeatureTable,
    n_runs: usize,
    base_seed: u64,
    config: &PuConfig,
) -> Result<Vec<RunOutcome>> {
    let (x_pos, x_unl) = partition(table);
    collect(n_runs, base_seed, |run, seed| {
        pu_run(&x_pos, &x_unl, run, seed, config).map(|r| r.scores)
    })
}

pub fn run_experiments(
    table: &FeatureTable,
    n_runs: usize,
    base_seed: u64,
    config: &PuConfig,
) -> Result<MetricsReport> {
    let outcomes = pu_outcomes(table, n_runs, base_seed, config)?;
    MetricsReport::from_outcomes(&outcomes, config.epsilon)
}

/// Evaluates each threshold on the same trained runs, so detection sets
/// are nested across thresholds.
pub fn epsilon_sweep(
    table: &FeatureTable,
    n_runs: usize,
    base_seed: u64,
    config: &PuConfig,
    epsilons: &[f64],
) -> Result<Vec<MetricsReport>> {
    for &e in epsilons {
        PuConfig {
            epsilon: e,
            ..*config
        }
        .validate()?;
    }
    let outcomes = pu_outcomes(table, n_runs, base_seed, config)?;
    epsilons
        .iter()
        .map(|&e| MetricsReport::from_outcomes(&outcomes, e))
        .collect()
}

/// Unweighted LR on training positives vs training unlabeled rows, scored
/// on the held-out positives and held-out unlabeled rows.
pub fn naive_run(x_pos: &Matrix, x_unl: &Matrix, run: usize, seed: u64, lambda: f64) -> Result<RunScores> {
    let split = make_split(x_pos.rows(), x_unl.rows(), seed)?;
    let train_pos = x_pos.select_rows(&split.train_pos);
    let train_unl = x_unl.select_rows(&split.train_unl);
    let train = train_pos.vstack(&train_unl)?;
    let params = StandardizationParams::fit(&train)?;
    let mut y = vec![1i8; train_pos.rows()];
    y.resize(train.rows(), -1);
    let model = train_weighted_lr(&params.apply(&train)?, &y, 1.0, 1.0, lambda)?;
    let test = x_pos
        .select_rows(&split.test_pos)
        .vstack(&x_unl.select_rows(&split.test_unl))?;
    let probabilities = predict_proba(&model, &params.apply(&test)?)?;
    let mut truth = vec![true; split.test_pos.len()];
    truth.resize(test.rows(), false);
    Ok(RunScores {
        run,
        seed,
        probabilities,
        truth,
    })
}

pub fn run_naive_baseline(
    table: &FeatureTable,
    n_runs: usize,
    base_seed: u64,
    config: &PuConfig,
) -> Result<MetricsReport> {
    config.validate()?;
    let (x_pos, x_unl) = partition(table);
    let outcomes = collect(n_runs, base_seed, |run, seed| {
        naive_run(&x_pos, &x_unl, run, seed, config.lambda)
    })?;
    MetricsReport::from_outcomes(&outcomes, config.epsilon)
}
