mod common;

use mixscope_core::eval::{
    compute_metrics, epsilon_sweep, gmean, make_split, pu_run, run_experiments, MetricsReport, RunOutcome,
};
use mixscope_core::features::FeatureTable;
use mixscope_core::matrix::Matrix;
use mixscope_core::pulearn::PuConfig;
use mixscope_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn table(seed: u64) -> FeatureTable {
    let mut rng = seeded(seed);
    let mut rows = Vec::new();
    let mut positive = Vec::new();
    for i in 0..400 {
        let (label, hidden) = (i < 40, (40..50).contains(&i));
        let c = if label || hidden { 1.5 } else { -1.5 };
        rows.push((0..4).map(|_| c + rng.gen_range(-1.2..1.2)).collect::<Vec<f64>>());
        positive.push(label);
    }
    FeatureTable {
        addresses: (0..400).map(|i| format!("addr{i:03}")).collect(),
        positive,
        features: Matrix::from_rows(&rows).unwrap(),
    }
}

#[test]
fn test_rows_never_reach_training() {
    let t = table(1);
    let x_pos = t.features.select_rows(&t.positive_indices());
    let x_unl = t.features.select_rows(&t.unlabeled_indices());
    let cfg = PuConfig::default();
    let base = pu_run(&x_pos, &x_unl, 0, 77, &cfg).unwrap();

    let (mut p2, mut u2) = (x_pos.clone(), x_unl.clone());
    for &i in &base.split.test_pos {
        p2.row_mut(i).iter_mut().for_each(|v| *v = 1e6);
    }
    for &i in &base.split.test_unl {
        u2.row_mut(i).iter_mut().for_each(|v| *v = -1e6);
    }
    let perturbed = pu_run(&p2, &u2, 0, 77, &cfg).unwrap();
    assert_eq!(perturbed.model, base.model);
    assert_eq!(perturbed.split, base.split);
}

#[test]
fn split_invariants_hold() {
    let t = table(2);
    let x_pos = t.features.select_rows(&t.positive_indices());
    let x_unl = t.features.select_rows(&t.unlabeled_indices());
    let run = pu_run(&x_pos, &x_unl, 0, 5, &PuConfig::default()).unwrap();
    let s = &run.split;
    assert!(s
        .train_rn
        .iter()
        .all(|i| s.train_unl.contains(i) && !s.test_rn.contains(i)));
    assert!(s.test_rn.iter().all(|i| s.train_unl.contains(i)));
    assert_eq!(run.scores.truth.len(), s.test_pos.len() + s.test_rn.len());
}

#[test]
fn report_is_deterministic_and_consistent() {
    let t = table(3);
    let cfg = PuConfig::default();
    let a = run_experiments(&t, 6, 42, &cfg).unwrap();
    let b = run_experiments(&t, 6, 42, &cfg).unwrap();
    assert_eq!(a, b);
    for r in &a.runs {
        assert!((gmean(r.tpr, r.fpr) - r.gmean).abs() < 1e-12);
        assert!([r.tpr, r.fpr, r.gmean].iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let n = a.runs.len() as f64;
    let mean = a.runs.iter().map(|r| r.gmean).sum::<f64>() / n;
    let std = (a.runs.iter().map(|r| (r.gmean - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((mean - a.summary.gmean_mean).abs() < 1e-12);
    assert!((std - a.summary.gmean_std).abs() < 1e-12);
    assert!(a.summary.gmean_mean > 0.8);

    let single = run_experiments(&t, 1, 42, &cfg).unwrap();
    assert_eq!(single.summary.tpr_std, 0.0);
    assert_eq!(single, run_experiments(&t, 1, 42, &cfg).unwrap());
}

#[test]
fn parallel_runs_equal_serial_runs() {
    let t = table(4);
    let cfg = PuConfig::default();
    let x_pos = t.features.select_rows(&t.positive_indices());
    let x_unl = t.features.select_rows(&t.unlabeled_indices());
    let serial: Vec<RunOutcome> = (0..4)
        .map(|r| {
            let seed = mixscope_core::rng::derive_seed(9, r as u64);
            RunOutcome::Scored(pu_run(&x_pos, &x_unl, r, seed, &cfg).unwrap().scores)
        })
        .collect();
    let expected = MetricsReport::from_outcomes(&serial, cfg.epsilon).unwrap();
    assert_eq!(run_experiments(&t, 4, 9, &cfg).unwrap(), expected);
}

#[test]
fn epsilon_sweep_is_monotone() {
    let t = table(5);
    let eps = [0.5, 0.6, 0.7, 0.8, 0.9];
    let reports = epsilon_sweep(&t, 5, 1, &PuConfig::default(), &eps).unwrap();
    for w in reports.windows(2) {
        assert!(w[1].summary.tpr_mean <= w[0].summary.tpr_mean);
        assert!(w[1].summary.fpr_mean <= w[0].summary.fpr_mean);
    }
}

#[test]
fn report_files_parse_back() {
    let t = table(6);
    let r = run_experiments(&t, 3, 2, &PuConfig::default()).unwrap();
    let mut tsv = Vec::new();
    r.write_tsv(&mut tsv).unwrap();
    let text = String::from_utf8(tsv).unwrap();
    assert!(text.starts_with("run\tseed\ttpr\tfpr\tgmean\n"));
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#')).count(),
        1 + r.runs.len()
    );
    let mut json = Vec::new();
    r.write_json(&mut json).unwrap();
    let back: mixscope_core::eval::MetricsSummary = serde_json::from_slice(&json).unwrap();
    assert_eq!(back, r.summary);
}

proptest! {
    #[test]
    fn split_partitions_positives(n_pos in 4usize..200, n_unl in 2usize..300, seed in any::<u64>()) {
        let s = make_split(n_pos, n_unl, seed).unwrap();
        prop_assert_eq!(s.train_pos.len(), n_pos * 7 / 10);
        let mut all: Vec<usize> = s.train_pos.iter().chain(&s.test_pos).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n_pos).collect::<Vec<_>>());
        prop_assert!(!s.test_pos.is_empty() && !s.train_pos.is_empty());
        prop_assert!(s.train_unl.iter().all(|i| !s.test_unl.contains(i)));
        prop_assert_eq!(make_split(n_pos, n_unl, seed).unwrap(), s);
    }

    #[test]
    fn metrics_stay_in_range(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 2..100)) {
        let (pred, truth): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(truth.contains(&true) && truth.contains(&false));
        let m = compute_metrics(&pred, &truth).unwrap();
        for v in [m.tpr, m.fpr, m.gmean] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((m.gmean - (m.tpr * (1.0 - m.fpr)).sqrt()).abs() < 1e-12);
    }
}
