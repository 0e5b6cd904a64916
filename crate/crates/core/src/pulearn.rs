//! Two-stage positive-unlabeled learning: spy-based reliable-negative
//! extraction followed by a class-weighted L2 logistic regression.

use std::fmt::Write as _;
use std::io::Write;

use rand::seq::index;

use crate::config::parse_key_values;
use crate::error::{Error, Result};
use crate::features::StandardizationParams;
use crate::matrix::Matrix;
use crate::rng::seeded;

pub const DEFAULT_SPY_RATE: f64 = 0.15;
pub const DEFAULT_DELTA_P: f64 = 0.005;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 0.6;

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize, lambda: f64) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            lambda,
        }
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// The weighted objective
/// `c_pos * sum_{y=+1} logloss + c_neg * sum_{y=-1} logloss + lambda * |w|^2`
/// over parameters `[w.., b]` (the bias is not regularized).
#[derive(Debug, Clone)]
pub struct WeightedLogistic<'a> {
    x: &'a Matrix,
    y: &'a [i8],
    c_pos: f64,
    c_neg: f64,
    lambda: f64,
}

impl<'a> WeightedLogistic<'a> {
    pub fn new(x: &'a Matrix, y: &'a [i8], c_pos: f64, c_neg: f64, lambda: f64) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Dimension {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::invalid(format!("labels must be +1 or -1, got {bad}")));
        }
        if !y.contains(&1) || !y.contains(&-1) {
            return Err(Error::SingleClass);
        }
        for (name, v) in [("c_pos", c_pos), ("c_neg", c_neg), ("lambda", lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for r in 0..x.rows() {
            if let Some(c) = x.row(r).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
        Ok(WeightedLogistic {
            x,
            y,
            c_pos,
            c_neg,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.cols() + 1
    }

    fn weight(&self, i: usize) -> f64 {
        if self.y[i] == 1 {
            self.c_pos
        } else {
            self.c_neg
        }
    }

    fn margin(&self, params: &[f64], i: usize) -> f64 {
        let d = self.x.cols();
        (dot(&params[..d], self.x.row(i)) + params[d]) * self.y[i] as f64
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let d = self.x.cols();
        let loss: f64 = (0..self.x.rows())
            .map(|i| self.weight(i) * softplus(-self.margin(params, i)))
            .sum();
        loss + self.lambda * dot(&params[..d], &params[..d])
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let d = self.x.cols();
        let mut g = vec![0.0; d + 1];
        for i in 0..self.x.rows() {
            // d/dz softplus(-y z) = -y * sigmoid(-y z)
            let coef = -self.weight(i) * self.y[i] as f64 * sigmoid(-self.margin(params, i));
            for (gj, xj) in g[..d].iter_mut().zip(self.x.row(i)) {
                *gj += coef * xj;
            }
            g[d] += coef;
        }
        for j in 0..d {
            g[j] += 2.0 * self.lambda * params[j];
        }
        g
    }

    fn hessian(&self, params: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let d = n - 1;
        let mut h = vec![0.0; n * n];
        for i in 0..self.x.rows() {
            let s = sigmoid(self.margin(params, i));
            let w = self.weight(i) * s * (1.0 - s);
            let row = self.x.row(i);
            for a in 0..n {
                let xa = if a < d { row[a] } else { 1.0 };
                let wa = w * xa;
                for b in 0..=a {
                    let xb = if b < d { row[b] } else { 1.0 };
                    h[a * n + b] += wa * xb;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                h[b * n + a] = h[a * n + b];
            }
        }
        for j in 0..d {
            h[j * n + j] += 2.0 * self.lambda;
        }
        h
    }
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major).
fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                // NaN fails too
                if sum.is_nan() || sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: LinearModel,
    pub iterations: usize,
    /// Objective value after every accepted step, starting at the origin.
    pub trace: Vec<f64>,
}

/// Minimizes the weighted objective with damped Newton steps and a
/// backtracking (Armijo) line search, starting from zero. Stops when the
/// gradient max-norm drops below 1e-6, after 5000 iterations, or when no
/// step decreases the objective.
pub fn fit_weighted_lr(x: &Matrix, y: &[i8], c_pos: f64, c_neg: f64, lambda: f64) -> Result<Fit> {
    let problem = WeightedLogistic::new(x, y, c_pos, c_neg, lambda)?;
    let n = problem.dim();
    let mut params = vec![0.0; n];
    let mut value = problem.value(&params);
    let mut trace = vec![value];
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let grad = problem.gradient(&params);
        if max_abs(&grad) < GRAD_TOL {
            break;
        }
        iterations += 1;
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let hess = problem.hessian(&params);
        let mut direction = cholesky_solve(&hess, &neg);
        if let Some(d) = &direction {
            if dot(d, &grad) >= 0.0 {
                direction = None;
            }
        }
        let direction = direction.unwrap_or(neg);
        let slope = dot(&direction, &grad);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(&direction).map(|(p, d)| p + step * d).collect();
            let v = problem.value(&cand);
            if v <= value + 1e-4 * step * slope {
                accepted = Some((cand, v));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, v)) if v < value => {
                params = cand;
                value = v;
                trace.push(v);
            }
            _ => break,
        }
    }
    let d = n - 1;
    Ok(Fit {
        model: LinearModel {
            weights: params[..d].to_vec(),
            bias: params[d],
            lambda,
        },
        iterations,
        trace,
    })
}

pub fn train_weighted_lr(x: &Matrix, y: &[i8], c_pos: f64, c_neg: f64, lambda: f64) -> Result<LinearModel> {
    fit_weighted_lr(x, y, c_pos, c_neg, lambda).map(|f| f.model)
}

pub fn predict_proba(model: &LinearModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.weights.len() {
        return Err(Error::Dimension {
            expected: model.weights.len(),
            got: x.cols(),
        });
    }
    Ok(x.iter_rows().map(|r| sigmoid(model.score(r))).collect())
}

/// Grid `{dp, 2dp, ..., 1}` (the last point clamped to 1).
fn theta_grid(dp: f64) -> Vec<f64> {
    let k = (1.0 / dp - 1e-9).ceil() as usize;
    (1..=k).map(|i| (i as f64 * dp).min(1.0)).collect()
}

/// Picks the grid point maximizing the increment of the unlabeled CDF minus
/// the increment of the spy CDF; the smallest such point wins ties.
pub fn select_theta(spy_probs: &[f64], unlabeled_probs: &[f64], dp: f64) -> Result<f64> {
    if spy_probs.is_empty() || unlabeled_probs.is_empty() {
        return Err(Error::invalid(
            "select_theta needs non-empty spy and unlabeled lists",
        ));
    }
    if !(dp > 0.0 && dp < 1.0) {
        return Err(Error::invalid(format!("grid step must be in (0,1), got {dp}")));
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (spy, unl) = (sorted(spy_probs), sorted(unlabeled_probs));
    let (ns, nu) = (spy.len() as i128, unl.len() as i128);
    let le = |s: &[f64], p: f64| s.partition_point(|&v| v <= p) as i128;

    let mut best: Option<(i128, f64)> = None;
    let (mut prev_s, mut prev_u) = (le(&spy, 0.0), le(&unl, 0.0));
    for p in theta_grid(dp) {
        let (cs, cu) = (le(&spy, p), le(&unl, p));
        // (du / nu - ds / ns) scaled by nu * ns
        let score = (cu - prev_u) * ns - (cs - prev_s) * nu;
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, p));
        }
        prev_s = cs;
        prev_u = cu;
    }
    Ok(best.expect("grid is non-empty").1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOne {
    /// Row indices into the positive matrix used as spies.
    pub spies: Vec<usize>,
    pub theta: f64,
    pub model: LinearModel,
    /// Row indices into the unlabeled matrix with probability below `theta`.
    pub reliable_negatives: Vec<usize>,
}

/// Number of spies drawn from `n_pos` positives: ceil(rate * n), kept in
/// `1..n_pos` so both spies and labeled positives remain.
pub fn spy_count(n_pos: usize, spy_rate: f64) -> usize {
    ((spy_rate * n_pos as f64 - 1e-9).ceil() as usize).clamp(1, n_pos.saturating_sub(1).max(1))
}

pub fn stage1_reliable_negatives(
    x_pos: &Matrix,
    x_unl: &Matrix,
    spy_rate: f64,
    lambda: f64,
    dp: f64,
    seed: u64,
) -> Result<StageOne> {
    if x_pos.rows() < 2 {
        return Err(Error::invalid("stage one needs at least two positive rows"));
    }
    if x_unl.is_empty() {
        return Err(Error::invalid("stage one needs unlabeled rows"));
    }
    if !(spy_rate > 0.0 && spy_rate < 1.0) {
        return Err(Error::invalid(format!(
            "spy rate must be in (0,1), got {spy_rate}"
        )));
    }
    let n_pos = x_pos.rows();
    let mut rng = seeded(seed);
    let mut spies = index::sample(&mut rng, n_pos, spy_count(n_pos, spy_rate)).into_vec();
    spies.sort_unstable();
    let mut is_spy = vec![false; n_pos];
    for &s in &spies {
        is_spy[s] = true;
    }
    let labeled: Vec<usize> = (0..n_pos).filter(|&i| !is_spy[i]).collect();

    let x_spy = x_pos.select_rows(&spies);
    let x = x_pos.select_rows(&labeled).vstack(&x_spy)?.vstack(x_unl)?;
    let mut y = vec![1i8; labeled.len()];
    y.resize(x.rows(), -1);
    let model = train_weighted_lr(&x, &y, 1.0, 1.0, lambda)?;

    let spy_probs = predict_proba(&model, &x_spy)?;
    let unl_probs = predict_proba(&model, x_unl)?;
    let theta = select_theta(&spy_probs, &unl_probs, dp)?;
    let reliable_negatives: Vec<usize> = (0..x_unl.rows()).filter(|&i| unl_probs[i] < theta).collect();
    if reliable_negatives.is_empty() {
        return Err(Error::NoReliableNegatives { theta });
    }
    Ok(StageOne {
        spies,
        theta,
        model,
        reliable_negatives,
    })
}

/// Class weights inversely proportional to class sizes.
pub fn stage2_weights(n_pos: usize, n_rn: usize) -> (f64, f64) {
    (1.0 / n_pos as f64, 1.0 / n_rn as f64)
}

pub fn stage2_train(x_pos: &Matrix, x_rn: &Matrix, lambda: f64) -> Result<LinearModel> {
    if x_pos.is_empty() || x_rn.is_empty() {
        return Err(Error::invalid(
            "stage two needs positive and reliable-negative rows",
        ));
    }
    let (c_pos, c_neg) = stage2_weights(x_pos.rows(), x_rn.rows());
    let x = x_pos.vstack(x_rn)?;
    let mut y = vec![1i8; x_pos.rows()];
    y.resize(x.rows(), -1);
    train_weighted_lr(&x, &y, c_pos, c_neg, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PuConfig {
    pub spy_rate: f64,
    pub delta_p: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

impl Default for PuConfig {
    fn default() -> Self {
        PuConfig {
            spy_rate: DEFAULT_SPY_RATE,
            delta_p: DEFAULT_DELTA_P,
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl PuConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.spy_rate) {
            return Err(Error::Config(format!(
                "spy_rate must be in (0,1), got {}",
                self.spy_rate
            )));
        }
        if !open(self.delta_p) {
            return Err(Error::Config(format!(
                "delta_p must be in (0,1), got {}",
                self.delta_p
            )));
        }
        if !open(self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must be in (0,1), got {}",
                self.epsilon
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// A trained two-stage model with everything needed to reproduce its
/// predictions from raw feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PuModel {
    pub stage1: LinearModel,
    pub theta: f64,
    pub stage2: LinearModel,
    pub c_pos: f64,
    pub c_neg: f64,
    pub epsilon: f64,
    pub spy_rate: f64,
    pub delta_p: f64,
    pub seed: u64,
    pub standardization: StandardizationParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub address: String,
    pub probability: f64,
    pub detected: bool,
}

impl PuModel {
    /// Standardizes on all given rows, runs stage one on positives vs
    /// unlabeled, then trains stage two on positives vs every reliable
    /// negative.
    pub fn train(x_pos: &Matrix, x_unl: &Matrix, config: &PuConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = StandardizationParams::fit(&x_pos.vstack(x_unl)?)?;
        let (zp, zu) = (params.apply(x_pos)?, params.apply(x_unl)?);
        let s1 = stage1_reliable_negatives(&zp, &zu, config.spy_rate, config.lambda, config.delta_p, seed)?;
        let x_rn = zu.select_rows(&s1.reliable_negatives);
        let stage2 = stage2_train(&zp, &x_rn, config.lambda)?;
        let (c_pos, c_neg) = stage2_weights(zp.rows(), x_rn.rows());
        Ok(PuModel {
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
        })
    }

    /// Stage-two probabilities for raw (unstandardized) rows.
    pub fn probabilities(&self, x_raw: &Matrix) -> Result<Vec<f64>> {
        predict_proba(&self.stage2, &self.standardization.apply(x_raw)?)
    }

    pub fn to_text(&self) -> String {
        let floats = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("format", MODEL_FORMAT.to_string());
        kv("seed", self.seed.to_string());
        kv("epsilon", format!("{:?}", self.epsilon));
        kv("theta", format!("{:?}", self.theta));
        kv("spy_rate", format!("{:?}", self.spy_rate));
        kv("delta_p", format!("{:?}", self.delta_p));
        kv("stage1.lambda", format!("{:?}", self.stage1.lambda));
        kv("stage1.bias", format!("{:?}", self.stage1.bias));
        kv("stage1.weights", floats(&self.stage1.weights));
        kv("stage2.lambda", format!("{:?}", self.stage2.lambda));
        kv("stage2.bias", format!("{:?}", self.stage2.bias));
        kv("stage2.weights", floats(&self.stage2.weights));
        kv("stage2.c_pos", format!("{:?}", self.c_pos));
        kv("stage2.c_neg", format!("{:?}", self.c_neg));
        kv("standardize.mean", floats(&self.standardization.mean));
        kv("standardize.std", floats(&self.standardization.std));
        s
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let get = |k: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("model file is missing {k:?}")))
        };
        if get("format")? != MODEL_FORMAT {
            return Err(Error::Config("unsupported model format".into()));
        }
        let float =
            |k: &str| -> Result<f64> { get(k)?.parse().map_err(|e| Error::Config(format!("{k}: {e}"))) };
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split_whitespace()
                .map(|v| v.parse().map_err(|e| Error::Config(format!("{k}: {e}"))))
                .collect()
        };
        let stage1 = LinearModel {
            weights: floats("stage1.weights")?,
            bias: float("stage1.bias")?,
            lambda: float("stage1.lambda")?,
        };
        let stage2 = LinearModel {
            weights: floats("stage2.weights")?,
            bias: float("stage2.bias")?,
            lambda: float("stage2.lambda")?,
        };
        let standardization = StandardizationParams {
            mean: floats("standardize.mean")?,
            std: floats("standardize.std")?,
        };
        let dim = stage2.weights.len();
        for len in [
            stage1.weights.len(),
            standardization.mean.len(),
            standardization.std.len(),
        ] {
            if len != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: len,
                });
            }
        }
        Ok(PuModel {
            stage1,
            theta: float("theta")?,
            stage2,
            c_pos: float("stage2.c_pos")?,
            c_neg: float("stage2.c_neg")?,
            epsilon: float("epsilon")?,
            spy_rate: float("spy_rate")?,
            delta_p: float("delta_p")?,
            seed: get("seed")?
                .parse()
                .map_err(|e| Error::Config(format!("seed: {e}")))?,
            standardization,
        })
    }
}

const MODEL_FORMAT: &str = "mixscope-pu-model/1";

/// Thresholds stage-two probabilities of standardized rows at `model.epsilon`
/// (strictly greater). Sorted by probability descending, then address.
pub fn predict(model: &PuModel, x: &Matrix, addresses: &[String]) -> Result<Vec<Detection>> {
    if addresses.len() != x.rows() {
        return Err(Error::Dimension {
            expected: x.rows(),
            got: addresses.len(),
        });
    }
    let probs = predict_proba(&model.stage2, x)?;
    Ok(detections(&probs, addresses, model.epsilon))
}

pub fn detections(probs: &[f64], addresses: &[String], epsilon: f64) -> Vec<Detection> {
    let mut out: Vec<Detection> = probs
        .iter()
        .zip(addresses)
        .map(|(&p, a)| Detection {
            address: a.clone(),
            probability: p,
            detected: p > epsilon,
        })
        .collect();
    out.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.address.cmp(&b.address))
    });
    out
}
