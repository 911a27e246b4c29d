//! Monte Carlo check of the theory with memorizing learners.
//!
//! An "example" is just an index with a label: the theory depends on labels
//! only, so no features are generated. A memorizing learner predicts, for
//! every training example, the smoothed version of its observed (corrupted)
//! label. Test losses are then measured under each assumption.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::softmax_raw;
use crate::seed;
use crate::stochastic::{
    argmax, cross_entropy, effective_clean_rate, uniform_smoothing, uniform_transition, LossValue,
    Prob, SmoothingMatrix, TransitionMatrix,
};
use crate::theory::{self, validate_grid, Assumption};

const STREAM_LABELS: u64 = 1;
const STREAM_CORRUPT: u64 = 2;
const STREAM_TEST: u64 = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    classes: usize,
    labels: Vec<usize>,
}

impl LabelSet {
    pub fn new(classes: usize, labels: Vec<usize>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidClassCount(classes));
        }
        if labels.is_empty() {
            return Err(Error::EmptyInput("label set"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                classes,
            });
        }
        Ok(LabelSet { classes, labels })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Class-balanced labels in random order: counts differ by at most one.
pub fn generate_labels(classes: usize, n: usize, seed: u64) -> Result<LabelSet> {
    if n == 0 {
        return Err(Error::EmptyInput("label set"));
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes.max(1)).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    LabelSet::new(classes, labels)
}

/// Cumulative sums of each column, for inverse-CDF sampling.
fn column_cdfs(t: &TransitionMatrix) -> Vec<Vec<f64>> {
    t.columns()
        .map(|col| {
            col.iter()
                .scan(0.0, |acc, &x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect()
        })
        .collect()
}

fn sample_column(cdf: &[f64], col: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or_else(|| {
        // u landed in the round-off gap above the last partial sum
        col.iter().rposition(|&x| x > 0.0).unwrap_or(col.len() - 1)
    })
}

/// Replaces each label `y` by a draw from column `y` of `T`.
pub fn corrupt(labels: &LabelSet, t: &TransitionMatrix, seed: u64) -> Result<LabelSet> {
    check_classes(labels.classes(), t.classes())?;
    let cdfs = column_cdfs(t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = labels
        .labels()
        .iter()
        .map(|&y| sample_column(&cdfs[y], t.column(y), rng.random::<f64>()))
        .collect();
    LabelSet::new(labels.classes(), noisy)
}

fn check_classes(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        Err(Error::DimensionMismatch { expected, actual })
    } else {
        Ok(())
    }
}

/// One probability row per example, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    classes: usize,
    data: Vec<f64>,
}

impl Predictions {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.classes)
    }

    fn from_class_rows(corrupted: &LabelSet, class_rows: &[Vec<f64>]) -> Self {
        let classes = corrupted.classes();
        let mut data = Vec::with_capacity(corrupted.len() * classes);
        for &y in corrupted.labels() {
            data.extend_from_slice(&class_rows[y]);
        }
        Predictions { classes, data }
    }
}

/// The training-loss minimizer: each prediction is the smoothed observed
/// label, i.e. column `ỹ_i` of `S`.
pub fn ideal_predictions(corrupted: &LabelSet, s: &SmoothingMatrix) -> Result<Predictions> {
    check_classes(corrupted.classes(), s.classes())?;
    let class_rows: Vec<Vec<f64>> = s.columns().map(<[f64]>::to_vec).collect();
    Ok(Predictions::from_class_rows(corrupted, &class_rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GdSettings {
    pub step: f64,
    pub iters: usize,
}

impl Default for GdSettings {
    fn default() -> Self {
        GdSettings {
            step: 0.5,
            iters: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdOutcome {
    pub predictions: Predictions,
    /// `(iteration, max sup-norm distance to the smoothed targets)`.
    pub checkpoints: Vec<(usize, f64)>,
    /// Final logits for each observed class (`None` if the class never
    /// occurs among the training labels).
    pub class_logits: Vec<Option<Vec<f64>>>,
    /// False when some used target has a zero entry, which finite logits
    /// cannot reach.
    pub converged: bool,
}

impl GdOutcome {
    pub fn final_distance(&self) -> f64 {
        self.checkpoints.last().map_or(f64::INFINITY, |c| c.1)
    }
}

/// Full-batch gradient descent on the summed smoothed cross-entropy, one
/// free logit vector per example, initialised at zero.
///
/// The objective separates over examples and examples sharing an observed
/// label follow identical trajectories, so one trajectory per class is run
/// and copied to its examples.
pub fn gd_memorize(
    corrupted: &LabelSet,
    s: &SmoothingMatrix,
    settings: GdSettings,
) -> Result<GdOutcome> {
    check_classes(corrupted.classes(), s.classes())?;
    if !(settings.step > 0.0) || settings.iters == 0 {
        return Err(Error::InvalidConfig(format!(
            "gradient descent needs step > 0 and iters >= 1, got {settings:?}"
        )));
    }
    let m = s.classes();
    let counts = corrupted.class_counts();
    let used: Vec<usize> = (0..m).filter(|&c| counts[c] > 0).collect();
    let reachable = used.iter().all(|&c| s.column(c).iter().all(|&x| x > 0.0));

    let mut logits: Vec<Vec<f64>> = vec![vec![0.0; m]; m];
    let distance = |logits: &[Vec<f64>]| {
        used.iter()
            .map(|&c| {
                softmax_raw(&logits[c])
                    .iter()
                    .zip(s.column(c))
                    .map(|(q, y)| (q - y).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let every = (settings.iters / 10).max(1);
    let mut checkpoints = vec![(0, distance(&logits))];
    for it in 1..=settings.iters {
        for &c in &used {
            let q = softmax_raw(&logits[c]);
            for ((h, q), y) in logits[c].iter_mut().zip(q).zip(s.column(c)) {
                *h -= settings.step * (q - y);
            }
        }
        if it % every == 0 || it == settings.iters {
            checkpoints.push((it, distance(&logits)));
        }
    }

    let class_rows: Vec<Vec<f64>> = logits.iter().map(|h| softmax_raw(h)).collect();
    let class_logits = (0..m)
        .map(|c| (counts[c] > 0).then(|| logits[c].clone()))
        .collect();
    Ok(GdOutcome {
        predictions: Predictions::from_class_rows(corrupted, &class_rows),
        checkpoints,
        class_logits,
        converged: reachable,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub loss: LossValue,
    pub accuracy: f64,
}

/// Mean test loss and accuracy of `predictions` against the true labels.
///
/// * α: `-ln f_i[y_i]`.
/// * β: `-ln f_i[ỹ'_i]` with `ỹ'_i` a fresh draw from column `y_i` of `T`.
/// * γ: cross-entropy between the smoothed true label and `f_i`. This is the
///   expectation of hard-label sampling from the smoothed target, without
///   its sampling noise.
///
/// Accuracy is the fraction with `argmax f_i = y_i`, ties to the smaller
/// index.
pub fn evaluate(
    predictions: &Predictions,
    true_labels: &LabelSet,
    assumption: Assumption,
    t: Option<&TransitionMatrix>,
    s: Option<&SmoothingMatrix>,
    seed: u64,
) -> Result<Evaluation> {
    check_classes(true_labels.classes(), predictions.classes())?;
    if predictions.len() != true_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: true_labels.len(),
            actual: predictions.len(),
        });
    }
    let n = true_labels.len() as f64;
    let ys = true_labels.labels();

    let total: f64 = match assumption {
        Assumption::Alpha => predictions.rows().zip(ys).map(|(f, &y)| -f[y].ln()).sum(),
        Assumption::Beta => {
            let t = t.ok_or(Error::AssumptionMismatch {
                assumption: "beta",
                missing: "a transition matrix",
            })?;
            check_classes(true_labels.classes(), t.classes())?;
            let cdfs = column_cdfs(t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            predictions
                .rows()
                .zip(ys)
                .map(|(f, &y)| {
                    let test = sample_column(&cdfs[y], t.column(y), rng.random::<f64>());
                    -f[test].ln()
                })
                .sum()
        }
        Assumption::Gamma => {
            let s = s.ok_or(Error::AssumptionMismatch {
                assumption: "gamma",
                missing: "a smoothing matrix",
            })?;
            check_classes(true_labels.classes(), s.classes())?;
            predictions
                .rows()
                .zip(ys)
                .map(|(f, &y)| cross_entropy(s.column(y), f).nats())
                .sum()
        }
    };
    let correct = predictions
        .rows()
        .zip(ys)
        .filter(|(f, &y)| argmax(f) == y)
        .count();
    Ok(Evaluation {
        loss: LossValue::from_nats(total / n),
        accuracy: correct as f64 / n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    /// Symmetric noise at each clean rate of the grid.
    Uniform { a_grid: Vec<f64> },
    /// One fixed transition matrix; rows report its effective clean rate.
    Matrix(TransitionMatrix),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Learner {
    Ideal,
    Gd(GdSettings),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub assumption: Assumption,
    pub classes: usize,
    pub noise: NoiseModel,
    pub p_grid: Vec<f64>,
    /// Labels per cell.
    pub n: usize,
    /// Replicates per cell.
    pub seeds: usize,
    pub master_seed: u64,
    pub learner: Learner,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidClassCount(self.classes));
        }
        match &self.noise {
            NoiseModel::Uniform { a_grid } => validate_grid("a", a_grid)?,
            NoiseModel::Matrix(t) => check_classes(self.classes, t.classes())?,
        }
        validate_grid("p", &self.p_grid)?;
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be at least 1".into()));
        }
        if let Learner::Gd(g) = self.learner {
            if !(g.step > 0.0) || g.iters == 0 {
                return Err(Error::InvalidConfig(format!(
                    "gradient descent needs step > 0 and iters >= 1, got {g:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub assumption: Assumption,
    pub classes: usize,
    pub a: f64,
    pub p: f64,
    pub theory_loss: LossValue,
    pub emp_loss_mean: f64,
    pub emp_loss_std: f64,
    pub emp_accuracy_mean: f64,
    pub seeds: usize,
    /// False for gradient-descent cells whose targets have zero entries.
    pub converged: bool,
}

struct Replicate {
    loss: f64,
    accuracy: f64,
    converged: bool,
}

fn run_replicate(
    config: &ExperimentConfig,
    t: &TransitionMatrix,
    s: &SmoothingMatrix,
    path: [u64; 3],
) -> Result<Replicate> {
    let key =
        |purpose| seed::derive_seed(config.master_seed, &[path[0], path[1], path[2], purpose]);
    let labels = generate_labels(config.classes, config.n, key(STREAM_LABELS))?;
    let noisy = corrupt(&labels, t, key(STREAM_CORRUPT))?;
    let (predictions, converged) = match config.learner {
        Learner::Ideal => (ideal_predictions(&noisy, s)?, true),
        Learner::Gd(settings) => {
            let out = gd_memorize(&noisy, s, settings)?;
            (out.predictions, out.converged)
        }
    };
    let eval = evaluate(
        &predictions,
        &labels,
        config.assumption,
        Some(t),
        Some(s),
        key(STREAM_TEST),
    )?;
    Ok(Replicate {
        loss: eval.loss.nats(),
        accuracy: eval.accuracy,
        converged,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.iter().any(|v| v.is_infinite()) {
        let all_inf = values.iter().all(|v| v.is_infinite());
        return (f64::INFINITY, if all_inf { 0.0 } else { f64::INFINITY });
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every `(a, p)` cell of the grid. Rows come back in `(a, p)` order and
/// are bitwise reproducible for a given master seed, whatever the thread
/// count.
pub fn run_grid(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    let m = config.classes;

    let noise: Vec<(f64, TransitionMatrix)> = match &config.noise {
        NoiseModel::Uniform { a_grid } => a_grid
            .iter()
            .map(|&a| Ok((a, uniform_transition(Prob::new(a)?, m)?)))
            .collect::<Result<_>>()?,
        NoiseModel::Matrix(t) => vec![(effective_clean_rate(t).value(), t.clone())],
    };
    let smoothings: Vec<SmoothingMatrix> = config
        .p_grid
        .iter()
        .map(|&p| uniform_smoothing(Prob::new(p)?, m))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize, usize)> = (0..noise.len())
        .flat_map(|ai| {
            (0..smoothings.len()).flat_map(move |pi| (0..config.seeds).map(move |r| (ai, pi, r)))
        })
        .collect();
    let results: Vec<Replicate> = jobs
        .par_iter()
        .map(|&(ai, pi, r)| {
            run_replicate(
                config,
                &noise[ai].1,
                &smoothings[pi],
                [ai as u64, pi as u64, r as u64],
            )
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(noise.len() * smoothings.len());
    for (cell, reps) in results.chunks_exact(config.seeds).enumerate() {
        let (ai, pi) = (cell / smoothings.len(), cell % smoothings.len());
        let (a, t) = &noise[ai];
        let p = config.p_grid[pi];
        let theory_loss = match &config.noise {
            NoiseModel::Uniform { .. } => {
                theory::loss_uniform(config.assumption, Prob::new(p)?, Prob::new(*a)?, m)?
            }
            NoiseModel::Matrix(_) => LossValue::from_nats(
                theory::loss_general(config.assumption, &smoothings[pi], t)?.nats() / m as f64,
            ),
        };
        let converged = reps.iter().all(|r| r.converged);
        let losses: Vec<f64> = reps.iter().map(|r| r.loss).collect();
        let (mean, std) = mean_std(&losses);
        let (emp_loss_mean, emp_loss_std, emp_accuracy_mean) = if converged {
            let acc = reps.iter().map(|r| r.accuracy).sum::<f64>() / reps.len() as f64;
            (mean, std, acc)
        } else {
            log::warn!(
                "cell a={a}, p={p}: gradient descent cannot reach a target with zero entries"
            );
            (f64::NAN, f64::NAN, f64::NAN)
        };
        rows.push(ExperimentRow {
            assumption: config.assumption,
            classes: m,
            a: *a,
            p,
            theory_loss,
            emp_loss_mean,
            emp_loss_std,
            emp_accuracy_mean,
            seeds: config.seeds,
            converged,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorstCell {
    pub a: f64,
    pub p: f64,
    pub theory_loss: f64,
    pub emp_loss_mean: f64,
    pub abs_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnArgmin {
    pub a: f64,
    /// Grid `p` with the smallest measured loss (ties to the smaller `p`).
    pub empirical_argmin_p: f64,
    /// Grid `p` with the smallest theoretical loss.
    pub theory_grid_argmin_p: f64,
    /// Continuous optimum for uniform noise at this clean rate.
    pub theory_p_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationReport {
    pub assumption: Assumption,
    pub classes: usize,
    pub cells_compared: usize,
    pub cells_skipped: usize,
    pub max_abs_deviation: f64,
    pub mean_abs_deviation: f64,
    pub worst_cell: Option<WorstCell>,
    pub columns: Vec<ColumnArgmin>,
}

/// First index of the smallest non-NaN value; ties to the earlier index.
fn argmin_by(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Aggregates how far measured losses sit from the theory. Only cells where
/// both values are finite enter the deviation statistics.
pub fn compare_to_theory(rows: &[ExperimentRow]) -> Result<DeviationReport> {
    let first = rows.first().ok_or(Error::EmptyInput("experiment rows"))?;
    if let Some(bad) = rows
        .iter()
        .find(|r| r.assumption != first.assumption || r.classes != first.classes)
    {
        return Err(Error::InvalidConfig(format!(
            "rows mix ({}, M={}) with ({}, M={})",
            first.assumption, first.classes, bad.assumption, bad.classes
        )));
    }

    let mut sorted: Vec<&ExperimentRow> = rows.iter().collect();
    sorted.sort_by(|x, y| x.a.total_cmp(&y.a).then(x.p.total_cmp(&y.p)));

    let mut compared = 0usize;
    let mut sum_dev = 0.0;
    let mut worst: Option<WorstCell> = None;
    for r in &sorted {
        let theory = r.theory_loss.nats();
        if !(theory.is_finite() && r.emp_loss_mean.is_finite()) {
            continue;
        }
        let dev = (r.emp_loss_mean - theory).abs();
        compared += 1;
        sum_dev += dev;
        if worst.as_ref().is_none_or(|w| dev > w.abs_deviation) {
            worst = Some(WorstCell {
                a: r.a,
                p: r.p,
                theory_loss: theory,
                emp_loss_mean: r.emp_loss_mean,
                abs_deviation: dev,
            });
        }
    }

    let mut columns = Vec::new();
    for group in sorted.chunk_by(|x, y| x.a == y.a) {
        let a = group[0].a;
        let emp = argmin_by(group.iter().map(|r| r.emp_loss_mean));
        let theo = argmin_by(group.iter().map(|r| r.theory_loss.nats()));
        let p_star = theory::optimal_p(first.assumption, Prob::new(a)?, first.classes)?
            .p_star
            .value();
        columns.push(ColumnArgmin {
            a,
            empirical_argmin_p: emp.map_or(f64::NAN, |i| group[i].p),
            theory_grid_argmin_p: theo.map_or(f64::NAN, |i| group[i].p),
            theory_p_star: p_star,
        });
    }

    Ok(DeviationReport {
        assumption: first.assumption,
        classes: first.classes,
        cells_compared: compared,
        cells_skipped: rows.len() - compared,
        max_abs_deviation: worst.as_ref().map_or(0.0, |w| w.abs_deviation),
        mean_abs_deviation: if compared > 0 {
            sum_dev / compared as f64
        } else {
            0.0
        },
        worst_cell: worst,
        columns,
    })
}
