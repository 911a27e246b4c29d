//! Closed-form generalization losses of a memorizing learner trained on
//! smoothed, corrupted labels, and the smoothing that minimizes them.
//!
//! Three test-set assumptions are covered:
//!
//! * α: test labels are clean,
//! * β: test labels are corrupted independently by the same noise,
//! * γ: the test target is the smoothed distribution itself.
//!
//! Uniform-noise losses are per example (averaged over classes). The
//! general-matrix losses are summed over the `M` true classes, so for uniform
//! `S` and `T` they equal `M` times the uniform value.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{minimize_scalar, ScanConfig};
use crate::stochastic::{
    cross_entropy, effective_clean_rate, neg_xlogy, LossValue, Prob, SmoothingMatrix,
    StochasticMatrix, TransitionMatrix,
};

/// Upper end of the default numeric search domain; the loss diverges at
/// `p = 1` whenever `a < 1`.
pub const P_UPPER: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assumption {
    Alpha,
    Beta,
    Gamma,
}

impl Assumption {
    pub const ALL: [Assumption; 3] = [Assumption::Alpha, Assumption::Beta, Assumption::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Assumption::Alpha => "alpha",
            Assumption::Beta => "beta",
            Assumption::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Assumption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" | "α" => Ok(Assumption::Alpha),
            "beta" | "β" => Ok(Assumption::Beta),
            "gamma" | "γ" => Ok(Assumption::Gamma),
            other => Err(Error::Parse(format!(
                "unknown assumption {other:?} (expected alpha, beta or gamma)"
            ))),
        }
    }
}

fn check_classes(classes: usize) -> Result<f64> {
    if classes < 2 {
        Err(Error::InvalidClassCount(classes))
    } else {
        Ok(classes as f64)
    }
}

/// Off-diagonal smoothed mass `(1 - p) / (M - 1)`.
#[inline]
fn off_diag(p: f64, m: f64) -> f64 {
    (1.0 - p) / (m - 1.0)
}

/// Clean test labels: `-a ln p - (1-a) ln((1-p)/(M-1))`.
pub fn loss_alpha_uniform(p: Prob, a: Prob, classes: usize) -> Result<LossValue> {
    let m = check_classes(classes)?;
    let (p, a) = (p.value(), a.value());
    let q = off_diag(p, m);
    Ok(LossValue::from_nats(
        neg_xlogy(a, p) + neg_xlogy(1.0 - a, q),
    ))
}

/// Test labels corrupted by the same uniform noise as training labels.
pub fn loss_beta_uniform(p: Prob, a: Prob, classes: usize) -> Result<LossValue> {
    let m = check_classes(classes)?;
    let (p, a) = (p.value(), a.value());
    let q = off_diag(p, m);
    let r = 1.0 - a;
    // test and train label agree: both clean, or both flipped to the same class
    let agree = a * a + r * r / (m - 1.0);
    // exactly one flipped, or both flipped to different classes
    let disagree = 2.0 * a * r + r * r * (m - 2.0) / (m - 1.0);
    Ok(LossValue::from_nats(
        neg_xlogy(agree, p) + neg_xlogy(disagree, q),
    ))
}

/// Test target is the smoothed distribution of the true label.
pub fn loss_gamma_uniform(p: Prob, a: Prob, classes: usize) -> Result<LossValue> {
    let m = check_classes(classes)?;
    let (p, a) = (p.value(), a.value());
    let q = off_diag(p, m);
    let r = 1.0 - a;
    // clean training label: cross-entropy of the smoothed target with itself
    let clean = neg_xlogy(a * p, p) + neg_xlogy(a * (1.0 - p), q);
    // flipped label: prediction puts p on the wrong class
    let flipped = neg_xlogy(r * p, q)
        + neg_xlogy(r * (1.0 - p) * (m - 2.0) / (m - 1.0), q)
        + neg_xlogy(r * q, p);
    Ok(LossValue::from_nats(clean + flipped))
}

pub fn loss_uniform(assumption: Assumption, p: Prob, a: Prob, classes: usize) -> Result<LossValue> {
    match assumption {
        Assumption::Alpha => loss_alpha_uniform(p, a, classes),
        Assumption::Beta => loss_beta_uniform(p, a, classes),
        Assumption::Gamma => loss_gamma_uniform(p, a, classes),
    }
}

fn check_same_size<K, L>(a: &StochasticMatrix<K>, b: &StochasticMatrix<L>) -> Result<()> {
    if a.classes() != b.classes() {
        return Err(Error::DimensionMismatch {
            expected: a.classes(),
            actual: b.classes(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerClassLoss {
    pub per_class: Vec<LossValue>,
    pub total: LossValue,
}

/// α-type loss for general `S` and `T`: class `i` contributes
/// `-sum_j T[i][j] ln S[i][j]`.
///
/// With `S = T` each class loss is the entropy of row `i` of `T`, and the
/// total is minimized over column-stochastic `S`.
pub fn loss_alpha_general(s: &SmoothingMatrix, t: &TransitionMatrix) -> Result<PerClassLoss> {
    check_same_size(s, t)?;
    let m = s.classes();
    let per_class: Vec<LossValue> = (0..m)
        .map(|i| LossValue::from_nats((0..m).map(|j| neg_xlogy(t.get(i, j), s.get(i, j))).sum()))
        .collect();
    let total = per_class.iter().copied().sum();
    Ok(PerClassLoss { per_class, total })
}

/// `T * T^t`, entry `(j, k)` = sum over true classes of
/// `P(test label j) P(train label k)`.
fn co_corruption(t: &TransitionMatrix) -> Vec<Vec<f64>> {
    let m = t.classes();
    (0..m)
        .map(|j| {
            (0..m)
                .map(|k| (0..m).map(|i| t.get(j, i) * t.get(k, i)).sum())
                .collect()
        })
        .collect()
}

/// β-type loss summed over classes:
/// `-sum_i sum_j sum_k T[j][i] T[k][i] ln S[j][k]`.
pub fn loss_beta_general(s: &SmoothingMatrix, t: &TransitionMatrix) -> Result<LossValue> {
    check_same_size(s, t)?;
    let c = co_corruption(t);
    let m = s.classes();
    let mut total = 0.0;
    for (j, row) in c.iter().enumerate() {
        for (k, &weight) in row.iter().enumerate().take(m) {
            total += neg_xlogy(weight, s.get(j, k));
        }
    }
    Ok(LossValue::from_nats(total))
}

/// γ-type loss summed over classes: the smoothed target of true class `y`
/// scored against column `k` of `S`, weighted by `T[k][y]`.
pub fn loss_gamma_general(s: &SmoothingMatrix, t: &TransitionMatrix) -> Result<LossValue> {
    check_same_size(s, t)?;
    let m = s.classes();
    let mut total = 0.0;
    for y in 0..m {
        for k in 0..m {
            let w = t.get(k, y);
            if w > 0.0 {
                total += w * cross_entropy(s.column(y), s.column(k)).nats();
            }
        }
    }
    Ok(LossValue::from_nats(total))
}

pub fn loss_general(
    assumption: Assumption,
    s: &SmoothingMatrix,
    t: &TransitionMatrix,
) -> Result<LossValue> {
    match assumption {
        Assumption::Alpha => loss_alpha_general(s, t).map(|l| l.total),
        Assumption::Beta => loss_beta_general(s, t),
        Assumption::Gamma => loss_gamma_general(s, t),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalPoint {
    pub p_star: Prob,
    pub loss_at_p_star: LossValue,
    pub method: Method,
}

fn prob_clamped(x: f64) -> Prob {
    Prob::new(x.clamp(0.0, 1.0)).expect("clamped into [0, 1]")
}

/// `p* = a`, independent of the class count.
pub fn optimal_p_alpha(a: Prob, classes: usize) -> Result<OptimalPoint> {
    Ok(OptimalPoint {
        p_star: a,
        loss_at_p_star: loss_alpha_uniform(a, a, classes)?,
        method: Method::ClosedForm,
    })
}

/// `p* = (1 - 2a + a^2 M) / (M - 1)`, i.e. `2a^2 - 2a + 1` for two classes.
pub fn optimal_p_beta(a: Prob, classes: usize) -> Result<OptimalPoint> {
    let m = check_classes(classes)?;
    let a_val = a.value();
    let p_star = prob_clamped((1.0 - 2.0 * a_val + a_val * a_val * m) / (m - 1.0));
    Ok(OptimalPoint {
        p_star,
        loss_at_p_star: loss_beta_uniform(p_star, a, classes)?,
        method: Method::ClosedForm,
    })
}

/// Numeric γ-type optimum on the default domain `[1/M, 1 - 1e-9]`.
pub fn optimal_p_gamma(a: Prob, classes: usize) -> Result<OptimalPoint> {
    let m = check_classes(classes)?;
    optimal_p_gamma_in(a, classes, 1.0 / m, P_UPPER, &ScanConfig::default())
}

/// Numeric γ-type optimum on `[lo, hi] ⊆ [1/M, 1)`.
///
/// At `a = 1` the loss is the entropy of the smoothed target, whose infimum 0
/// is approached as `p -> 1`; that case is reported as `p* = 1`, loss 0.
pub fn optimal_p_gamma_in(
    a: Prob,
    classes: usize,
    lo: f64,
    hi: f64,
    config: &ScanConfig,
) -> Result<OptimalPoint> {
    let m = check_classes(classes)?;
    if !(lo < hi) || lo < 1.0 / m - 1e-15 || hi >= 1.0 {
        return Err(Error::EmptyDomain { lo, hi });
    }
    if a.value() == 1.0 {
        return Ok(OptimalPoint {
            p_star: Prob::ONE,
            loss_at_p_star: LossValue::ZERO,
            method: Method::Numeric,
        });
    }
    numeric_optimal_p(Assumption::Gamma, a, classes, lo, hi, config)
}

/// Minimizes the uniform-noise loss of `assumption` over `p ∈ [lo, hi]`.
pub fn numeric_optimal_p(
    assumption: Assumption,
    a: Prob,
    classes: usize,
    lo: f64,
    hi: f64,
    config: &ScanConfig,
) -> Result<OptimalPoint> {
    check_classes(classes)?;
    if !(lo < hi) || lo < 0.0 || hi > 1.0 {
        return Err(Error::EmptyDomain { lo, hi });
    }
    let objective = |p: f64| {
        loss_uniform(assumption, prob_clamped(p), a, classes)
            .map(LossValue::nats)
            .unwrap_or(f64::INFINITY)
    };
    let min = minimize_scalar(objective, lo, hi, config)?;
    Ok(OptimalPoint {
        p_star: prob_clamped(min.argmin),
        loss_at_p_star: LossValue::from_nats(min.value),
        method: Method::Numeric,
    })
}

/// Closed-form or numeric optimum for uniform noise, whichever applies.
pub fn optimal_p(assumption: Assumption, a: Prob, classes: usize) -> Result<OptimalPoint> {
    match assumption {
        Assumption::Alpha => optimal_p_alpha(a, classes),
        Assumption::Beta => optimal_p_beta(a, classes),
        Assumption::Gamma => optimal_p_gamma(a, classes),
    }
}

/// α-type optimal smoothing matrix: `S* = T`.
pub fn optimal_s_alpha(t: &TransitionMatrix) -> SmoothingMatrix {
    t.clone().reinterpret()
}

/// β-type optimal smoothing matrix: `T T^t` with each column normalized.
///
/// For doubly stochastic `T` no normalization is needed and the result is
/// symmetric. A column of `T T^t` that is entirely zero (a label that is
/// never observed) carries no weight in the loss; it is set to uniform.
pub fn optimal_s_beta(t: &TransitionMatrix) -> SmoothingMatrix {
    let m = t.classes();
    let c = co_corruption(t);
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let total: f64 = (0..m).map(|j| c[j][k]).sum();
            if total > 0.0 {
                (0..m).map(|j| c[j][k] / total).collect()
            } else {
                vec![1.0 / m as f64; m]
            }
        })
        .collect();
    SmoothingMatrix::from_columns(columns).expect("normalized columns are stochastic")
}

/// Mean-field α optimum: the effective clean rate `trace(T) / M`.
pub fn meanfield_p_alpha(t: &TransitionMatrix) -> Prob {
    effective_clean_rate(t)
}

/// Mean-field β optimum: `trace(T T^t) / M`.
pub fn meanfield_p_beta(t: &TransitionMatrix) -> Prob {
    let m = t.classes();
    let sum_sq: f64 = t.columns().flatten().map(|x| x * x).sum();
    prob_clamped(sum_sq / m as f64)
}

/// Evenly spaced values `lo, lo + step, ...` up to `hi` inclusive, rounded to
/// 12 decimals so that `0.5 + 3 * 0.1` prints as `0.8`.
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::MalformedGrid(format!(
            "need lo <= hi and step > 0, got lo={lo}, hi={hi}, step={step}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| {
            let x = lo + i as f64 * step;
            ((x * 1e12).round() / 1e12).min(hi)
        })
        .collect())
}

/// Non-empty, strictly ascending, inside `[0, 1]`.
pub fn validate_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::MalformedGrid(format!("{name} grid is empty")));
    }
    if let Some(x) = grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::MalformedGrid(format!(
            "{name} grid value {x} is outside [0, 1]"
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::MalformedGrid(format!(
            "{name} grid is not strictly ascending at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Theoretical loss over a rectangular `(a, p)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid {
    pub assumption: Assumption,
    pub classes: usize,
    pub a_grid: Vec<f64>,
    pub p_grid: Vec<f64>,
    /// Row-major: all `p` for the first `a`, then the next `a`, ...
    pub losses: Vec<LossValue>,
}

impl LandscapeGrid {
    pub fn at(&self, a_index: usize, p_index: usize) -> LossValue {
        self.losses[a_index * self.p_grid.len() + p_index]
    }

    /// Losses along `p` for fixed `a`.
    pub fn column(&self, a_index: usize) -> &[LossValue] {
        let n = self.p_grid.len();
        &self.losses[a_index * n..(a_index + 1) * n]
    }

    /// Index into `p_grid` of the smallest loss for fixed `a`; ties go to the
    /// smaller `p`.
    pub fn column_argmin(&self, a_index: usize) -> usize {
        let col = self.column(a_index);
        let mut best = 0;
        for (i, l) in col.iter().enumerate().skip(1) {
            if l.nats() < col[best].nats() {
                best = i;
            }
        }
        best
    }

    /// `(a, p, loss)` in `(a, p)` order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, LossValue)> + '_ {
        self.a_grid.iter().enumerate().flat_map(move |(ai, &a)| {
            self.p_grid
                .iter()
                .enumerate()
                .map(move |(pi, &p)| (a, p, self.at(ai, pi)))
        })
    }
}

pub fn landscape(
    assumption: Assumption,
    classes: usize,
    a_grid: &[f64],
    p_grid: &[f64],
) -> Result<LandscapeGrid> {
    check_classes(classes)?;
    validate_grid("a", a_grid)?;
    validate_grid("p", p_grid)?;
    let losses = a_grid
        .par_iter()
        .flat_map_iter(|&a| {
            p_grid.iter().map(move |&p| {
                loss_uniform(assumption, prob_clamped(p), prob_clamped(a), classes)
                    .expect("class count checked")
            })
        })
        .collect();
    Ok(LandscapeGrid {
        assumption,
        classes,
        a_grid: a_grid.to_vec(),
        p_grid: p_grid.to_vec(),
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{
        binary_entropy, entropy, random_column_stochastic, random_doubly_stochastic,
        uniform_smoothing, uniform_transition,
    };
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn prob(x: f64) -> Prob {
        Prob::new(x).unwrap()
    }

    // Two-class forms written out term by term, independent of the
    // multiclass code path.
    fn binary_alpha(p: f64, a: f64) -> f64 {
        -a * p.ln() - (1.0 - a) * (1.0 - p).ln()
    }
    fn binary_beta(p: f64, a: f64) -> f64 {
        -a * a * p.ln() - 2.0 * a * (1.0 - a) * (1.0 - p).ln() - (1.0 - a).powi(2) * p.ln()
    }
    fn binary_gamma(p: f64, a: f64) -> f64 {
        let h = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        a * h - (1.0 - a) * (p * (1.0 - p).ln() + (1.0 - p) * p.ln())
    }

    #[test]
    fn alpha_examples() {
        let l = loss_alpha_uniform(prob(0.5), prob(0.5), 2).unwrap().nats();
        assert_abs_diff_eq!(l, LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(l, binary_entropy(prob(0.5)).nats(), epsilon = 1e-15);
        let l = loss_alpha_uniform(prob(0.5), prob(0.95), 2).unwrap().nats();
        assert_abs_diff_eq!(l, LN_2, epsilon = 1e-15);
        // mpmath, 30 digits
        let l = loss_alpha_uniform(prob(0.8), prob(0.8), 10).unwrap().nats();
        assert_abs_diff_eq!(l, 0.939_847_339_005_431_8, epsilon = 1e-14);
    }

    #[test]
    fn alpha_divergence_at_boundary() {
        assert_eq!(
            loss_alpha_uniform(Prob::ONE, prob(0.9), 2).unwrap(),
            LossValue::INFINITY
        );
        assert_eq!(
            loss_alpha_uniform(Prob::ZERO, prob(0.9), 2).unwrap(),
            LossValue::INFINITY
        );
        // vanishing coefficient
        assert_eq!(
            loss_alpha_uniform(Prob::ONE, Prob::ONE, 3).unwrap().nats(),
            0.0
        );
    }

    #[test]
    fn beta_examples() {
        for a in [0.0, 0.3, 0.9, 1.0] {
            let l = loss_beta_uniform(prob(0.5), prob(a), 2).unwrap().nats();
            assert_abs_diff_eq!(l, LN_2, epsilon = 1e-15);
        }
        let opt = optimal_p_beta(prob(0.9), 2).unwrap();
        assert_abs_diff_eq!(opt.p_star.value(), 0.82, epsilon = 1e-15);
        let grid = linear_grid(0.5, 0.99, 0.01).unwrap();
        let best = grid
            .iter()
            .map(|&p| loss_beta_uniform(prob(p), prob(0.9), 2).unwrap().nats())
            .fold(f64::INFINITY, f64::min);
        assert!(opt.loss_at_p_star.nats() <= best);
    }

    #[test]
    fn beta_matches_monte_carlo_triple_sum() {
        // draw a true class, corrupt it twice independently (train and test),
        // score -ln S[test][train]
        let (p, a, m) = (0.7, 0.8, 3usize);
        let s = uniform_smoothing(prob(p), m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let flip = |y: usize, rng: &mut ChaCha8Rng| {
            if rng.random::<f64>() < a {
                y
            } else {
                let k = rng.random_range(0..m - 1);
                if k >= y {
                    k + 1
                } else {
                    k
                }
            }
        };
        let n = 2_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let y = rng.random_range(0..m);
            let train = flip(y, &mut rng);
            let test = flip(y, &mut rng);
            let l = -s.get(test, train).ln();
            sum += l;
            sum_sq += l * l;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        let theory = loss_beta_uniform(prob(p), prob(a), m).unwrap().nats();
        assert!(
            (mean - theory).abs() < 5.0 * se,
            "mc {mean} theory {theory} se {se}"
        );
    }

    #[test]
    fn gamma_examples() {
        for a in [0.0, 0.5, 0.9, 1.0] {
            let l = loss_gamma_uniform(prob(0.5), prob(a), 2).unwrap().nats();
            assert_abs_diff_eq!(l, LN_2, epsilon = 1e-15);
        }
        let l = loss_gamma_uniform(prob(1.0 - 1e-12), Prob::ONE, 2)
            .unwrap()
            .nats();
        assert!(l < 1e-10);
        assert_eq!(
            loss_gamma_uniform(Prob::ONE, Prob::ONE, 2).unwrap().nats(),
            0.0
        );
        // mpmath, 30 digits
        let l = loss_gamma_uniform(prob(0.8), prob(0.9), 2).unwrap().nats();
        assert_abs_diff_eq!(l, 0.583_580_085_205_381_3, epsilon = 1e-14);
    }

    #[test]
    fn two_class_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let p = rng.random_range(1e-6..1.0 - 1e-6);
            let a = rng.random::<f64>();
            let (pp, aa) = (prob(p), prob(a));
            assert_abs_diff_eq!(
                loss_alpha_uniform(pp, aa, 2).unwrap().nats(),
                binary_alpha(p, a),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                loss_beta_uniform(pp, aa, 2).unwrap().nats(),
                binary_beta(p, a),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                loss_gamma_uniform(pp, aa, 2).unwrap().nats(),
                binary_gamma(p, a),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn alpha_multiclass_is_a_constant_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = prob(rng.random_range(1e-6..1.0 - 1e-6));
            let a = prob(rng.random::<f64>());
            let m = rng.random_range(3..50usize);
            let shift = loss_alpha_uniform(p, a, m).unwrap().nats()
                - loss_alpha_uniform(p, a, 2).unwrap().nats();
            assert_abs_diff_eq!(
                shift,
                (1.0 - a.value()) * ((m - 1) as f64).ln(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn general_losses_match_uniform() {
        for &(p, a, m) in &[
            (0.8, 0.8, 3usize),
            (0.82, 0.9, 2),
            (0.6, 0.7, 5),
            (0.3, 0.5, 10),
        ] {
            let s = uniform_smoothing(prob(p), m).unwrap();
            let t = uniform_transition(prob(a), m).unwrap();
            let mf = m as f64;
            let alpha = loss_alpha_general(&s, &t).unwrap();
            assert_abs_diff_eq!(
                alpha.total.nats() / mf,
                loss_alpha_uniform(prob(p), prob(a), m).unwrap().nats(),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                loss_beta_general(&s, &t).unwrap().nats(),
                mf * loss_beta_uniform(prob(p), prob(a), m).unwrap().nats(),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                loss_gamma_general(&s, &t).unwrap().nats(),
                mf * loss_gamma_uniform(prob(p), prob(a), m).unwrap().nats(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn general_identity_and_mismatch() {
        let s = SmoothingMatrix::identity(3).unwrap();
        let t = TransitionMatrix::identity(3).unwrap();
        assert_eq!(loss_alpha_general(&s, &t).unwrap().total.nats(), 0.0);
        assert_eq!(loss_beta_general(&s, &t).unwrap().nats(), 0.0);
        let t4 = TransitionMatrix::identity(4).unwrap();
        assert!(matches!(
            loss_beta_general(&s, &t4),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(loss_alpha_general(&s, &t4).is_err());
    }

    #[test]
    fn alpha_general_at_s_equals_t_is_row_entropy_and_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let m = rng.random_range(2..6usize);
            let t: TransitionMatrix = random_column_stochastic(m, &mut rng).unwrap();
            let s_star = optimal_s_alpha(&t);
            let at_star = loss_alpha_general(&s_star, &t).unwrap();
            for i in 0..m {
                assert_abs_diff_eq!(
                    at_star.per_class[i].nats(),
                    entropy(&t.row(i)).nats(),
                    epsilon = 1e-12
                );
            }
            for _ in 0..50 {
                let other: SmoothingMatrix = random_column_stochastic(m, &mut rng).unwrap();
                assert!(
                    at_star.total.nats() <= loss_alpha_general(&other, &t).unwrap().total.nats()
                );
            }
        }
    }

    #[test]
    fn optimal_s_beta_examples() {
        let id = TransitionMatrix::identity(3).unwrap();
        assert_eq!(optimal_s_beta(&id), SmoothingMatrix::identity(3).unwrap());

        let s = optimal_s_beta(&uniform_transition(prob(0.9), 2).unwrap());
        assert_abs_diff_eq!(s.get(0, 0), 2.0 * 0.81 - 1.8 + 1.0, epsilon = 1e-15);

        let s = optimal_s_beta(&uniform_transition(prob(0.8), 10).unwrap());
        assert_abs_diff_eq!(s.get(4, 4), 5.8 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn optimal_s_beta_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let t: TransitionMatrix = random_doubly_stochastic(4, 4, &mut rng).unwrap();
            let s = optimal_s_beta(&t);
            assert!(s.is_symmetric(1e-12));
            let best = loss_beta_general(&s, &t).unwrap().nats();
            for _ in 0..100 {
                let r: SmoothingMatrix = random_column_stochastic(4, &mut rng).unwrap();
                let eps = rng.random_range(1e-4..0.5);
                let cols = s
                    .columns()
                    .zip(r.columns())
                    .map(|(a, b)| {
                        a.iter()
                            .zip(b)
                            .map(|(x, y)| (1.0 - eps) * x + eps * y)
                            .collect()
                    })
                    .collect();
                let perturbed = SmoothingMatrix::from_columns(cols).unwrap();
                assert!(best <= loss_beta_general(&perturbed, &t).unwrap().nats());
            }
        }
    }

    #[test]
    fn optimal_s_beta_non_doubly_stochastic_is_column_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t: TransitionMatrix = random_column_stochastic(5, &mut rng).unwrap();
        let s = optimal_s_beta(&t);
        for col in s.columns() {
            assert_abs_diff_eq!(col.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        // a never-observed label leaves a zero row in T
        let t = TransitionMatrix::from_columns(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let s = optimal_s_beta(&t);
        assert_eq!(s.column(1), &[0.5, 0.5]);
    }

    #[test]
    fn optimal_p_examples() {
        let o = optimal_p_alpha(prob(0.95), 2).unwrap();
        assert_eq!(o.p_star.value(), 0.95);
        assert_eq!(o.method, Method::ClosedForm);
        assert_eq!(optimal_p_alpha(Prob::ONE, 3).unwrap().p_star.value(), 1.0);
        let o = optimal_p_alpha(prob(0.5), 2).unwrap();
        assert_abs_diff_eq!(o.loss_at_p_star.nats(), LN_2, epsilon = 1e-15);

        assert_eq!(optimal_p_beta(prob(0.5), 2).unwrap().p_star.value(), 0.5);
        for m in [2, 3, 10, 1000] {
            assert_abs_diff_eq!(
                optimal_p_beta(Prob::ONE, m).unwrap().p_star.value(),
                1.0,
                epsilon = 1e-15
            );
        }
        assert_abs_diff_eq!(
            optimal_p_beta(prob(0.8), 10).unwrap().p_star.value(),
            0.644_444_444_444_444_4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn beta_optimum_never_exceeds_alpha_for_two_classes() {
        for i in 0..=500 {
            let a = prob(0.5 + i as f64 / 1000.0);
            let b = optimal_p_beta(a, 2).unwrap().p_star.value();
            assert!(b <= a.value() + 1e-15);
        }
    }

    // brute-force scan at 1e-4 resolution
    fn gamma_grid_argmin(a: f64, m: usize) -> f64 {
        let lo = 1.0 / m as f64;
        let n = ((P_UPPER - lo) / 1e-4) as usize;
        (0..=n)
            .map(|i| (lo + i as f64 * 1e-4).min(P_UPPER))
            .map(|p| (p, loss_gamma_uniform(prob(p), prob(a), m).unwrap().nats()))
            .fold((f64::NAN, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            })
            .0
    }

    #[test]
    fn gamma_optimum_examples() {
        let o = optimal_p_gamma(prob(0.7), 2).unwrap();
        assert_eq!(o.method, Method::Numeric);
        assert_abs_diff_eq!(o.p_star.value(), 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(o.p_star.value(), gamma_grid_argmin(0.7, 2), epsilon = 1e-3);

        let o = optimal_p_gamma(Prob::ONE, 2).unwrap();
        assert_eq!(o.p_star.value(), 1.0);
        assert_eq!(o.loss_at_p_star.nats(), 0.0);

        let o = optimal_p_gamma(prob(0.9), 2).unwrap();
        assert!(o.p_star.value() > 0.5 && o.p_star.value() < 1.0);
        assert_abs_diff_eq!(o.p_star.value(), gamma_grid_argmin(0.9, 2), epsilon = 2e-4);
    }

    #[test]
    fn gamma_domain_errors() {
        let cfg = ScanConfig::default();
        assert!(matches!(
            optimal_p_gamma_in(prob(0.9), 2, 0.7, 0.6, &cfg),
            Err(Error::EmptyDomain { .. })
        ));
        assert!(optimal_p_gamma_in(prob(0.9), 2, 0.3, 0.9, &cfg).is_err());
        assert!(optimal_p_gamma_in(prob(0.9), 2, 0.5, 1.0, &cfg).is_err());
        let o = optimal_p_gamma_in(prob(0.9), 2, 0.6, 0.9, &cfg).unwrap();
        assert!((0.6..=0.9).contains(&o.p_star.value()));
    }

    #[test]
    fn meanfield_examples() {
        let id = TransitionMatrix::identity(3).unwrap();
        assert_eq!(meanfield_p_alpha(&id).value(), 1.0);
        assert_eq!(meanfield_p_beta(&id).value(), 1.0);
        for (a, m) in [(0.7, 2usize), (0.9, 5), (0.8, 10)] {
            let t = uniform_transition(prob(a), m).unwrap();
            assert_eq!(meanfield_p_alpha(&t).value(), a);
            assert_abs_diff_eq!(
                meanfield_p_beta(&t).value(),
                optimal_p_beta(prob(a), m).unwrap().p_star.value(),
                epsilon = 1e-12
            );
        }
        let t = TransitionMatrix::from_columns(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        assert_abs_diff_eq!(meanfield_p_alpha(&t).value(), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn grid_helpers() {
        let g = linear_grid(0.5, 1.0, 0.1).unwrap();
        assert_eq!(g, vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(linear_grid(0.5, 1.0, 0.01).unwrap().len(), 51);
        assert!(linear_grid(0.5, 0.4, 0.1).is_err());
        assert!(linear_grid(0.5, 1.0, 0.0).is_err());
        assert!(validate_grid("p", &[]).is_err());
        assert!(validate_grid("p", &[0.2, 0.1]).is_err());
        assert!(validate_grid("p", &[0.2, 1.1]).is_err());
    }

    #[test]
    fn landscape_examples() {
        let g = landscape(Assumption::Alpha, 2, &[0.5], &[0.5]).unwrap();
        assert_abs_diff_eq!(g.at(0, 0).nats(), LN_2, epsilon = 1e-15);

        let p_grid = linear_grid(0.5, 1.0, 0.01).unwrap();
        let g = landscape(Assumption::Alpha, 2, &[0.9], &p_grid).unwrap();
        let best = g.p_grid[g.column_argmin(0)];
        assert!((best - 0.9).abs() <= 0.01 + 1e-12);

        let mut p_near = linear_grid(0.97, 0.99, 0.01).unwrap();
        p_near.extend([0.999, 0.9999, 1.0 - 1e-9, 1.0]);
        for assumption in Assumption::ALL {
            let g = landscape(assumption, 2, &[0.9], &p_near).unwrap();
            let col = g.column(0);
            for w in col.windows(2) {
                assert!(w[0].nats() < w[1].nats(), "{assumption}: {:?}", col);
            }
            assert_eq!(col.last().unwrap().nats(), f64::INFINITY);
        }

        assert!(landscape(Assumption::Beta, 2, &[], &[0.5]).is_err());
        assert!(landscape(Assumption::Beta, 1, &[0.5], &[0.5]).is_err());
    }

    #[test]
    fn assumption_parsing() {
        assert_eq!("alpha".parse::<Assumption>().unwrap(), Assumption::Alpha);
        assert_eq!("Gamma".parse::<Assumption>().unwrap(), Assumption::Gamma);
        assert!("delta".parse::<Assumption>().is_err());
        assert_eq!(Assumption::Beta.to_string(), "beta");
    }
}
