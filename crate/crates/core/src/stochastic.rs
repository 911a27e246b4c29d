//! Probability-domain types and column-stochastic matrices.
//!
//! Matrices are indexed `[observed][true]`: column `j` is the distribution
//! attached to true class `j`. Both noise transition matrices and smoothing
//! matrices share that layout and differ only in their marker type.

use std::fmt;
use std::iter::Sum;
use std::marker::PhantomData;
use std::ops::Add;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance applied to column sums.
pub const COLUMN_SUM_TOL: f64 = 1e-9;

/// A probability in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Prob(f64);

impl Prob {
    pub const ZERO: Prob = Prob(0.0);
    pub const ONE: Prob = Prob(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Prob(value))
        } else {
            Err(Error::ProbabilityOutOfRange(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - value`, e.g. the corruption rate for a clean rate.
    #[inline]
    pub fn complement(self) -> Prob {
        Prob(1.0 - self.0)
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A loss in nats. Non-negative, possibly `+inf`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct LossValue(f64);

impl LossValue {
    pub const ZERO: LossValue = LossValue(0.0);
    pub const INFINITY: LossValue = LossValue(f64::INFINITY);

    /// Wraps a raw value. Tiny negative round-off (cross-entropy of a
    /// distribution with itself) is clamped to zero.
    pub fn from_nats(nats: f64) -> Self {
        debug_assert!(!nats.is_nan(), "loss is NaN");
        debug_assert!(nats >= -1e-9, "loss {nats} is negative");
        LossValue(nats.max(0.0))
    }

    #[inline]
    pub fn nats(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl Add for LossValue {
    type Output = LossValue;
    fn add(self, rhs: LossValue) -> LossValue {
        LossValue(self.0 + rhs.0)
    }
}

impl Sum for LossValue {
    fn sum<I: Iterator<Item = LossValue>>(iter: I) -> LossValue {
        iter.fold(LossValue::ZERO, Add::add)
    }
}

impl fmt::Display for LossValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `-coef * ln(x)` with `0 * ln 0 = 0` and `coef * ln 0 = -inf` for `coef > 0`.
#[inline]
pub(crate) fn neg_xlogy(coef: f64, x: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else if x == 0.0 {
        f64::INFINITY
    } else {
        -coef * x.ln()
    }
}

/// Entropy of a Bernoulli(p) variable in nats.
pub fn binary_entropy(p: Prob) -> LossValue {
    let p = p.value();
    LossValue::from_nats(neg_xlogy(p, p) + neg_xlogy(1.0 - p, 1.0 - p))
}

/// Entropy of an arbitrary distribution in nats.
pub fn entropy(dist: &[f64]) -> LossValue {
    LossValue::from_nats(dist.iter().map(|&q| neg_xlogy(q, q)).sum())
}

/// Cross-entropy `-sum_i target_i ln(pred_i)`.
pub fn cross_entropy(target: &[f64], pred: &[f64]) -> LossValue {
    debug_assert_eq!(target.len(), pred.len());
    LossValue::from_nats(
        target
            .iter()
            .zip(pred)
            .map(|(&t, &q)| neg_xlogy(t, q))
            .sum(),
    )
}

/// A distribution over `M` classes.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs).map_err(|v| Error::NotStochastic(v.at_column(0)))?;
        Ok(SoftLabel(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest entry; ties go to the smaller index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// First failure found by [`validate_column_stochastic`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub column: usize,
    pub column_sum: f64,
    /// `(row, value)` of the first entry outside `[0, 1]`, if any.
    pub bad_entry: Option<(usize, f64)>,
}

impl Violation {
    fn at_column(mut self, column: usize) -> Self {
        self.column = column;
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bad_entry {
            Some((row, value)) => write!(
                f,
                "column {} has entry {} at row {} outside [0, 1] (column sum {})",
                self.column, value, row, self.column_sum
            ),
            None => write!(
                f,
                "column {} sums to {} (expected 1 within {:e})",
                self.column, self.column_sum, COLUMN_SUM_TOL
            ),
        }
    }
}

fn check_distribution(col: &[f64]) -> std::result::Result<(), Violation> {
    let sum: f64 = col.iter().sum();
    let bad_entry = col
        .iter()
        .position(|x| !(0.0..=1.0).contains(x))
        .map(|row| (row, col[row]));
    if bad_entry.is_some() || !((sum - 1.0).abs() <= COLUMN_SUM_TOL) {
        return Err(Violation {
            column: 0,
            column_sum: sum,
            bad_entry,
        });
    }
    Ok(())
}

/// Checks a square matrix given as a list of columns.
///
/// Accepts iff every entry lies in `[0, 1]` and every column sums to one
/// within [`COLUMN_SUM_TOL`]. The error names the first offending column.
pub fn validate_column_stochastic(columns: &[Vec<f64>]) -> Result<()> {
    let n = columns.len();
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::NotSquare {
            rows: bad.len(),
            cols: n,
        });
    }
    for (j, col) in columns.iter().enumerate() {
        check_distribution(col).map_err(|v| Error::NotStochastic(v.at_column(j)))?;
    }
    Ok(())
}

/// Marker for noise transition matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transition {}

/// Marker for smoothing matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {}

/// Column-stochastic `M x M` matrix, stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix<K> {
    classes: usize,
    data: Vec<f64>,
    _kind: PhantomData<K>,
}

/// `T[i][j] = P(observed label i | true label j)`.
pub type TransitionMatrix = StochasticMatrix<Transition>;

/// Column `j` is the smoothed target for class `j`.
pub type SmoothingMatrix = StochasticMatrix<Smoothing>;

fn check_classes(classes: usize) -> Result<()> {
    if classes < 2 {
        Err(Error::InvalidClassCount(classes))
    } else {
        Ok(())
    }
}

impl<K> StochasticMatrix<K> {
    /// Builds from columns, validating stochasticity.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        check_classes(columns.len())?;
        validate_column_stochastic(&columns)?;
        let classes = columns.len();
        Ok(StochasticMatrix {
            classes,
            data: columns.into_iter().flatten().collect(),
            _kind: PhantomData,
        })
    }

    /// Builds from `entry(row, col)`, validating stochasticity.
    pub fn from_fn(classes: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        check_classes(classes)?;
        let columns = (0..classes)
            .map(|j| (0..classes).map(|i| entry(i, j)).collect())
            .collect();
        Self::from_columns(columns)
    }

    pub fn identity(classes: usize) -> Result<Self> {
        Self::from_fn(classes, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Constant diagonal `diag`, off-diagonal `(1 - diag) / (M - 1)`.
    pub(crate) fn uniform(diag: Prob, classes: usize) -> Result<Self> {
        check_classes(classes)?;
        let off = (1.0 - diag.value()) / (classes - 1) as f64;
        Self::from_fn(classes, |i, j| if i == j { diag.value() } else { off })
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.classes + row]
    }

    #[inline]
    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.classes..(col + 1) * self.classes]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.classes)
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.classes).map(|j| self.get(row, j)).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.classes).map(|i| self.get(i, i)).collect()
    }

    pub fn to_columns(&self) -> Vec<Vec<f64>> {
        self.columns().map(<[f64]>::to_vec).collect()
    }

    /// `M * v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.classes);
        let mut out = vec![0.0; self.classes];
        for (col, &x) in self.columns().zip(v) {
            for (o, &m) in out.iter_mut().zip(col) {
                *o += m * x;
            }
        }
        out
    }

    /// Reuses the entries under another role (e.g. a transition matrix as a
    /// smoothing matrix).
    pub fn reinterpret<L>(self) -> StochasticMatrix<L> {
        StochasticMatrix {
            classes: self.classes,
            data: self.data,
            _kind: PhantomData,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.classes).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn max_abs_diff<L>(&self, other: &StochasticMatrix<L>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl<K> fmt::Display for StochasticMatrix<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.classes {
            let row: Vec<String> = self.row(i).iter().map(|x| format!("{x:.6}")).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Symmetric label noise: clean rate `a` on the diagonal, the rest spread
/// evenly over the other `M - 1` classes.
pub fn uniform_transition(clean_rate: Prob, classes: usize) -> Result<TransitionMatrix> {
    if classes >= 2 && clean_rate.value() <= 1.0 / classes as f64 {
        log::warn!(
            "clean rate {} is at or below chance level 1/{} for {} classes",
            clean_rate,
            classes,
            classes
        );
    }
    TransitionMatrix::uniform(clean_rate, classes)
}

/// Uniform `p`-smoothing: diagonal `p`, off-diagonal `(1 - p) / (M - 1)`.
pub fn uniform_smoothing(p: Prob, classes: usize) -> Result<SmoothingMatrix> {
    SmoothingMatrix::uniform(p, classes)
}

/// Smoothed target for a hard label: column `class_index` of `S`.
pub fn smooth_label(s: &SmoothingMatrix, class_index: usize) -> Result<SoftLabel> {
    if class_index >= s.classes() {
        return Err(Error::IndexOutOfRange {
            index: class_index,
            classes: s.classes(),
        });
    }
    Ok(SoftLabel(s.column(class_index).to_vec()))
}

/// Mean of the diagonal of `T`.
pub fn effective_clean_rate(t: &TransitionMatrix) -> Prob {
    // incremental mean: exact when the diagonal is constant
    let mean = t
        .diagonal()
        .iter()
        .enumerate()
        .fold(0.0, |m, (k, &x)| m + (x - m) / (k + 1) as f64);
    Prob(mean.clamp(0.0, 1.0))
}

/// Random column-stochastic matrix with Dirichlet(1, ..., 1) columns.
pub fn random_column_stochastic<K, R: Rng + ?Sized>(
    classes: usize,
    rng: &mut R,
) -> Result<StochasticMatrix<K>> {
    check_classes(classes)?;
    let columns = (0..classes)
        .map(|_| {
            let raw: Vec<f64> = (0..classes)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            normalized(raw)
        })
        .collect();
    StochasticMatrix::from_columns(columns)
}

/// Random doubly stochastic matrix: a random convex combination of
/// `terms` random permutation matrices.
pub fn random_doubly_stochastic<K, R: Rng + ?Sized>(
    classes: usize,
    terms: usize,
    rng: &mut R,
) -> Result<StochasticMatrix<K>> {
    use rand::seq::SliceRandom;

    check_classes(classes)?;
    let terms = terms.max(1);
    let weights = normalized((0..terms).map(|_| rng.random::<f64>() + 1e-3).collect());
    let mut data = vec![0.0; classes * classes];
    let mut perm: Vec<usize> = (0..classes).collect();
    for w in weights {
        perm.shuffle(rng);
        for (j, &i) in perm.iter().enumerate() {
            data[j * classes + i] += w;
        }
    }
    StochasticMatrix::from_columns(data.chunks_exact(classes).map(<[f64]>::to_vec).collect())
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}
