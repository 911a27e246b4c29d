//! Per-example training losses on logits.
//!
//! Three ways of injecting a stochastic matrix into the negative
//! log-likelihood: smoothing the target, correcting the output
//! distribution (forward correction), and mixing the logits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stochastic::{LossValue, SoftLabel, StochasticMatrix, TransitionMatrix};

/// Pre-softmax scores. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if let Some(i) = h.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLogit(i));
        }
        if h.is_empty() {
            return Err(Error::EmptyInput("logit vector"));
        }
        Ok(LogitVector(h))
    }

    pub fn zeros(classes: usize) -> Self {
        LogitVector(vec![0.0; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `ln softmax(h)`, computed with the max subtracted.
pub fn log_softmax(h: &[f64]) -> Vec<f64> {
    let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + h.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    h.iter().map(|x| x - log_z).collect()
}

pub(crate) fn softmax_raw(h: &[f64]) -> Vec<f64> {
    let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = h.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

pub fn softmax(h: &LogitVector) -> SoftLabel {
    SoftLabel::new(softmax_raw(h.as_slice())).expect("softmax output lies on the simplex")
}

fn check_dims<K>(h: &LogitVector, s: &StochasticMatrix<K>, target: usize) -> Result<()> {
    if h.len() != s.classes() {
        return Err(Error::DimensionMismatch {
            expected: s.classes(),
            actual: h.len(),
        });
    }
    if target >= s.classes() {
        return Err(Error::IndexOutOfRange {
            index: target,
            classes: s.classes(),
        });
    }
    Ok(())
}

/// Cross-entropy against the smoothed target: `-sum_i S[i][j] ln softmax(h)_i`.
pub fn smoothed_nll<K>(
    h: &LogitVector,
    s: &StochasticMatrix<K>,
    target: usize,
) -> Result<LossValue> {
    check_dims(h, s, target)?;
    let log_q = log_softmax(h.as_slice());
    let nats = s
        .column(target)
        .iter()
        .zip(&log_q)
        .map(|(&w, &lq)| if w == 0.0 { 0.0 } else { -w * lq })
        .sum();
    Ok(LossValue::from_nats(nats))
}

/// Gradient of [`smoothed_nll`] with respect to the logits:
/// `softmax(h) - S[:, j]`.
pub fn smoothed_nll_grad<K>(
    h: &LogitVector,
    s: &StochasticMatrix<K>,
    target: usize,
) -> Result<Vec<f64>> {
    check_dims(h, s, target)?;
    Ok(softmax_raw(h.as_slice())
        .iter()
        .zip(s.column(target))
        .map(|(q, y)| q - y)
        .collect())
}

/// Forward-corrected NLL: `-ln (T softmax(h))_j`.
pub fn forward_nll(h: &LogitVector, t: &TransitionMatrix, target: usize) -> Result<LossValue> {
    check_dims(h, t, target)?;
    let corrected = t.apply(&softmax_raw(h.as_slice()));
    let x = corrected[target];
    Ok(if x > 0.0 {
        LossValue::from_nats(-x.ln())
    } else {
        LossValue::INFINITY
    })
}

/// Logit smoothing: `-ln softmax(S h)_j`.
pub fn logit_smoothed_nll<K>(
    h: &LogitVector,
    s: &StochasticMatrix<K>,
    target: usize,
) -> Result<LossValue> {
    check_dims(h, s, target)?;
    let mixed = s.apply(h.as_slice());
    Ok(LossValue::from_nats(-log_softmax(&mixed)[target]))
}

/// The three log-likelihoods compared for target `j`, with column `j` of `S`
/// as the mixing weights:
///
/// * smoothed: `sum_i S[i][j] ln softmax(h)_i`
/// * forward: `ln sum_i S[i][j] softmax(h)_i`
/// * logit: `ln softmax(S h)_j`
///
/// `forward - smoothed >= 0` by concavity of `ln`. The sign of
/// `logit - forward` is not fixed and is only reported. For symmetric `S`
/// the forward term equals `-forward_nll(h, S, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JensenChain {
    pub smoothed_ll: f64,
    pub forward_ll: f64,
    pub logit_ll: f64,
    /// `forward_ll - smoothed_ll`
    pub gap_forward_smoothed: f64,
    /// `logit_ll - forward_ll`
    pub gap_logit_forward: f64,
}

pub fn jensen_chain<K>(
    h: &LogitVector,
    s: &StochasticMatrix<K>,
    target: usize,
) -> Result<JensenChain> {
    check_dims(h, s, target)?;
    let log_q = log_softmax(h.as_slice());
    let weights = s.column(target);
    let smoothed_ll: f64 = weights
        .iter()
        .zip(&log_q)
        .map(|(&w, &lq)| if w == 0.0 { 0.0 } else { w * lq })
        .sum();
    let forward_ll = weights
        .iter()
        .zip(&log_q)
        .map(|(&w, &lq)| w * lq.exp())
        .sum::<f64>()
        .ln();
    let logit_ll = -logit_smoothed_nll(h, s, target)?.nats();
    Ok(JensenChain {
        smoothed_ll,
        forward_ll,
        logit_ll,
        gap_forward_smoothed: forward_ll - smoothed_ll,
        gap_logit_forward: logit_ll - forward_ll,
    })
}
