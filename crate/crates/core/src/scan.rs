//! Global 1-D minimization on a closed interval.
//!
//! A uniform coarse scan locates the best basin, then golden-section search
//! refines inside the bracket formed by the neighbouring samples. The coarse
//! scan is what makes the search global; landscapes such as the γ-type loss
//! have a boundary minimum and an interior one.

use rayon::prelude::*;

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, PartialEq)]
pub struct ScanConfig {
    pub coarse_points: usize,
    pub refine_tol: f64,
    pub max_refine_iters: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            coarse_points: 1001,
            refine_tol: 1e-8,
            max_refine_iters: 200,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_points < 3 {
            return Err(Error::InvalidScanConfig(format!(
                "coarse_points must be at least 3, got {}",
                self.coarse_points
            )));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::InvalidScanConfig(format!(
                "refine_tol must be positive, got {}",
                self.refine_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub argmin: f64,
    pub value: f64,
}

/// Minimizes `f` over `[lo, hi]`. `f` may return `+inf`.
///
/// Ties between coarse samples go to the smaller abscissa. The returned value
/// is never larger than `f` at any coarse sample.
pub fn minimize_scalar<F>(f: F, lo: f64, hi: f64, config: &ScanConfig) -> Result<Minimum>
where
    F: Fn(f64) -> f64 + Sync,
{
    config.validate()?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EmptyDomain { lo, hi });
    }

    let n = config.coarse_points;
    let step = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect();
    let values: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();

    let mut best = 0;
    for i in 1..n {
        if values[i] < values[best] {
            best = i;
        }
    }
    if !values[best].is_finite() {
        return Err(Error::NoFiniteValue { lo, hi });
    }

    let left = xs[best.saturating_sub(1)];
    let right = xs[(best + 1).min(n - 1)];
    let refined = golden_section(&f, left, right, config);

    let coarse = Minimum {
        argmin: xs[best],
        value: values[best],
    };
    Ok(if refined.value < coarse.value {
        refined
    } else {
        coarse
    })
}

fn golden_section<F: Fn(f64) -> f64>(
    f: &F,
    mut a: f64,
    mut b: f64,
    config: &ScanConfig,
) -> Minimum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..config.max_refine_iters {
        if (b - a).abs() <= config.refine_tol {
            break;
        }
        // `<=` keeps the left part on ties
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    // the bracket ends may beat the interior probes when the minimum sits on
    // the domain boundary
    [(a, f(a)), (c, fc), (d, fd), (b, f(b))].into_iter().fold(
        Minimum {
            argmin: f64::NAN,
            value: f64::INFINITY,
        },
        |acc, (x, v)| {
            if v < acc.value {
                Minimum {
                    argmin: x,
                    value: v,
                }
            } else {
                acc
            }
        },
    )
}
