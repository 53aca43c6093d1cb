// SPDX-License-Identifier: Apache-2.0

//! Exponential decay fits of `||f(t) - F||_X`.

use serde::{Deserialize, Serialize};

use super::TrajectoryRecord;
use crate::error::{Error, Result};

/// Norms below this are treated as exhausted and left out of the fit.
const NORM_FLOOR: f64 = 1e-14;

/// `||f(t) - F||_X ~ c e^{-rate t}` on the tail half of the samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub c: f64,
    /// Root mean square of the residuals of `log ||f - F||_X`.
    pub residual: f64,
    /// `false` when some sample exceeds its predecessor by more than `1e-6`
    /// relative; the fit is still returned.
    pub monotone: bool,
}

pub fn decay_fit(record: &TrajectoryRecord) -> Result<DecayFit> {
    decay_fit_series(&record.times(), &record.norms())
}

/// Least squares of `log n` against `t` over the second half of the samples
/// with `n > 1e-14`. Needs at least ten such samples.
pub fn decay_fit_series(times: &[f64], norms: &[f64]) -> Result<DecayFit> {
    if times.len() != norms.len() {
        return Err(Error::ShapeMismatch {
            expected: times.len(),
            got: norms.len(),
        });
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(_, &n)| n > NORM_FLOOR)
        .map(|(&t, &n)| (t, n.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "decay fit needs 10 samples above {NORM_FLOOR}, got {}",
            pts.len()
        )));
    }
    let monotone = pts.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-6);
    let tail = &pts[pts.len() / 2..];
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if stt == 0.0 {
        return Err(Error::InvalidParameter("decay fit needs distinct sample times".into()));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let residual = (tail
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        c: intercept.exp(),
        residual,
        monotone,
    })
}
