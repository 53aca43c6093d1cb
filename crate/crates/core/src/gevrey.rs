// SPDX-License-Identifier: Apache-2.0

//! Truncated analytic norms.
//!
//! For a multi-index pair `(alpha, beta)` in `x` and `p` the weight is
//! `nu^{|alpha|+|beta|} / (alpha! beta!)`. Sums run over `|alpha| + |beta| <= N_max`
//! and report the contribution of the outermost shell so truncation can be
//! judged by the caller. All norms inside the sums are the `X` norm of
//! [`crate::lingroup::XNorm`].
//!
//! The conjugated derivatives `e^{tL} d^gamma e^{-tL} f` are evaluated by
//! applying the exact per-mode group on both sides of a spectral derivative.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, PhaseGridFunction, SpectralAxes, SpectralField};
use crate::lingroup::{LinearizedOperator, XNorm};
use crate::multiindex::{self, MultiIndex};

/// Shrinking analyticity radius `nu(t) = nu0 e^{-mu t}` and the damping `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevreySchedule {
    pub nu0: f64,
    pub mu: f64,
    pub delta: f64,
    pub n_max: usize,
}

impl GevreySchedule {
    pub fn new(nu0: f64, mu: f64, delta: f64, n_max: usize) -> Result<Self> {
        if !(nu0 > 0.0 && nu0.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu0 must be positive, got {nu0}")));
        }
        if !(mu >= 0.0 && delta >= 0.0) {
            return Err(Error::InvalidParameter("mu and delta must be nonnegative".into()));
        }
        if n_max < 1 {
            return Err(Error::InvalidParameter("N_max must be at least 1".into()));
        }
        Ok(Self {
            nu0,
            mu,
            delta,
            n_max,
        })
    }

    /// Reject radii outside the convergence range of the commutator series.
    pub fn check_radius(&self, r: f64) -> Result<()> {
        if self.nu0 * r >= 1.0 {
            return Err(Error::HypothesisViolated(format!(
                "nu0 * r = {} must be < 1",
                self.nu0 * r
            )));
        }
        Ok(())
    }

    pub fn nu(&self, t: f64) -> f64 {
        norm_schedule(t, self)
    }
}

impl Default for GevreySchedule {
    fn default() -> Self {
        Self {
            nu0: 0.05,
            mu: 0.0,
            delta: 0.0,
            n_max: 6,
        }
    }
}

/// `nu0 e^{-mu t}`.
pub fn norm_schedule(t: f64, s: &GevreySchedule) -> f64 {
    s.nu0 * (-s.mu * t).exp()
}

/// A truncated sum and its outermost shell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub shell_tail: f64,
}

/// One line of a norm trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTraceRecord {
    pub t: f64,
    pub nu: f64,
    pub value: f64,
    pub shell_tail: f64,
}

pub fn write_trace<W: Write>(mut w: W, records: &[NormTraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn split(gamma: &[usize], d: usize) -> (&[usize], &[usize]) {
    gamma.split_at(d)
}

/// `||d^gamma g||_X` for every `gamma = (alpha, beta)` with `|gamma| <= max_order`,
/// with `e^{tL} . e^{-tL}` conjugation when `conj` is given.
fn derivative_norms(
    f: &PhaseGridFunction,
    max_order: usize,
    xnorm: &XNorm,
    conj: Option<(&LinearizedOperator, f64)>,
) -> Result<BTreeMap<MultiIndex, f64>> {
    let grid = *f.grid();
    let d = grid.d;
    if max_order > grid::MAX_DERIVATIVE_ORDER {
        return Err(Error::OrderExceedsTruncation {
            order: max_order,
            max: grid::MAX_DERIVATIVE_ORDER,
        });
    }
    let mut h = grid::to_spectral(f, SpectralAxes::Spatial);
    if let Some((op, t)) = conj {
        if op.grid() != &grid {
            return Err(Error::GridMismatch);
        }
        h = op.group_action_spectral(-t, &h);
    }
    let hp = h.to_axes(SpectralAxes::PhaseSpace);
    let indices = multiindex::up_to_order(2 * d, max_order);
    let norms: Vec<Result<f64>> = indices
        .par_iter()
        .map(|gamma| {
            let (a, b) = split(gamma, d);
            let dg: SpectralField = hp.derivative(a, b)?.to_axes(SpectralAxes::Spatial);
            let dg = match conj {
                Some((op, t)) => op.group_action_spectral(t, &dg),
                None => dg,
            };
            Ok(xnorm.norm_spectral(&dg))
        })
        .collect();
    indices
        .into_iter()
        .zip(norms)
        .map(|(g, n)| n.map(|v| (g, v)))
        .collect()
}

fn weight(gamma: &[usize], nu: f64) -> f64 {
    nu.powi(multiindex::order(gamma) as i32) / multiindex::factorial(gamma)
}

/// `sum_{|alpha|+|beta| <= N_max} nu^{|alpha|+|beta|}/(alpha! beta!) ||d_x^alpha d_p^beta f||_X`.
pub fn analytic_seminorm(f: &PhaseGridFunction, nu: f64, n_max: usize, xnorm: &XNorm) -> Result<NormValue> {
    if nu < 0.0 {
        return Err(Error::InvalidParameter(format!("nu must be nonnegative, got {nu}")));
    }
    let norms = derivative_norms(f, n_max, xnorm, None)?;
    let mut value = 0.0;
    let mut tail = 0.0;
    for (gamma, n) in &norms {
        let term = weight(gamma, nu) * n;
        value += term;
        if multiindex::order(gamma) == n_max {
            tail += term;
        }
    }
    Ok(NormValue {
        value,
        shell_tail: tail,
    })
}

/// `e^{-delta t} sum_{|a+b| <= 1} ||e^{tL} d_x^a d_p^b e^{-tL} f||_X`.
pub fn base_norm_xt(f: &PhaseGridFunction, t: f64, op: &LinearizedOperator, delta: f64) -> Result<f64> {
    let norms = derivative_norms(f, 1, op.x_norm(), Some((op, t)))?;
    Ok((-delta * t).exp() * norms.values().sum::<f64>())
}

/// `sum_{|a+b| <= 1} sum_{|alpha|+|beta| <= N_max} nu^{..}/(alpha! beta!)
/// ||e^{tL} d^{alpha+a} d^{beta+b} e^{-tL} f||_X`.
pub fn conjugated_norm_yt(
    f: &PhaseGridFunction,
    t: f64,
    nu: f64,
    n_max: usize,
    op: &LinearizedOperator,
) -> Result<NormValue> {
    let d = f.grid().d;
    let norms = derivative_norms(f, n_max + 1, op.x_norm(), Some((op, t)))?;
    let shifts = multiindex::up_to_order(2 * d, 1);
    let mut value = 0.0;
    let mut tail = 0.0;
    for gamma in multiindex::up_to_order(2 * d, n_max) {
        let w = weight(&gamma, nu);
        let s: f64 = shifts.iter().map(|e| norms[&multiindex::add(&gamma, e)]).sum();
        value += w * s;
        if multiindex::order(&gamma) == n_max {
            tail += w * s;
        }
    }
    Ok(NormValue {
        value,
        shell_tail: tail,
    })
}

/// `Y_t` norm of the deviation from equilibrium along a trajectory sample.
pub fn trace_record(
    f: &PhaseGridFunction,
    t: f64,
    schedule: &GevreySchedule,
    op: &LinearizedOperator,
) -> Result<NormTraceRecord> {
    let nu = schedule.nu(t);
    let v = conjugated_norm_yt(f, t, nu, schedule.n_max, op)?;
    Ok(NormTraceRecord {
        t,
        nu,
        value: v.value,
        shell_tail: v.shell_tail,
    })
}
