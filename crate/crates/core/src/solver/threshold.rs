// SPDX-License-Identifier: Apache-2.0

//! Relaxation threshold `tau_0` from measured commutator constants.
//!
//! With `(C, r)` fitted on the phase-space commutator family, `delta = C r`,
//! `omega_0 = 1.01 * 2d C r / (1 - r nu0)^{2d}` and `tau_0 = 1 / (omega_0 + 2 delta)`,
//! which lies in `(0, 1 / (2 C r))`. Relaxation times `tau < tau_0` fall in the
//! small-data regime, where `||f(t) - F||` decays at least like
//! `e^{-(1/tau - 1/tau_0) t}`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstract_system::{fit_commutators, PdeFamily};
use crate::error::{Error, Result};
use crate::lingroup::LinearizedOperator;

/// Margin by which `omega_0` exceeds its lower bound.
const OMEGA_MARGIN: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationThreshold {
    pub c: f64,
    pub r: f64,
    pub nu0: f64,
    pub delta: f64,
    pub omega0: f64,
    pub tau0: f64,
}

impl RelaxationThreshold {
    pub fn from_constants(c: f64, r: f64, nu0: f64, d: usize) -> Result<Self> {
        if !(c >= 0.0 && r > 0.0 && c.is_finite() && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad commutator constants C = {c}, r = {r}")));
        }
        if !(nu0 > 0.0 && nu0 * r < 1.0) {
            return Err(Error::HypothesisViolated(format!(
                "nu0 r = {} must lie in (0, 1)",
                nu0 * r
            )));
        }
        let n = 2 * d;
        let delta = c * r;
        let omega0 = OMEGA_MARGIN * n as f64 * c * r / (1.0 - r * nu0).powi(n as i32);
        let tau0 = 1.0 / (omega0 + 2.0 * delta);
        Ok(Self {
            c,
            r,
            nu0,
            delta,
            omega0,
            tau0,
        })
    }

    /// `1/tau - 1/tau_0`, the guaranteed decay rate at relaxation time `tau`.
    pub fn guaranteed_rate(&self, tau: f64) -> f64 {
        1.0 / tau - 1.0 / self.tau0
    }
}

/// Fit `(C, r)` on `sample_count` random smooth fields up to order `depth`
/// and derive `tau_0`.
pub fn relaxation_threshold(
    op: &LinearizedOperator,
    nu0: f64,
    sample_count: usize,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RelaxationThreshold> {
    let kmax = (op.grid().nx.min(op.grid().np) / 8).max(1) as i32;
    let family = PdeFamily::new(op, kmax);
    let fit = fit_commutators(&family, sample_count, depth, rng)?;
    RelaxationThreshold::from_constants(fit.c, fit.r, nu0, op.grid().d)
}
