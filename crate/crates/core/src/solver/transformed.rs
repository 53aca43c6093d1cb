// SPDX-License-Identifier: Apache-2.0

//! The transformed unknown `g = e^{t/tau} (f - F)`, which solves
//!
//! ```text
//! d_t g + L g = Q_t(g),   Q_t(g) = -U e^{-t/tau} grad_x rho_g . grad_p g
//! ```
//!
//! integrated by Lawson RK4 around the exact group, and the Picard map
//! `Phi(u)(t) = u(0) + int_0^t e^{sL} Q_s(e^{-sL} u(s)) ds` on `u = e^{tL} g`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Problem, Recorder, SolverConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::grid::PhaseGridFunction;

impl Problem {
    /// `Q_t(g)`.
    pub fn transformed_nonlinearity(&self, t: f64, g: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        if !self.nonlinear {
            return Ok(PhaseGridFunction::zeros(*self.grid()));
        }
        let c = -self.phys.u * (-t * self.phys.relaxation_rate()).exp();
        Ok(self.quadratic_term(g)?.scale(c))
    }

    /// `e^{-sL} g`, the forward linear evolution.
    fn propagate(&self, s: f64, g: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        self.op.group_action(-s, g)
    }

    /// One Lawson RK4 step of the transformed equation from time `t`.
    pub fn lawson_step(&self, t: f64, g: &PhaseGridFunction, dt: f64) -> Result<PhaseGridFunction> {
        if self.phys.u == 0.0 || !self.nonlinear {
            return self.propagate(dt, g);
        }
        let h = 0.5 * dt;
        let eh_g = self.propagate(h, g)?;
        let k1 = self.transformed_nonlinearity(t, g)?;
        let eh_k1 = self.propagate(h, &k1)?;
        let k2 = self.transformed_nonlinearity(t + h, &eh_g.lincomb(1.0, &eh_k1, h))?;
        let k3 = self.transformed_nonlinearity(t + h, &eh_g.lincomb(1.0, &k2, h))?;
        let eh_k3 = self.propagate(h, &k3)?;
        let k4 = self.transformed_nonlinearity(t + dt, &self.propagate(h, &eh_g)?.lincomb(1.0, &eh_k3, dt))?;
        // E(dt) g + dt/6 [E(dt) k1 + 2 E(dt/2) (k2 + k3) + k4]
        let inner = self.propagate(h, &eh_g.lincomb(1.0, &eh_k1, dt / 6.0))?;
        let mid = self.propagate(h, &k2.lincomb(1.0, &k3, 1.0))?;
        Ok(inner.lincomb(1.0, &mid, dt / 3.0).lincomb(1.0, &k4, dt / 6.0))
    }

    fn untransform(&self, t: f64, g: &PhaseGridFunction) -> PhaseGridFunction {
        let s = (-t * self.phys.relaxation_rate()).exp();
        self.feq.lincomb(1.0, g, s)
    }
}

/// Evolve the transformed unknown from `g0` at `t = 0`; samples and the final
/// state are reported for `f = F + e^{-t/tau} g`.
pub fn evolve_transformed(problem: &Problem, g0: &PhaseGridFunction, config: &SolverConfig) -> Result<TrajectoryRecord> {
    problem.check(g0)?;
    config.validate(problem.grid(), problem.op.band(), &problem.phys)?;
    evolve_transformed_from(problem, g0, 0.0, config)
}

pub(super) fn evolve_transformed_from(
    problem: &Problem,
    g0: &PhaseGridFunction,
    t0: f64,
    config: &SolverConfig,
) -> Result<TrajectoryRecord> {
    let span = config.t_end - t0;
    let steps = if span > 0.0 { (span / config.dt - 1e-9).ceil() as usize } else { 0 };
    let dt = if steps > 0 { span / steps as f64 } else { config.dt };
    let mut rec = Recorder::new(problem, config, &problem.untransform(t0, g0), t0)?;
    let mut g = g0.clone();
    for k in 1..=steps {
        let t = t0 + (k - 1) as f64 * dt;
        g = problem.lawson_step(t, &g, dt)?;
        rec.after_step(&problem.untransform(t + dt, &g), t + dt, k, k == steps)?;
    }
    let t = if steps > 0 { t0 + steps as f64 * dt } else { t0 };
    Ok(rec.finish(problem.untransform(t, &g), t, steps, [0.0, 0.0]))
}

/// Samples `u(t_k)` of the conjugated unknown `u = e^{tL} g`.
#[derive(Clone, Debug)]
pub struct PicardTrajectory {
    pub times: Vec<f64>,
    pub u: Vec<PhaseGridFunction>,
}

impl PicardTrajectory {
    /// `g(t_k) = e^{-t_k L} u(t_k)`.
    pub fn transformed(&self, problem: &Problem) -> Result<Vec<PhaseGridFunction>> {
        self.times
            .par_iter()
            .zip(self.u.par_iter())
            .map(|(&t, u)| problem.op.group_action(-t, u))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdePicardReport {
    pub iterations: usize,
    /// `sup_k ||u^{j+1}(t_k) - u^j(t_k)||_X` per iteration.
    pub gaps: Vec<f64>,
    /// Ratios of successive gaps above round-off.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// One application of `Phi` on the samples `u(t_k)`, trapezoid in time.
pub fn picard_step(problem: &Problem, times: &[f64], u: &[PhaseGridFunction]) -> Result<Vec<PhaseGridFunction>> {
    if times.len() != u.len() || times.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: times.len(),
            got: u.len(),
        });
    }
    let rhs: Vec<PhaseGridFunction> = times
        .par_iter()
        .zip(u.par_iter())
        .map(|(&t, uk)| {
            let g = problem.op.group_action(-t, uk)?;
            problem.op.group_action(t, &problem.transformed_nonlinearity(t, &g)?)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(u.len());
    let mut acc = u[0].clone();
    out.push(acc.clone());
    for k in 1..u.len() {
        let h = times[k] - times[k - 1];
        acc = acc.lincomb(1.0, &rhs[k - 1].lincomb(1.0, &rhs[k], 1.0), 0.5 * h);
        out.push(acc.clone());
    }
    Ok(out)
}

/// Iterate `Phi` from `u ≡ g0` on `samples + 1` equispaced times in `[0, t_end]`
/// until the sup `X` distance of successive iterates drops below
/// `tol sup_k ||u(t_k)||_X`.
pub fn picard_solve(
    problem: &Problem,
    g0: &PhaseGridFunction,
    t_end: f64,
    samples: usize,
    max_iter: usize,
    tol: f64,
) -> Result<(PicardTrajectory, PdePicardReport)> {
    problem.check(g0)?;
    if !(t_end > 0.0) || samples == 0 {
        return Err(Error::InvalidParameter("Picard needs T > 0 and at least one interval".into()));
    }
    let times: Vec<f64> = (0..=samples).map(|k| t_end * k as f64 / samples as f64).collect();
    let xnorm = problem.op.x_norm();
    let initial = xnorm.norm(g0);
    let mut u = vec![g0.clone(); times.len()];
    let mut gaps = Vec::new();
    let mut ratios = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next = picard_step(problem, &times, &u)?;
        let gap = next
            .par_iter()
            .zip(u.par_iter())
            .map(|(a, b)| xnorm.norm(&a.sub(b)))
            .reduce(|| 0.0, f64::max);
        let size = next.par_iter().map(|a| xnorm.norm(a)).reduce(|| 0.0, f64::max);
        if let Some(&p) = gaps.last() {
            if p > 1e-11 * initial {
                ratios.push(gap / p);
            }
        }
        gaps.push(gap);
        u = next;
        if gap <= tol * size.max(f64::MIN_POSITIVE) {
            let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
            return Ok((
                PicardTrajectory { times, u },
                PdePicardReport {
                    iterations,
                    gaps,
                    ratios,
                    max_ratio,
                },
            ));
        }
    }
    Err(Error::ContractionFailure {
        factor: ratios.iter().copied().fold(0.0, f64::max),
        allowed: 1.0,
    })
}
