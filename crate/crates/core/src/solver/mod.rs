// SPDX-License-Identifier: Apache-2.0

//! Nonlinear time integration of
//!
//! ```text
//! d_t f + grad eps . grad_x f + U grad_x rho_f . grad_p f = (F - f) / tau
//! ```
//!
//! by Strang splitting, of the transformed unknown `g = e^{t/tau} (f - F)`,
//! and of the BGK variant, plus decay diagnostics.
//!
//! One Strang step of size `dt` is `R(dt/2) T(dt/2) N(dt) T(dt/2) R(dt/2)`:
//! `T` is exact transport (the phase `e^{-i s xi . grad eps(p)}` on every
//! spatial mode), `R` is exact relaxation `f <- F + e^{-s/tau} (f - F)` (or the
//! BGK collision step), and `N` integrates the field term with classical RK4.

mod fit;
mod threshold;
mod transformed;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gevrey::{self, GevreySchedule};
use crate::grid::{self, PhaseGrid, PhaseGridFunction, SpectralAxes, C64};
use crate::lingroup::{spatial_derivative, LinearizedOperator};
use crate::model::{self, BandParams, BgkOptions, EntropyParams, PhysicalParams};
use crate::multiindex;

pub use fit::{decay_fit, decay_fit_series, DecayFit};
pub use threshold::{relaxation_threshold, RelaxationThreshold};
pub use transformed::{evolve_transformed, picard_solve, picard_step, PdePicardReport, PicardTrajectory};

/// Runs stop with [`Error::BlowUp`] once `||f - F||_X` exceeds this multiple
/// of its initial value.
pub const BLOW_UP_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    StrangSplit,
    /// The transformed equation in Duhamel form: exact group, RK4 on the rest.
    DuhamelPicard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collision {
    Relaxation,
    Bgk,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub collision: Collision,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
    /// Record a sample every this many steps (and after the last one).
    pub sample_every: usize,
    /// Keep the full state every this many steps; `0` keeps none.
    pub snapshot_every: usize,
    pub schedule: GevreySchedule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 2.5e-4,
            t_end: 0.5,
            scheme: Scheme::StrangSplit,
            collision: Collision::Relaxation,
            picard_max_iter: 50,
            picard_tol: 1e-13,
            sample_every: 10,
            snapshot_every: 0,
            schedule: GevreySchedule::default(),
        }
    }
}

impl SolverConfig {
    /// `dt max|grad eps| 2 pi Nx / Lx`, the phase advanced per step by the
    /// fastest resolved transport mode.
    pub fn cfl_number(&self, grid: &PhaseGrid, bp: &BandParams) -> f64 {
        let max_grad = 2.0 * std::f64::consts::PI * 2.0 * bp.epsilon0 * (grid.d as f64).sqrt();
        self.dt * max_grad * 2.0 * std::f64::consts::PI * grid.nx as f64 / grid.lx
    }

    /// Checks `dt > 0`, `t_end >= 0`, `dt <= tau / 10` and the CFL bound.
    pub fn validate(&self, grid: &PhaseGrid, bp: &BandParams, phys: &PhysicalParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("T_end must be nonnegative, got {}", self.t_end)));
        }
        if self.dt > phys.tau / 10.0 {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds tau / 10 = {}",
                self.dt,
                phys.tau / 10.0
            )));
        }
        let cfl = self.cfl_number(grid, bp);
        if cfl > 1.0 {
            return Err(Error::InvalidParameter(format!("CFL number {cfl} exceeds 1")));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// One line of the trajectory stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    /// `||f - F||_X`.
    pub norm_x: f64,
    /// Truncated analytic norm of `f - F` at radius `nu`.
    pub norm_gevrey: f64,
    pub nu: f64,
    /// `int int f dx dp`.
    pub mass: f64,
    /// `int int eps f dx dp`.
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensitySnapshot {
    pub t: f64,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
    pub densities: Vec<DensitySnapshot>,
    /// Full states kept every `snapshot_every` steps.
    pub snapshots: Vec<(f64, PhaseGridFunction)>,
    pub final_time: f64,
    pub final_state: PhaseGridFunction,
    pub steps: usize,
    /// Largest per-step `max_x |int (f' - f) dp|` and `max_x |int eps (f' - f) dp|`
    /// of the collision substeps (BGK runs only).
    pub collision_residual: [f64; 2],
    pub fit: Option<DecayFit>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_x).collect()
    }

    /// One JSON object per sample.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Operator, parameters and the momentum tables shared by every integrator.
#[derive(Debug)]
pub struct Problem {
    op: LinearizedOperator,
    phys: PhysicalParams,
    feq: PhaseGridFunction,
    /// `xi . grad eps(p)` for every grid point, derivative wavevector in `xi`.
    transport_symbol: Vec<f64>,
    feq_grad: Vec<f64>,
    eps_nodes: Vec<f64>,
    nonlinear: bool,
}

impl Problem {
    pub fn new(grid: PhaseGrid, ep: EntropyParams, bp: BandParams, phys: PhysicalParams) -> Result<Self> {
        let op = LinearizedOperator::new(grid, ep, bp, phys.u)?;
        let d = grid.d;
        let np = grid.momentum_len();
        let eps_grad = grid.band_gradients(&bp);
        let mut transport_symbol = vec![0.0; grid.len()];
        for ix in 0..grid.spatial_len() {
            let xi = grid.derivative_wavevector(ix);
            for j in 0..np {
                transport_symbol[ix * np + j] = (0..d).map(|i| xi[i] * eps_grad[j * d + i]).sum();
            }
        }
        Ok(Self {
            feq: grid.equilibrium(&ep, &bp),
            feq_grad: grid.equilibrium_gradients(&ep, &bp),
            eps_nodes: grid.band_energies(&bp),
            transport_symbol,
            op,
            phys,
            nonlinear: true,
        })
    }

    /// The same problem with the quadratic field term dropped.
    pub fn linearized(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn is_nonlinear(&self) -> bool {
        self.nonlinear
    }

    pub fn op(&self) -> &LinearizedOperator {
        &self.op
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.op.grid()
    }

    pub fn physical(&self) -> &PhysicalParams {
        &self.phys
    }

    pub fn equilibrium(&self) -> &PhaseGridFunction {
        &self.feq
    }

    fn check(&self, f: &PhaseGridFunction) -> Result<()> {
        if f.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        if !f.is_finite() {
            return Err(Error::NanDetected { t: 0.0 });
        }
        Ok(())
    }

    /// Exact free transport over time `s`.
    pub fn transport(&self, f: &PhaseGridFunction, s: f64) -> PhaseGridFunction {
        let mut spec = grid::to_spectral(f, SpectralAxes::Spatial);
        spec.coeffs_mut()
            .par_iter_mut()
            .zip(self.transport_symbol.par_iter())
            .for_each(|(c, &a)| *c *= C64::from_polar(1.0, -s * a));
        grid::from_spectral(&spec)
    }

    /// Exact relaxation over time `s`.
    pub fn relax(&self, f: &PhaseGridFunction, s: f64) -> PhaseGridFunction {
        let decay = (-s * self.phys.relaxation_rate()).exp();
        if decay == 1.0 {
            return f.clone();
        }
        self.feq.lincomb(1.0 - decay, f, decay)
    }

    /// `sum_i d_{x_i} rho_h d_{p_i} h` with the 2/3 rule in `x`.
    pub fn quadratic_term(&self, h: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        let grid = *self.grid();
        let d = grid.d;
        let mut spec = grid::to_spectral(h, SpectralAxes::Spatial);
        grid::dealias_spatial(&mut spec);
        let hd = grid::from_spectral(&spec);
        let rho = grid::density(&hd);
        let np = grid.momentum_len();
        let zero = vec![0; d];
        let mut out = vec![0.0; grid.len()];
        for i in 0..d {
            let drho = spatial_derivative(&grid, &rho.values, i);
            let dph = grid::spectral_derivative(&hd, &zero, &multiindex::unit(d, i))?;
            for (k, o) in out.iter_mut().enumerate() {
                *o += drho[k / np] * dph.values()[k];
            }
        }
        let mut q = grid::to_spectral(&PhaseGridFunction::new(grid, out)?, SpectralAxes::Spatial);
        grid::dealias_spatial(&mut q);
        Ok(grid::from_spectral(&q))
    }

    /// `sum_i d_{x_i} rho_h d_{p_i} F` with the analytic `grad F`.
    fn linear_field_term(&self, h: &PhaseGridFunction) -> PhaseGridFunction {
        let grid = *self.grid();
        let d = grid.d;
        let np = grid.momentum_len();
        let rho = grid::density(h);
        let mut out = vec![0.0; grid.len()];
        for i in 0..d {
            let drho = spatial_derivative(&grid, &rho.values, i);
            for (k, o) in out.iter_mut().enumerate() {
                *o += drho[k / np] * self.feq_grad[(k % np) * d + i];
            }
        }
        PhaseGridFunction::new(grid, out).expect("grid-sized buffer")
    }

    /// `d_t h = -U grad_x rho_h . (grad F + grad_p h)` for `h = f - F`.
    fn field_rhs(&self, h: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        let lin = self.linear_field_term(h);
        if !self.nonlinear {
            return Ok(lin.scale(-self.phys.u));
        }
        let quad = self.quadratic_term(h)?;
        Ok(lin.lincomb(-self.phys.u, &quad, -self.phys.u))
    }

    /// Field substep by classical RK4.
    pub fn field_step(&self, f: &PhaseGridFunction, dt: f64) -> Result<PhaseGridFunction> {
        if self.phys.u == 0.0 {
            return Ok(f.clone());
        }
        let h = f.sub(&self.feq);
        let k1 = self.field_rhs(&h)?;
        let k2 = self.field_rhs(&h.lincomb(1.0, &k1, 0.5 * dt))?;
        let k3 = self.field_rhs(&h.lincomb(1.0, &k2, 0.5 * dt))?;
        let k4 = self.field_rhs(&h.lincomb(1.0, &k3, dt))?;
        let incr = k1.lincomb(1.0, &k4, 1.0).lincomb(1.0, &k2.lincomb(2.0, &k3, 2.0), 1.0);
        Ok(f.lincomb(1.0, &incr, dt / 6.0))
    }

    /// BGK collision over time `s`, pointwise in `x`:
    /// `f <- F_f + e^{-kappa s} (f - F_f)` with `kappa = rho (1 - eta rho) / tau`
    /// and `F_f` the equilibrium with the mass and energy of `f`.
    /// Returns the new state and the largest mass and energy changes.
    pub fn bgk_collision(&self, f: &PhaseGridFunction, s: f64) -> Result<(PhaseGridFunction, [f64; 2])> {
        let grid = *self.grid();
        let np = grid.momentum_len();
        let eta = self.op.entropy().eta;
        let rate = self.phys.relaxation_rate();
        let opts = BgkOptions::default();
        let eps = &self.eps_nodes;
        let rows: Vec<Result<(Vec<f64>, [f64; 2])>> = f
            .values()
            .par_chunks(np)
            .map(|row| {
                let rho = row.iter().sum::<f64>() / np as f64;
                let kappa = rho * (1.0 - eta * rho) * rate;
                if kappa == 0.0 || s == 0.0 {
                    return Ok((row.to_vec(), [0.0, 0.0]));
                }
                let m = model::bgk_multipliers(row, eps, eta, &opts)?;
                let decay = (-kappa * s).exp();
                let new: Vec<f64> = row
                    .iter()
                    .zip(eps)
                    .map(|(&v, &e)| {
                        let feq = model::occupation(m.lambda0 + m.lambda1 * e, eta);
                        feq + decay * (v - feq)
                    })
                    .collect();
                let dm = new.iter().zip(row).map(|(a, b)| a - b).sum::<f64>() / np as f64;
                let de = new.iter().zip(row).zip(eps).map(|((a, b), e)| (a - b) * e).sum::<f64>() / np as f64;
                Ok((new, [dm.abs(), de.abs()]))
            })
            .collect();
        let mut values = Vec::with_capacity(grid.len());
        let mut res = [0.0f64; 2];
        for r in rows {
            let (row, dr) = r?;
            values.extend(row);
            res[0] = res[0].max(dr[0]);
            res[1] = res[1].max(dr[1]);
        }
        Ok((PhaseGridFunction::new(grid, values)?, res))
    }

    fn collide(&self, f: &PhaseGridFunction, s: f64, c: Collision, res: &mut [f64; 2]) -> Result<PhaseGridFunction> {
        match c {
            Collision::Relaxation => Ok(self.relax(f, s)),
            Collision::Bgk => {
                let (g, r) = self.bgk_collision(f, s)?;
                res[0] = res[0].max(r[0]);
                res[1] = res[1].max(r[1]);
                Ok(g)
            }
        }
    }

    /// One Strang step.
    pub fn strang_step(&self, f: &PhaseGridFunction, dt: f64, c: Collision, res: &mut [f64; 2]) -> Result<PhaseGridFunction> {
        let f = self.collide(f, 0.5 * dt, c, res)?;
        let f = self.transport(&f, 0.5 * dt);
        let f = self.field_step(&f, dt)?;
        let f = self.transport(&f, 0.5 * dt);
        self.collide(&f, 0.5 * dt, c, res)
    }

    /// Sample of the deviation `f - F` at time `t`.
    pub fn sample(&self, f: &PhaseGridFunction, t: f64, schedule: &GevreySchedule) -> Result<TrajectorySample> {
        let grid = self.grid();
        let h = f.sub(&self.feq);
        let xnorm = self.op.x_norm();
        let nu = schedule.nu(t);
        let norm_gevrey = gevrey::analytic_seminorm(&h, nu, schedule.n_max, xnorm)?.value;
        let dx = grid.spatial_volume() / grid.spatial_len() as f64;
        let mass = grid::density(f).values.iter().sum::<f64>() * dx;
        let energy = grid::energy_moment(f, self.op.band()).values.iter().sum::<f64>() * dx;
        Ok(TrajectorySample {
            t,
            norm_x: xnorm.norm(&h),
            norm_gevrey,
            nu,
            mass,
            energy,
        })
    }
}

/// Collects samples and guards against blow-up.
pub(crate) struct Recorder<'a> {
    problem: &'a Problem,
    config: &'a SolverConfig,
    record: Vec<TrajectorySample>,
    densities: Vec<DensitySnapshot>,
    snapshots: Vec<(f64, PhaseGridFunction)>,
    limit: f64,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(problem: &'a Problem, config: &'a SolverConfig, f0: &PhaseGridFunction, t0: f64) -> Result<Self> {
        let mut r = Self {
            problem,
            config,
            record: Vec::new(),
            densities: Vec::new(),
            snapshots: Vec::new(),
            limit: 0.0,
        };
        r.push(f0, t0)?;
        r.limit = BLOW_UP_FACTOR * r.record[0].norm_x.max(1e-12);
        if config.snapshot_every > 0 {
            r.snapshots.push((t0, f0.clone()));
        }
        Ok(r)
    }

    fn push(&mut self, f: &PhaseGridFunction, t: f64) -> Result<()> {
        let s = self.problem.sample(f, t, &self.config.schedule)?;
        self.densities.push(DensitySnapshot {
            t,
            rho: grid::density(f).values,
        });
        self.record.push(s);
        Ok(())
    }

    /// Called after step `k` (1-based) reaching time `t`.
    pub(crate) fn after_step(&mut self, f: &PhaseGridFunction, t: f64, k: usize, last: bool) -> Result<()> {
        if !f.is_finite() {
            return Err(Error::NanDetected { t });
        }
        if k % self.config.sample_every == 0 || last {
            self.push(f, t)?;
            let n = self.record.last().unwrap().norm_x;
            if n > self.limit {
                return Err(Error::BlowUp {
                    t,
                    norm: n,
                    limit: self.limit,
                });
            }
        }
        if self.config.snapshot_every > 0 && k % self.config.snapshot_every == 0 {
            self.snapshots.push((t, f.clone()));
        }
        Ok(())
    }

    pub(crate) fn finish(self, f: PhaseGridFunction, t: f64, steps: usize, collision_residual: [f64; 2]) -> TrajectoryRecord {
        let times: Vec<f64> = self.record.iter().map(|s| s.t).collect();
        let norms: Vec<f64> = self.record.iter().map(|s| s.norm_x).collect();
        let fit = decay_fit_series(&times, &norms).ok();
        TrajectoryRecord {
            samples: self.record,
            densities: self.densities,
            snapshots: self.snapshots,
            final_time: t,
            final_state: f,
            steps,
            collision_residual,
            fit,
        }
    }
}

/// Strang-split evolution from `f0` at `t = 0` to `config.t_end`.
pub fn evolve(problem: &Problem, f0: &PhaseGridFunction, config: &SolverConfig) -> Result<TrajectoryRecord> {
    evolve_from(problem, f0, 0.0, config)
}

/// As [`evolve`], starting at time `t0` (resuming from a snapshot).
pub fn evolve_from(problem: &Problem, f0: &PhaseGridFunction, t0: f64, config: &SolverConfig) -> Result<TrajectoryRecord> {
    problem.check(f0)?;
    config.validate(problem.grid(), problem.op.band(), &problem.phys)?;
    if config.collision == Collision::Bgk {
        let eta = problem.op.entropy().eta;
        let np = problem.grid().momentum_len();
        for row in f0.values().chunks(np) {
            model::bgk_multipliers(row, &problem.eps_nodes, eta, &BgkOptions::default())?;
        }
    }
    if config.scheme == Scheme::DuhamelPicard {
        if config.collision == Collision::Bgk {
            return Err(Error::InvalidParameter("the transformed scheme supports relaxation only".into()));
        }
        let g0 = f0.sub(&problem.feq).scale((t0 * problem.phys.relaxation_rate()).exp());
        return transformed::evolve_transformed_from(problem, &g0, t0, config);
    }
    let span = config.t_end - t0;
    let steps = if span > 0.0 { (span / config.dt - 1e-9).ceil() as usize } else { 0 };
    let dt = if steps > 0 { span / steps as f64 } else { config.dt };
    let mut rec = Recorder::new(problem, config, f0, t0)?;
    let mut f = f0.clone();
    let mut res = [0.0; 2];
    for k in 1..=steps {
        f = problem.strang_step(&f, dt, config.collision, &mut res)?;
        rec.after_step(&f, t0 + k as f64 * dt, k, k == steps)?;
    }
    let t = if steps > 0 { t0 + steps as f64 * dt } else { t0 };
    Ok(rec.finish(f, t, steps, res))
}

/// Strang-split evolution with the BGK collision step.
pub fn evolve_bgk(problem: &Problem, f0: &PhaseGridFunction, config: &SolverConfig) -> Result<TrajectoryRecord> {
    let cfg = SolverConfig {
        collision: Collision::Bgk,
        scheme: Scheme::StrangSplit,
        ..*config
    };
    evolve(problem, f0, &cfg)
}

#[cfg(test)]
mod tests;
