// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{create, ExperimentConfig, Outcome};
use crate::error::{Error, Result};
use crate::grid::snapshot::{self, Snapshot, SnapshotParams};
use crate::grid::PhaseGridFunction;
use crate::solver::{
    evolve_from, picard_solve, relaxation_threshold, DecayFit, PdePicardReport, Problem, RelaxationThreshold, Scheme,
    TrajectoryRecord,
};

/// Below this sup `X` norm of `f - F` a run counts as stationary.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Allowed growth of `e^{rate t} ||f(t) - F||_X` over its initial value.
pub const BOUND_FACTOR: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub t0: f64,
    pub final_time: f64,
    pub steps: usize,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub max_norm: f64,
    pub stationary: bool,
    pub fit: Option<DecayFit>,
    pub threshold: Option<RelaxationThreshold>,
    pub threshold_error: Option<String>,
    /// `1/tau - 1/tau0`.
    pub guaranteed_rate: Option<f64>,
    /// `max_t e^{rate (t - t0)} ||f(t) - F||_X / ||f(t0) - F||_X`.
    pub bound_ratio: Option<f64>,
    /// The guaranteed rate is not positive, so no decay is asserted.
    pub exploratory: bool,
    pub collision_residual: [f64; 2],
    pub picard: Option<PdePicardReport>,
    /// Relative `X` distance between the Picard fixed point and the time
    /// stepper at the Picard horizon.
    pub picard_vs_stepper: Option<f64>,
}

pub(crate) fn problem(config: &ExperimentConfig) -> Result<Problem> {
    Problem::new(config.phase_grid()?, config.entropy()?, config.band()?, config.physical()?)
}

fn snapshot_params(config: &ExperimentConfig) -> SnapshotParams {
    let m = &config.model;
    SnapshotParams {
        lambda0: m.lambda0,
        lambda1: m.lambda1,
        eta: m.eta,
        u: m.u,
        tau: m.tau,
        epsilon0: m.epsilon0,
    }
}

/// `f0` and its start time: the snapshot when configured, otherwise
/// `F + sum_k a_k cos(2 pi k.x / Lx) W(p) / max W` with `W = F (1 - eta F)`.
pub fn initial_datum(config: &ExperimentConfig, problem: &Problem) -> Result<(PhaseGridFunction, f64)> {
    let grid = *problem.grid();
    if let Some(path) = &config.perturbation.snapshot {
        let snap = snapshot::read_file(path)?;
        if snap.field.grid() != &grid {
            return Err(Error::GridMismatch);
        }
        if snap.params != snapshot_params(config) {
            return Err(Error::Config(format!(
                "snapshot {} was written with different model parameters",
                path.display()
            )));
        }
        return Ok((snap.field, snap.time));
    }
    let feq = problem.equilibrium();
    let eta = config.model.eta;
    let np = grid.momentum_len();
    let w: Vec<f64> = feq.row(0).iter().map(|&f| f * (1.0 - eta * f)).collect();
    let wmax = w.iter().copied().fold(0.0, f64::max);
    let mut f = feq.clone();
    let values = f.values_mut();
    for ix in 0..grid.spatial_len() {
        let x = grid.spatial_point(ix);
        let s: f64 = config
            .perturbation
            .modes
            .iter()
            .map(|(k, a)| {
                let phase: f64 = k.iter().zip(&x).map(|(&ki, &xi)| ki as f64 * xi).sum();
                a * (2.0 * PI * phase / grid.lx).cos()
            })
            .sum();
        for j in 0..np {
            values[ix * np + j] += s * w[j] / wmax;
        }
    }
    Ok((f, 0.0))
}

fn write_snapshot(out: &Path, name: &str, outputs: &mut Vec<String>, snap: &Snapshot) -> Result<()> {
    snapshot::write_file(&out.join(name), snap)?;
    outputs.push(name.to_string());
    Ok(())
}

fn write_density<W: Write>(mut w: W, record: &TrajectoryRecord) -> Result<()> {
    let n = record.densities.first().map_or(0, |d| d.rho.len());
    let header: Vec<String> = (0..n).map(|i| format!("rho_{i}")).collect();
    writeln!(w, "t,{}", header.join(","))?;
    for d in &record.densities {
        let row: Vec<String> = d.rho.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", d.t, row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Picard fixed point of the transformed equation on `[0, horizon tau]`,
/// compared with the time stepper at the horizon.
fn picard_check(
    config: &ExperimentConfig,
    problem: &Problem,
    f0: &PhaseGridFunction,
) -> Result<(PdePicardReport, f64)> {
    let horizon = config.picard.horizon * config.model.tau;
    let g0 = f0.sub(problem.equilibrium());
    let s = &config.solver;
    let (traj, report) = picard_solve(problem, &g0, horizon, config.picard.samples, s.picard_max_iter, s.picard_tol)?;
    let g_picard = traj.transformed(problem)?.pop().expect("at least one sample");
    let mut cfg = *s;
    cfg.t_end = horizon;
    cfg.snapshot_every = 0;
    let f = evolve_from(problem, f0, 0.0, &cfg)?.final_state;
    let g_step = f.sub(problem.equilibrium()).scale((horizon / config.model.tau).exp());
    let xn = problem.op().x_norm();
    let gap = xn.norm(&g_picard.sub(&g_step)) / xn.norm(&g_step).max(f64::MIN_POSITIVE);
    Ok((report, gap))
}

pub(crate) fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let problem = problem(config)?;
    let (f0, t0) = initial_datum(config, &problem)?;
    let record = evolve_from(&problem, &f0, t0, &config.solver)?;
    let mut outputs = Vec::new();

    let mut w = create(out, "trajectory.ndjson", &mut outputs)?;
    record.write_ndjson(&mut w)?;
    w.flush()?;
    write_density(create(out, "density.csv", &mut outputs)?, &record)?;
    let params = snapshot_params(config);
    for (k, (t, f)) in record.snapshots.iter().enumerate() {
        let snap = Snapshot {
            time: *t,
            params,
            field: f.clone(),
        };
        write_snapshot(out, &format!("snapshot_{k:04}.bin"), &mut outputs, &snap)?;
    }
    let last = Snapshot {
        time: record.final_time,
        params,
        field: record.final_state.clone(),
    };
    write_snapshot(out, "final.bin", &mut outputs, &last)?;

    let norms = record.norms();
    let initial_norm = norms[0];
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let stationary = max_norm < STATIONARY_TOL;

    let mut failures = Vec::new();
    let (mut threshold, mut threshold_error) = (None, None);
    if config.threshold.enabled && !stationary {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let t = &config.threshold;
        match relaxation_threshold(problem.op(), config.solver.schedule.nu0, t.samples, t.depth, &mut rng) {
            Ok(th) => threshold = Some(th),
            Err(e) => threshold_error = Some(e.to_string()),
        }
    }
    let guaranteed_rate = threshold.map(|th| th.guaranteed_rate(config.model.tau));
    let bound_ratio = guaranteed_rate.map(|rate| {
        record
            .samples
            .iter()
            .map(|s| (rate * (s.t - t0)).exp() * s.norm_x / initial_norm)
            .fold(0.0, f64::max)
    });
    if let (Some(rate), Some(fit)) = (guaranteed_rate, &record.fit) {
        if fit.rate < rate {
            failures.push(format!("decay rate {} below the guaranteed rate {}", fit.rate, rate));
        }
    }
    if let Some(r) = bound_ratio {
        if r > BOUND_FACTOR {
            failures.push(format!("weighted norm grew by {r}, more than {BOUND_FACTOR}"));
        }
    }

    let (mut picard, mut picard_vs_stepper) = (None, None);
    if config.solver.scheme == Scheme::DuhamelPicard && t0 == 0.0 && !stationary {
        let (report, gap) = picard_check(config, &problem, &f0)?;
        picard = Some(report);
        picard_vs_stepper = Some(gap);
    }

    let summary = SimulationSummary {
        t0,
        final_time: record.final_time,
        steps: record.steps,
        initial_norm,
        final_norm: *norms.last().unwrap_or(&initial_norm),
        max_norm,
        stationary,
        fit: record.fit,
        threshold,
        threshold_error,
        guaranteed_rate,
        bound_ratio,
        exploratory: guaranteed_rate.is_none_or(|r| r <= 0.0),
        collision_residual: record.collision_residual,
        picard,
        picard_vs_stepper,
    };
    let mut w = create(out, "summary.json", &mut outputs)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(Outcome::checked(outputs, failures))
}
