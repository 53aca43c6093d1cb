// SPDX-License-Identifier: Apache-2.0

// The transformed unknown `e^{t/tau}(f - F)` as the fixed point of the
// Duhamel map, compared with the Lawson stepper.

use bdb_core::experiment::{initial_datum, ExperimentConfig};
use bdb_core::solver::{evolve_transformed, picard_solve, Problem};

pub fn run_example() -> bdb_core::Result<()> {
    let mut cfg = ExperimentConfig::parse("grid.nx = 16\ngrid.np = 16\nsolver.dt = 5e-4\nperturbation.modes = 1:1e-2\n")?;
    let tau = cfg.model.tau;
    cfg.solver.t_end = tau;
    let problem = Problem::new(cfg.phase_grid()?, cfg.entropy()?, cfg.band()?, cfg.physical()?)?;
    let (f0, _) = initial_datum(&cfg, &problem)?;
    let g0 = f0.sub(problem.equilibrium());

    let (traj, report) = picard_solve(&problem, &g0, tau, 100, 50, 1e-13)?;
    println!("Picard: {} iterations, gaps {:?}", report.iterations, report.gaps);
    let g_picard = traj.transformed(&problem)?.pop().unwrap();

    let rec = evolve_transformed(&problem, &g0, &cfg.solver)?;
    let g_lawson = rec.final_state.sub(problem.equilibrium()).scale(1f64.exp());
    let xn = problem.op().x_norm();
    let gap = xn.norm(&g_picard.sub(&g_lawson)) / xn.norm(&g_lawson);
    println!("relative gap to the Lawson stepper at t = tau: {gap:.2e}");
    assert!(report.max_ratio < 1.0 && gap < 1e-5);
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
