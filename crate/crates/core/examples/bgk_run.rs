// SPDX-License-Identifier: Apache-2.0

// Strang stepping with the BGK collision, which relaxes each cell toward the
// Fermi-Dirac state of the same mass and energy.

use bdb_core::experiment::{initial_datum, ExperimentConfig};
use bdb_core::solver::{evolve_bgk, Problem};

pub fn run_example() -> bdb_core::Result<()> {
    let cfg = ExperimentConfig::parse(
        "grid.nx = 16\ngrid.np = 32\nsolver.dt = 1e-3\nsolver.t_end = 0.1\nperturbation.modes = 1:0.05\n",
    )?;
    let problem = Problem::new(cfg.phase_grid()?, cfg.entropy()?, cfg.band()?, cfg.physical()?)?;
    let (f0, _) = initial_datum(&cfg, &problem)?;
    let rec = evolve_bgk(&problem, &f0, &cfg.solver)?;
    let (first, last) = (&rec.samples[0], rec.samples.last().unwrap());
    println!("mass   {:.15} -> {:.15}", first.mass, last.mass);
    println!("energy {:.15} -> {:.15}", first.energy, last.energy);
    println!(
        "worst per-step moment residuals: {:.2e} {:.2e}",
        rec.collision_residual[0], rec.collision_residual[1]
    );
    assert!(rec.collision_residual[0] < 1e-9 * cfg.solver.dt);
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
