// SPDX-License-Identifier: Apache-2.0

// Small-data run toward equilibrium with the Strang stepper, the fitted
// decay rate and the relaxation threshold from measured constants.

use bdb_core::experiment::{initial_datum, ExperimentConfig};
use bdb_core::solver::{evolve, relaxation_threshold, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> bdb_core::Result<()> {
    let cfg = ExperimentConfig::parse("grid.nx = 32\ngrid.np = 32\nsolver.dt = 5e-4\nsolver.t_end = 0.25\n")?;
    let problem = Problem::new(cfg.phase_grid()?, cfg.entropy()?, cfg.band()?, cfg.physical()?)?;
    let (f0, _) = initial_datum(&cfg, &problem)?;
    let rec = evolve(&problem, &f0, &cfg.solver)?;
    let fit = rec.fit.expect("decaying run");
    println!("fitted rate {:.6} (1/tau = {})", fit.rate, 1.0 / cfg.model.tau);
    for s in rec.samples.iter().step_by(10) {
        println!("t = {:.3}  ||f - F||_X = {:.4e}  mass = {:.12}", s.t, s.norm_x, s.mass);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let th = relaxation_threshold(problem.op(), cfg.solver.schedule.nu0, 4, 5, &mut rng)?;
    println!(
        "C = {:.3}, r = {:.3}, tau0 = {:.3e}, guaranteed rate {:.3}",
        th.c,
        th.r,
        th.tau0,
        th.guaranteed_rate(cfg.model.tau)
    );
    assert!(fit.rate >= th.guaranteed_rate(cfg.model.tau));
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
