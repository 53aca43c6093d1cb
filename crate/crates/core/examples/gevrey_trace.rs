// SPDX-License-Identifier: Apache-2.0

// Truncated analytic norms of a perturbation and their trace along a run.

use bdb_core::experiment::{norm_trace, ExperimentConfig};
use bdb_core::gevrey::{analytic_seminorm, GevreySchedule};
use bdb_core::grid::{PhaseGrid, PhaseGridFunction};
use bdb_core::lingroup::XNorm;
use bdb_core::model::{BandParams, EntropyParams};

pub fn run_example() -> bdb_core::Result<()> {
    let g = PhaseGrid::new(1, 16, 16, 1.0)?;
    let xn = XNorm::new(g, &EntropyParams::new(0.0, 1.0, 1.0)?, &BandParams::new(0.5, 1)?, 1.0, 1)?;
    let f = PhaseGridFunction::from_fn(g, |x, p| 1e-3 * (std::f64::consts::TAU * (x[0] + p[0])).cos());
    for nu in [0.0, 0.05, 0.1] {
        let v = analytic_seminorm(&f, nu, 6, &xn)?;
        println!("nu = {nu:<5} norm {:.6e}  outer shell {:.2e}", v.value, v.shell_tail);
    }

    let mut cfg = ExperimentConfig::parse("grid.nx = 16\ngrid.np = 16\nsolver.dt = 1e-3\ngevrey.n_max = 3\n")?;
    cfg.solver.schedule = GevreySchedule::new(0.05, 1.0, 0.0, 3)?;
    for r in norm_trace(&cfg, 5, 0.1)? {
        println!("t = {:.3}  nu = {:.4}  Y = {:.6e}", r.t, r.nu, r.value);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
