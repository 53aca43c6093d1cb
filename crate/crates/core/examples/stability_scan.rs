// SPDX-License-Identifier: Apache-2.0

// Criticality and Penrose margin over a small parameter sweep.

use bdb_core::experiment::{stability_sweep, ExperimentConfig};

pub fn run_example() -> bdb_core::Result<()> {
    let cfg = ExperimentConfig::parse(
        "stability.lambda0 = 0\nstability.lambda1 = 0, 1, 3\nstability.u = 0.5, 1\nstability.penrose_nodes = 256\n",
    )?;
    println!("lambda0 lambda1    U   criticality   penrose");
    for r in stability_sweep(&cfg)? {
        println!("{:7} {:7} {:4} {:13.6e} {:9.6}", r.lambda0, r.lambda1, r.u, r.criticality, r.penrose_margin);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
