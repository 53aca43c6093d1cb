// SPDX-License-Identifier: Apache-2.0

// Fermi-Dirac equilibrium on the lattice band and recovery of its
// multipliers from mass and energy.

use bdb_core::grid::PhaseGrid;
use bdb_core::model::{self, BandParams, BgkOptions, EntropyParams};

pub fn run_example() -> bdb_core::Result<()> {
    let bp = BandParams::new(0.5, 1)?;
    let ep = EntropyParams::new(-0.3, 1.2, 1.0)?;
    let grid = PhaseGrid::new(1, 8, 128, 1.0)?;
    let feq = grid.equilibrium(&ep, &bp);
    let eps = grid.band_energies(&bp);

    let m = model::bgk_multipliers(feq.row(0), &eps, ep.eta, &BgkOptions::default())?;
    println!(
        "recovered lambda = ({:.12}, {:.12}) in {} Newton steps",
        m.lambda0, m.lambda1, m.iterations
    );
    assert!((m.lambda0 - ep.lambda0).abs() < 1e-10);
    assert!((m.lambda1 - ep.lambda1).abs() < 1e-10);

    for u in [0.5, 1.0, 2.0] {
        println!("U = {u}: criticality {:.6e}", model::criticality_value(&ep, &bp, u, 256));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
