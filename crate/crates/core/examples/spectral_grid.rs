// SPDX-License-Identifier: Apache-2.0

// Spectral derivatives on the phase-space torus and the binary snapshot
// round trip.

use std::f64::consts::PI;

use bdb_core::grid::snapshot::{self, Snapshot, SnapshotParams};
use bdb_core::grid::{self, PhaseGrid, PhaseGridFunction};

pub fn run_example() -> bdb_core::Result<()> {
    let g = PhaseGrid::new(1, 32, 32, 1.0)?;
    let f = PhaseGridFunction::from_fn(g, |x, p| (2.0 * PI * x[0]).sin() * (2.0 * PI * p[0]).cos());
    let dx = grid::spectral_derivative(&f, &[1], &[0])?;
    let exact = PhaseGridFunction::from_fn(g, |x, p| 2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * p[0]).cos());
    let err = dx.sub(&exact).max_abs();
    println!("d_x error {err:.2e}");
    assert!(err < 1e-11);

    let rho = grid::density(&f);
    println!("density at x = 0: {:.3e}", rho.values[0]);

    let snap = Snapshot {
        time: 0.125,
        params: SnapshotParams {
            lambda0: 0.0,
            lambda1: 1.0,
            eta: 1.0,
            u: 1.0,
            tau: 0.05,
            epsilon0: 0.5,
        },
        field: f,
    };
    let dir = std::env::temp_dir().join(format!("bdb_spectral_example_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("state.bin");
    snapshot::write_file(&path, &snap)?;
    let back = snapshot::read_file(&path)?;
    assert_eq!(back, snap);
    println!("snapshot round trip ok ({} bytes)", std::fs::metadata(&path)?.len());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
