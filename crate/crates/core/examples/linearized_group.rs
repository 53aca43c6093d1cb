// SPDX-License-Identifier: Apache-2.0

// The linearized operator: skew symmetry in the weighted norm, the
// unitary group and the resolvent, all checked on random fields.

use bdb_core::experiment::linear_suite;
use bdb_core::grid::{PhaseGrid, C64};
use bdb_core::lingroup::LinearizedOperator;
use bdb_core::model::{BandParams, EntropyParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> bdb_core::Result<()> {
    let op = LinearizedOperator::new(
        PhaseGrid::new(1, 32, 32, 1.0)?,
        EntropyParams::new(0.0, 1.0, 1.0)?,
        BandParams::new(0.5, 1)?,
        1.0,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for c in linear_suite(&op, 5, 1.0, 1.0, &mut rng)? {
        println!("{:<24} {:.3e} < {:.0e}  {}", c.name, c.value, c.tol, if c.pass { "ok" } else { "FAIL" });
        assert!(c.pass);
    }
    let d = op.dispersion_function(C64::new(0.5, 0.0), &[2.0 * std::f64::consts::PI])?;
    println!("D(0.5, 2 pi) = {:.6} {:+.6}i", d.re, d.im);
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
