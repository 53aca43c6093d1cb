// SPDX-License-Identifier: Apache-2.0

// Random finite-dimensional systems with commuting generators: fitted
// commutator constants, the Picard solution and its decay bound.

use bdb_core::abstract_system::{picard_solve_abstract, random_admissible, verification_battery, BatteryOptions, PicardOptions};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> bdb_core::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (sys, k) = random_admissible(&mut rng, 1)?;
    println!(
        "m = {}, C = {:.3}, r = {:.3}, nu0 = {:.3e}, eps = {:.3e}, C1 = {:.3}",
        sys.dim(),
        k.c,
        k.r,
        k.nu0,
        k.epsilon,
        k.c1
    );
    let u0 = DVector::from_element(sys.dim(), 1.0);
    let scale = k.epsilon * k.nu0 / bdb_core::abstract_system::graded_norm(&sys, &u0, 0.0, k.nu0);
    let t_end = 5.0 / k.omega;
    let (_, rep) = picard_solve_abstract(&sys, &(u0 * scale), &k, t_end, t_end / 200.0, &PicardOptions::default())?;
    println!(
        "Picard: {} iterations, contraction {:.3e}, worst decay ratio {:.4}",
        rep.iterations, rep.contraction_factor, rep.decay_ratio
    );

    for r in verification_battery(3, &BatteryOptions::default())? {
        println!("{:<20} {:.3e} <= {:.3e}  {}", r.name, r.lhs, r.rhs, if r.holds() { "ok" } else { "FAIL" });
        assert!(r.holds());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
