// SPDX-License-Identifier: Apache-2.0

//! The phase-space operator as a commutator family with generators
//! `(d_{x_1}, ..., d_{x_d}, d_{p_1}, ..., d_{p_d})`.
//!
//! `L` commutes with every `d_{x_i}`, so `L_alpha` vanishes as soon as `alpha`
//! has an `x` component; the remaining towers are the momentum towers of
//! [`LinearizedOperator::commutator_tower`]. Ratios are sampled, not certified.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::constants::CommutatorFamily;
use crate::error::Result;
use crate::grid::{self, PhaseGrid, PhaseGridFunction};
use crate::lingroup::LinearizedOperator;

pub struct PdeFamily<'a> {
    op: &'a LinearizedOperator,
    max_wavenumber: i32,
}

impl<'a> PdeFamily<'a> {
    pub fn new(op: &'a LinearizedOperator, max_wavenumber: i32) -> Self {
        Self { op, max_wavenumber }
    }
}

/// Sum of six random cosines with wavenumbers in `0..=kmax` per axis.
pub fn random_smooth_field(grid: PhaseGrid, rng: &mut ChaCha8Rng, kmax: i32) -> PhaseGridFunction {
    let d = grid.d;
    let terms: Vec<(f64, Vec<f64>, Vec<f64>, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                (0..d).map(|_| rng.random_range(0..=kmax) as f64).collect(),
                (0..d).map(|_| rng.random_range(0..=kmax) as f64).collect(),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    PhaseGridFunction::from_fn(grid, |x, p| {
        terms
            .iter()
            .map(|(a, kx, kp, ph)| {
                let arg: f64 = kx.iter().zip(x).map(|(k, xi)| k * xi / grid.lx).sum::<f64>()
                    + kp.iter().zip(p).map(|(k, pi)| k * pi).sum::<f64>();
                a * (2.0 * PI * arg + ph).cos()
            })
            .sum()
    })
}

impl CommutatorFamily for PdeFamily<'_> {
    type State = PhaseGridFunction;

    fn generator_count(&self) -> usize {
        2 * self.op.grid().d
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> PhaseGridFunction {
        random_smooth_field(*self.op.grid(), rng, self.max_wavenumber)
    }

    fn commutator_norm(&self, alpha: &[usize], y: &PhaseGridFunction) -> Result<f64> {
        let d = self.op.grid().d;
        let (ax, beta) = alpha.split_at(d);
        if ax.iter().any(|&a| a > 0) {
            return Ok(0.0);
        }
        let lb = if beta.iter().all(|&b| b == 0) {
            self.op.apply_l(y)?
        } else {
            self.op.commutator_tower(beta, y)?
        };
        Ok(self.op.x_norm().norm(&lb))
    }

    fn generator_norm_sum(&self, y: &PhaseGridFunction) -> Result<f64> {
        let d = self.op.grid().d;
        let zero = vec![0; d];
        let mut s = 0.0;
        for i in 0..d {
            let e = crate::multiindex::unit(d, i);
            s += self.op.x_norm().norm(&grid::spectral_derivative(y, &e, &zero)?);
            s += self.op.x_norm().norm(&grid::spectral_derivative(y, &zero, &e)?);
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstract_system::fit_commutators;
    use crate::model::{BandParams, EntropyParams};
    use rand::SeedableRng;

    #[test]
    fn pde_fit_is_finite_and_x_towers_vanish() {
        let grid = PhaseGrid::new(1, 16, 16, 1.0).unwrap();
        let op = LinearizedOperator::new(grid, EntropyParams::new(0.0, 1.0, 1.0).unwrap(), BandParams::default(), 1.0).unwrap();
        let fam = PdeFamily::new(&op, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = fam.sample_state(&mut rng);
        assert_eq!(fam.commutator_norm(&[1, 0], &y).unwrap(), 0.0);
        assert!(fam.commutator_norm(&[0, 2], &y).unwrap() > 0.0);
        let fit = fit_commutators(&fam, 6, 4, &mut rng).unwrap();
        assert!(fit.c > 0.0 && fit.r > 0.0 && fit.c.is_finite() && fit.r.is_finite());
        assert!(!fit.certified);
    }
}
