// SPDX-License-Identifier: Apache-2.0

//! Random finite systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::constants::{constants_estimate, ContractionConstants};
use super::FiniteSystem;
use crate::error::{Error, Result};

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn normal_vector(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| StandardNormal.sample(rng))
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// `n` commuting matrices, each a polynomial of degree `degree` in one random
/// matrix of unit spectral norm.
pub fn polynomial_family(rng: &mut ChaCha8Rng, m: usize, n: usize, degree: usize) -> Vec<DMatrix<f64>> {
    let g = normal_matrix(rng, m, m);
    let b = &g / spectral_norm(&g);
    let mut powers = vec![DMatrix::identity(m, m)];
    for k in 1..=degree {
        powers.push(&powers[k - 1] * &b);
    }
    (0..n)
        .map(|_| {
            powers
                .iter()
                .fold(DMatrix::zeros(m, m), |acc, p| acc + p * rng.random_range(-1.0..1.0))
        })
        .collect()
}

/// A system with polynomial generators and random `L`, `Q` and `xbar`, meant
/// for the algebraic checks. Its group constants are `C_L = e^{|L|}` with
/// `omega = |L|`, which bound `e^{tL}` only for `t >= 0`.
pub fn random_commuting_system(rng: &mut ChaCha8Rng, m: usize, n: usize, degree: usize) -> FiniteSystem {
    let a = polynomial_family(rng, m, n, degree);
    let g = normal_matrix(rng, m, m);
    let l = &g / spectral_norm(&g);
    let q: Vec<DMatrix<f64>> = (0..m).map(|_| normal_matrix(rng, m, m) / m as f64).collect();
    let xbar = normal_vector(rng, m);
    let omega = spectral_norm(&l).max(1e-3);
    FiniteSystem::new(l, a, q, xbar, omega.exp(), omega).expect("polynomial generators commute")
}

/// Multidegree lattice of a graded basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphShape {
    pub degrees: Vec<Vec<usize>>,
}

impl GraphShape {
    /// `n = 1`: degrees `k0, ..., k0 + m - 1`. `n = 2`: the box
    /// `{k0, ..., k0 + m/2 - 1} x {0, 1}`.
    pub fn new(n: usize, m: usize, k0: usize) -> Result<Self> {
        let degrees = match n {
            1 => (0..m).map(|j| vec![k0 + j]).collect(),
            2 if m % 2 == 0 => (0..m / 2)
                .flat_map(|j| (0..2).map(move |s| vec![k0 + j, s]))
                .collect(),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unsupported lattice: n = {n}, m = {m}"
                )))
            }
        };
        Ok(Self { degrees })
    }

    pub fn position(&self, deg: &[usize]) -> Option<usize> {
        self.degrees.iter().position(|d| d.as_slice() == deg)
    }

    fn neighbours(&self, j: usize, l: usize) -> bool {
        let diff: usize = self.degrees[j]
            .iter()
            .zip(&self.degrees[l])
            .map(|(a, b)| a.abs_diff(*b))
            .sum();
        diff == 1
    }
}

fn build(rng: &mut ChaCha8Rng, shape: &GraphShape, kappa: f64) -> Result<FiniteSystem> {
    let m = shape.degrees.len();
    let n = shape.degrees[0].len();
    let omega = 1.0;
    let s = DMatrix::identity(m, m) + normal_matrix(rng, m, m) * (0.2 / (m as f64).sqrt());
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularJacobian { det: s.determinant() })?;
    let sv = s.clone().singular_values();
    let c_l = sv.max() / sv.min();

    let mut k = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in j + 1..m {
            if shape.neighbours(j, l) {
                let v: f64 = StandardNormal.sample(rng);
                k[(j, l)] = v;
                k[(l, j)] = -v;
            }
        }
    }
    let kn = spectral_norm(&k);
    if kn > 0.0 {
        k /= kn;
    }
    let core = DMatrix::identity(m, m) * omega + k * kappa;
    let l = &s * core * &s_inv;

    let a: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let d = DMatrix::from_diagonal(&DVector::from_fn(m, |j, _| shape.degrees[j][i] as f64));
            &s * d * &s_inv
        })
        .collect();

    // Q_D(e_j, e_l) = c e_{j+l} keeps A_i a derivation of Q
    let mut qd = vec![DMatrix::zeros(m, m); m];
    for j in 0..m {
        for l in 0..m {
            let sum: Vec<usize> = shape.degrees[j].iter().zip(&shape.degrees[l]).map(|(a, b)| a + b).collect();
            if let Some(kk) = shape.position(&sum) {
                qd[kk][(j, l)] = StandardNormal.sample(rng);
            }
        }
    }
    let s_inv_t = s_inv.transpose();
    let q: Vec<DMatrix<f64>> = (0..m)
        .map(|row| {
            let mix = (0..m).fold(DMatrix::zeros(m, m), |acc, kk| acc + &qd[kk] * s[(row, kk)]);
            &s_inv_t * mix * &s_inv
        })
        .collect();
    let xbar = normal_vector(rng, m);
    FiniteSystem::new(l, a, q, xbar, c_l, omega)
}

/// A random system satisfying the commutator hypothesis with certified
/// constants: `L = S (omega I + kappa K) S^{-1}`, `A_i = S diag(k_i) S^{-1}` on a
/// graded basis, `K` skew and coupling only neighbouring degrees, `Q` graded so
/// each `A_i` acts as a derivation. `C_L` is the condition number of `S`.
/// `kappa` is halved until the constants are admissible.
pub fn random_admissible(rng: &mut ChaCha8Rng, n: usize) -> Result<(FiniteSystem, ContractionConstants)> {
    let m = match n {
        1 => rng.random_range(4..=8),
        2 => 2 * rng.random_range(4..=5),
        _ => return Err(Error::InvalidParameter(format!("n = {n} is not supported"))),
    };
    let shape = GraphShape::new(n, m, 3)?;
    let mut kappa = 0.05;
    let mut last = None;
    for _ in 0..12 {
        let mut local = ChaCha8Rng::from_rng(&mut *rng);
        let sys = build(&mut local, &shape, kappa)?;
        match constants_estimate(&sys, 16, None, &mut local) {
            Ok(c) => return Ok((sys, c)),
            Err(e) => last = Some(e),
        }
        kappa *= 0.5;
    }
    Err(last.unwrap_or_else(|| Error::HypothesisViolated("no admissible system found".into())))
}
