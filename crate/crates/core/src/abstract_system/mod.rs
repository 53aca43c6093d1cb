// SPDX-License-Identifier: Apache-2.0

//! Finite-dimensional instances of the abstract Cauchy problem
//! `d_t x + L(x - xbar) = Q(x - xbar, x - xbar)` with commuting generators
//! `A_1, ..., A_n`, and numerical checks of the commutator estimates, the
//! contraction constants and the decay bound.
//!
//! All norms on the state space are Euclidean.

mod constants;
mod generate;
mod pde;
mod picard;
mod report;

pub use constants::{
    constants_estimate, fit_commutators, commutator_sum_check, mu0, nu0_bound, validate_fit, CommutatorFamily, CommutatorFit,
    ContractionConstants, FiniteFamily, DEFAULT_DEPTH, FIT_INFLATION,
};
pub use generate::{polynomial_family, random_admissible, random_commuting_system, GraphShape};
pub use pde::{random_smooth_field, PdeFamily};
pub use picard::{
    graded_norm, picard_solve_abstract, rk4_reference, AbstractTrajectory, PicardOptions, PicardReport,
};
pub use report::{verification_battery, write_report, BatteryOptions, InequalityRecord};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::multiindex;

/// Tolerance for the pairwise commutation of the generators, relative to
/// `1 + ||A_i|| ||A_j||`.
pub const COMMUTATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct FiniteSystem {
    l: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    q: Vec<DMatrix<f64>>,
    xbar: DVector<f64>,
    c_l: f64,
    omega: f64,
}

impl FiniteSystem {
    /// `q[k]` holds the coefficients of the k-th output component:
    /// `Q(x, y)_k = x^T q[k] y`.
    pub fn new(
        l: DMatrix<f64>,
        a: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        xbar: DVector<f64>,
        c_l: f64,
        omega: f64,
    ) -> Result<Self> {
        let m = l.nrows();
        if l.ncols() != m || xbar.len() != m {
            return Err(Error::ShapeMismatch {
                expected: m,
                got: xbar.len(),
            });
        }
        if a.is_empty() {
            return Err(Error::InvalidParameter("at least one generator is required".into()));
        }
        for ai in &a {
            if ai.shape() != (m, m) {
                return Err(Error::ShapeMismatch {
                    expected: m,
                    got: ai.nrows(),
                });
            }
        }
        if q.len() != m || q.iter().any(|qk| qk.shape() != (m, m)) {
            return Err(Error::ShapeMismatch {
                expected: m,
                got: q.len(),
            });
        }
        if !(c_l >= 1.0 && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need C_L >= 1 and omega > 0, got C_L = {c_l}, omega = {omega}"
            )));
        }
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                let c = &a[i] * &a[j] - &a[j] * &a[i];
                let res = c.amax();
                let scale = 1.0 + a[i].norm() * a[j].norm();
                if res > COMMUTATION_TOL * scale {
                    return Err(Error::InvariantViolated(format!(
                        "generators A_{} and A_{} do not commute (residual {res:e})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self {
            l,
            a,
            q,
            xbar,
            c_l,
            omega,
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn generator_count(&self) -> usize {
        self.a.len()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn bilinear_tensor(&self) -> &[DMatrix<f64>] {
        &self.q
    }

    pub fn xbar(&self) -> &DVector<f64> {
        &self.xbar
    }

    pub fn c_l(&self) -> f64 {
        self.c_l
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.q.iter().map(|qk| x.dot(&(qk * y))))
    }

    /// `F(x) = -L(x - xbar) + Q(x - xbar, x - xbar)`.
    pub fn vector_field(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = x - &self.xbar;
        -(&self.l * &d) + self.bilinear(&d, &d)
    }

    /// `e^{tL}`.
    pub fn group(&self, t: f64) -> DMatrix<f64> {
        if t == 0.0 {
            return DMatrix::identity(self.dim(), self.dim());
        }
        (&self.l * t).exp()
    }

    /// `A^alpha v`.
    pub fn generator_power(&self, alpha: &[usize], v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for (i, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                out = &self.a[i] * out;
            }
        }
        out
    }

    pub fn generator_matrix_power(&self, alpha: &[usize]) -> DMatrix<f64> {
        let m = self.dim();
        let mut out = DMatrix::identity(m, m);
        for (i, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                out = &self.a[i] * out;
            }
        }
        out
    }

    /// `C_Q` with `||Q(x, y)|| <= C_Q sum_i (||A_i x|| ||y|| + ||x|| ||A_i y||)`,
    /// certified from `||Q(x, y)|| <= q ||x|| ||y||` and `||A_i x|| >= s_i ||x||`.
    pub fn bilinear_constant(&self) -> Result<f64> {
        let q = self
            .q
            .iter()
            .map(|qk| qk.clone().singular_values().max().powi(2))
            .sum::<f64>()
            .sqrt();
        if q == 0.0 {
            return Ok(0.0);
        }
        let s: f64 = self.a.iter().map(|ai| ai.clone().singular_values().min()).sum();
        if s <= 0.0 {
            return Err(Error::HypothesisViolated(
                "no generator is injective, C_Q cannot be certified".into(),
            ));
        }
        Ok(q / (2.0 * s))
    }

    /// Largest observed `||e^{tL}|| e^{-omega t}` over the given times.
    pub fn measured_group_bound(&self, times: &[f64]) -> f64 {
        times
            .iter()
            .map(|&t| self.group(t).clone().singular_values().max() * (-self.omega * t).exp())
            .fold(0.0, f64::max)
    }
}

/// `L_alpha` with `L_0 = L`, `L_{alpha + e_i} = [L_alpha, A_i]`, built in
/// ascending generator order.
pub fn commutator_tower(sys: &FiniteSystem, alpha: &[usize]) -> DMatrix<f64> {
    let mut order = Vec::new();
    for (i, &k) in alpha.iter().enumerate() {
        order.extend(std::iter::repeat_n(i, k));
    }
    commutator_tower_ordered(sys, &order)
}

/// Same tower, applying the brackets in the given generator sequence.
pub fn commutator_tower_ordered(sys: &FiniteSystem, order: &[usize]) -> DMatrix<f64> {
    let mut out = sys.l.clone();
    for &i in order {
        out = &out * &sys.a[i] - &sys.a[i] * &out;
    }
    out
}

/// Largest entry of `[L, A^alpha] - sum_{0 != gamma <= alpha} binom(alpha, gamma)
/// (-1)^{|gamma| - 1} L_gamma A^{alpha - gamma}`.
pub fn expansion_check(sys: &FiniteSystem, alpha: &[usize]) -> f64 {
    let aa = sys.generator_matrix_power(alpha);
    let direct = &sys.l * &aa - &aa * &sys.l;
    let mut sum = DMatrix::zeros(sys.dim(), sys.dim());
    for gamma in multiindex::box_below(alpha) {
        let g = multiindex::order(&gamma);
        if g == 0 {
            continue;
        }
        let sign = if g % 2 == 1 { 1.0 } else { -1.0 };
        let coeff = sign * multiindex::binomial(alpha, &gamma);
        sum += commutator_tower(sys, &gamma) * sys.generator_matrix_power(&multiindex::sub(alpha, &gamma)) * coeff;
    }
    (direct - sum).amax()
}

fn h3_sum(
    sys: &FiniteSystem,
    alpha: &[usize],
    z: &DVector<f64>,
    w: &DVector<f64>,
) -> f64 {
    let n = sys.generator_count();
    let mut total = 0.0;
    for gamma in multiindex::box_below(alpha) {
        let b = multiindex::binomial(alpha, &gamma);
        let rest = multiindex::sub(alpha, &gamma);
        let z_rest = sys.generator_power(&rest, z).norm();
        let w_rest = sys.generator_power(&rest, w).norm();
        for i in 0..n {
            let shift = multiindex::add(&gamma, &multiindex::unit(n, i));
            total += b * (z_rest * sys.generator_power(&shift, w).norm()
                + w_rest * sys.generator_power(&shift, z).norm());
        }
    }
    total
}

/// Both sides of `||A^alpha Q(y, y)|| <= sum_gamma binom(alpha, gamma)
/// ||A^{alpha-gamma} y|| M_1 sum_i ||A^{gamma+e_i} y||` with `M_0 = 0`, `M_1 = 2 C_Q`.
pub fn h3a_check(sys: &FiniteSystem, y: &DVector<f64>, alpha: &[usize]) -> Result<(f64, f64)> {
    let cq = sys.bilinear_constant()?;
    let lhs = sys.generator_power(alpha, &sys.bilinear(y, y)).norm();
    let n = sys.generator_count();
    let mut rhs = 0.0;
    for gamma in multiindex::box_below(alpha) {
        let b = multiindex::binomial(alpha, &gamma);
        let rest = sys.generator_power(&multiindex::sub(alpha, &gamma), y).norm();
        let shifted: f64 = (0..n)
            .map(|i| sys.generator_power(&multiindex::add(&gamma, &multiindex::unit(n, i)), y).norm())
            .sum();
        rhs += b * rest * 2.0 * cq * shifted;
    }
    Ok((lhs, rhs))
}

/// Both sides of the Lipschitz estimate for `Q(y) = Q(y, y)` with
/// `M'_0 = 0`, `M'_1 = 2 C_Q`; the supremum over the segment is taken over its
/// endpoints.
pub fn lipschitz_check(sys: &FiniteSystem, x: &DVector<f64>, y: &DVector<f64>, alpha: &[usize]) -> Result<(f64, f64)> {
    let cq = sys.bilinear_constant()?;
    let diff = y - x;
    let lhs = sys
        .generator_power(alpha, &(sys.bilinear(y, y) - sys.bilinear(x, x)))
        .norm();
    let rhs = 2.0 * cq * h3_sum(sys, alpha, x, &diff).max(h3_sum(sys, alpha, y, &diff));
    Ok((lhs, rhs))
}
