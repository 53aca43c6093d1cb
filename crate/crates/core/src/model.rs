// SPDX-License-Identifier: Apache-2.0

//! Closed-form physics of the optical-lattice band: the tight-binding band
//! energy, Fermi-Dirac equilibria, the equilibrium weight, the criticality
//! value and the BGK moment-matching multipliers.
//!
//! Conventions fixed throughout the crate:
//!
//! * the momentum torus is `[0, 1)^d` and `eps(p) = -2 eps0 sum_i cos(2 pi p_i)`;
//! * integrals over the torus use the trapezoid rule, which is spectrally
//!   accurate for periodic analytic integrands.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::PhaseGridFunction;

/// Band structure of a simple cubic lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandParams {
    pub epsilon0: f64,
    pub d: usize,
}

impl BandParams {
    pub fn new(epsilon0: f64, d: usize) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon0 must be positive and finite, got {epsilon0}"
            )));
        }
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1, 2 or 3, got {d}"
            )));
        }
        Ok(Self { epsilon0, d })
    }
}

impl Default for BandParams {
    /// `epsilon0 = 1/2`, so that `eps(p) = -sum cos(2 pi p_i)`.
    fn default() -> Self {
        Self {
            epsilon0: 0.5,
            d: 1,
        }
    }
}

/// Entropy parameters of the equilibrium `1 / (eta + exp(-lambda0 - lambda1 eps))`.
///
/// `eta = 1` is Fermi-Dirac, `eta = 0` Maxwell-Boltzmann.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub eta: f64,
}

impl EntropyParams {
    pub fn new(lambda0: f64, lambda1: f64, eta: f64) -> Result<Self> {
        if !lambda0.is_finite() || !lambda1.is_finite() {
            return Err(Error::InvalidParameter(
                "entropy parameters must be finite".into(),
            ));
        }
        if lambda1 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda1 must be nonnegative, got {lambda1}"
            )));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be nonnegative and finite, got {eta}"
            )));
        }
        Ok(Self {
            lambda0,
            lambda1,
            eta,
        })
    }
}

/// Interaction strength and relaxation time. `tau = inf` switches relaxation off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub u: f64,
    pub tau: f64,
}

impl PhysicalParams {
    pub fn new(u: f64, tau: f64) -> Result<Self> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "U must be positive and finite, got {u}"
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {tau}"
            )));
        }
        Ok(Self { u, tau })
    }

    /// Like [`PhysicalParams::new`] but admits `U = 0` (free transport).
    pub fn with_coupling(u: f64, tau: f64) -> Result<Self> {
        if u == 0.0 {
            if !(tau > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "tau must be positive, got {tau}"
                )));
            }
            return Ok(Self { u, tau });
        }
        Self::new(u, tau)
    }

    /// `1 / tau`, zero when relaxation is switched off.
    pub fn relaxation_rate(&self) -> f64 {
        if self.tau.is_infinite() {
            0.0
        } else {
            1.0 / self.tau
        }
    }
}

/// Reduce a torus coordinate into `[-1/2, 1/2)`. Keeps `eps(-p) = eps(p)`
/// bit-exact on grids.
#[inline]
fn reduce(p: f64) -> f64 {
    p - (p + 0.5).floor()
}

/// `k`-th derivative of the single-coordinate band term `-2 eps0 cos(2 pi p)`.
#[inline]
pub fn band_term_derivative(p: f64, k: usize, bp: &BandParams) -> f64 {
    let w = 2.0 * PI;
    let r = reduce(p);
    let arg = w * r;
    // sin vanishes exactly at the zone boundary so that grad eps stays odd
    let sin = if r == -0.5 { 0.0 } else { arg.sin() };
    let trig = match k % 4 {
        0 => arg.cos(),
        1 => -sin,
        2 => -arg.cos(),
        _ => sin,
    };
    -2.0 * bp.epsilon0 * w.powi(k as i32) * trig
}

/// `eps(p) = -2 eps0 sum_i cos(2 pi p_i)`.
pub fn band_energy(p: &[f64], bp: &BandParams) -> f64 {
    p.iter().map(|&pi| band_term_derivative(pi, 0, bp)).sum()
}

/// `grad eps(p) = 4 pi eps0 (sin(2 pi p_i))_i`.
pub fn band_gradient(p: &[f64], bp: &BandParams) -> Vec<f64> {
    p.iter().map(|&pi| band_term_derivative(pi, 1, bp)).collect()
}

/// `d^beta eps(p)`. Mixed derivatives vanish because the band is a sum of
/// one-dimensional terms.
pub fn band_partial(p: &[f64], beta: &[usize], bp: &BandParams) -> f64 {
    let nonzero: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] > 0).collect();
    match nonzero.len() {
        0 => band_energy(p, bp),
        1 => band_term_derivative(p[nonzero[0]], beta[nonzero[0]], bp),
        _ => 0.0,
    }
}

/// Overflow-safe `1 / (eta + exp(-z))`.
#[inline]
pub fn occupation(z: f64, eta: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (eta + (-z).exp())
    } else {
        let e = z.exp();
        e / (eta * e + 1.0)
    }
}

/// Overflow-safe `F (1 - eta F)` for `F = occupation(z, eta)`.
#[inline]
pub fn occupation_weight(z: f64, eta: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / ((eta + e) * (eta + e))
    } else {
        let e = z.exp();
        e / ((eta * e + 1.0) * (eta * e + 1.0))
    }
}

#[inline]
fn exponent(energy: f64, ep: &EntropyParams) -> f64 {
    ep.lambda0 + ep.lambda1 * energy
}

/// Equilibrium as a function of the band energy value.
pub fn equilibrium_at_energy(energy: f64, ep: &EntropyParams) -> f64 {
    occupation(exponent(energy, ep), ep.eta)
}

/// Weight `F (1 - eta F)` as a function of the band energy value.
pub fn weight_at_energy(energy: f64, ep: &EntropyParams) -> f64 {
    occupation_weight(exponent(energy, ep), ep.eta)
}

/// `F_lambda(p) = 1 / (eta + exp(-lambda0 - lambda1 eps(p)))`.
pub fn equilibrium(p: &[f64], ep: &EntropyParams, bp: &BandParams) -> f64 {
    equilibrium_at_energy(band_energy(p, bp), ep)
}

/// Analytic `grad_p F_lambda = lambda1 F (1 - eta F) grad eps`.
pub fn equilibrium_gradient(p: &[f64], ep: &EntropyParams, bp: &BandParams) -> Vec<f64> {
    let w = weight_at_energy(band_energy(p, bp), ep);
    band_gradient(p, bp)
        .into_iter()
        .map(|g| ep.lambda1 * w * g)
        .collect()
}

/// The weight `w(p) = F(1 - eta F)` and its reciprocal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumWeight {
    pub weight: f64,
    pub inverse: f64,
}

pub fn equilibrium_weight(
    p: &[f64],
    ep: &EntropyParams,
    bp: &BandParams,
) -> Result<EquilibriumWeight> {
    let weight = weight_at_energy(band_energy(p, bp), ep);
    if weight <= f64::MIN_POSITIVE || !weight.is_finite() {
        return Err(Error::DegenerateWeight { p: p.to_vec() });
    }
    Ok(EquilibriumWeight {
        weight,
        inverse: 1.0 / weight,
    })
}

/// Coefficients (in powers of `y`) of the polynomials `P_m` with
/// `phi^(m)(s) = P_m(phi(s))`, where `phi' = lambda1 (phi - eta phi^2)`.
fn occupation_derivative_polys(max_order: usize, ep: &EntropyParams) -> Vec<Vec<f64>> {
    let mut polys = vec![vec![0.0, 1.0]];
    for m in 0..max_order {
        let p = &polys[m];
        // derivative of P_m in y
        let dp: Vec<f64> = (1..p.len()).map(|k| k as f64 * p[k]).collect();
        // multiply by lambda1 (y - eta y^2)
        let mut next = vec![0.0; dp.len() + 2];
        for (k, &c) in dp.iter().enumerate() {
            next[k + 1] += ep.lambda1 * c;
            next[k + 2] -= ep.lambda1 * ep.eta * c;
        }
        polys.push(next);
    }
    polys
}

fn eval_poly(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c)
}

/// Partial Bell polynomials `B_{n,k}(x_1, ..., x_{n-k+1})` for all
/// `0 <= k <= n`.
fn partial_bell(n: usize, x: &[f64]) -> Vec<f64> {
    // table[m][k] = B_{m,k}
    let mut table = vec![vec![0.0; n + 1]; n + 1];
    table[0][0] = 1.0;
    for m in 1..=n {
        for k in 1..=m {
            let mut s = 0.0;
            for i in 1..=(m - k + 1) {
                s += crate::multiindex::scalar_binomial(m - 1, i - 1) * x[i - 1] * table[m - i][k - 1];
            }
            table[m][k] = s;
        }
    }
    table[n].clone()
}

/// Analytic `d_p^beta F_lambda(p)` through Faa di Bruno's formula. Since the
/// band energy is a sum of one-dimensional terms, each Bell block stays
/// within a single coordinate.
pub fn equilibrium_partial(p: &[f64], beta: &[usize], ep: &EntropyParams, bp: &BandParams) -> f64 {
    let total: usize = beta.iter().sum();
    let energy = band_energy(p, bp);
    let y = equilibrium_at_energy(energy, ep);
    if total == 0 {
        return y;
    }
    let polys = occupation_derivative_polys(total, ep);
    // per coordinate: Bell rows B_{beta_i, k}
    let rows: Vec<Vec<f64>> = beta
        .iter()
        .zip(p)
        .map(|(&b, &pi)| {
            let derivs: Vec<f64> = (1..=b.max(1))
                .map(|k| band_term_derivative(pi, k, bp))
                .collect();
            partial_bell(b, &derivs)
        })
        .collect();
    // sum over (k_1, ..., k_d)
    let mut acc = 0.0;
    let ranges: Vec<usize> = beta.to_vec();
    for ks in crate::multiindex::box_below(&ranges) {
        let prod: f64 = ks.iter().zip(&rows).map(|(&k, row)| row[k]).product();
        if prod == 0.0 {
            continue;
        }
        let order: usize = ks.iter().sum();
        acc += eval_poly(&polys[order], y) * prod;
    }
    acc
}

/// Trapezoid quadrature over the unit torus `[0,1)^d` with `n` nodes per axis.
pub fn torus_quadrature<F: FnMut(&[f64]) -> f64>(d: usize, n: usize, mut integrand: F) -> f64 {
    let total = n.pow(d as u32);
    let h = 1.0 / n as f64;
    let mut p = vec![0.0; d];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        for axis in (0..d).rev() {
            p[axis] = (rem % n) as f64 * h;
            rem /= n;
        }
        sum += integrand(&p);
    }
    sum / total as f64
}

/// Default quadrature resolution for the closed-form integrals.
pub const DEFAULT_QUADRATURE_NODES: usize = 256;

/// `K = U lambda1 int F (1 - eta F) dp`. The sufficient criterion for the
/// critical regime is `K > 1`.
pub fn criticality_value(ep: &EntropyParams, bp: &BandParams, u: f64, nodes: usize) -> f64 {
    if ep.lambda1 == 0.0 {
        return 0.0;
    }
    let integral = torus_quadrature(bp.d, nodes, |p| weight_at_energy(band_energy(p, bp), ep));
    u * ep.lambda1 * integral
}

/// `<f, g>_0 = int int f g / w dp dx + U lambda1 int rho_f rho_g dx`.
pub fn weighted_inner_product(
    f: &PhaseGridFunction,
    g: &PhaseGridFunction,
    ep: &EntropyParams,
    bp: &BandParams,
    u: f64,
) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    let inv_w = grid.inverse_weights(ep, bp)?;
    let np_total = grid.momentum_len();
    let nx_total = grid.spatial_len();
    let dx = grid.cell_volume();
    let dp = 1.0 / np_total as f64;
    let (fv, gv) = (f.values(), g.values());
    let mut first = 0.0;
    let mut second = 0.0;
    for ix in 0..nx_total {
        let row_f = &fv[ix * np_total..(ix + 1) * np_total];
        let row_g = &gv[ix * np_total..(ix + 1) * np_total];
        let mut s = 0.0;
        let mut rho_f = 0.0;
        let mut rho_g = 0.0;
        for j in 0..np_total {
            s += row_f[j] * row_g[j] * inv_w[j];
            rho_f += row_f[j];
            rho_g += row_g[j];
        }
        first += s * dp;
        second += rho_f * dp * rho_g * dp;
    }
    Ok(dx * (first + u * ep.lambda1 * second))
}

/// Options for the BGK Newton iteration.
#[derive(Clone, Copy, Debug)]
pub struct BgkOptions {
    pub max_iter: usize,
    /// Relative residual target on both moment equations.
    pub tol: f64,
}

impl Default for BgkOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BgkMultipliers {
    pub lambda0: f64,
    pub lambda1: f64,
    pub iterations: usize,
    /// Relative residuals of the mass and energy constraints.
    pub residual: [f64; 2],
}

fn moment_map(
    l0: f64,
    l1: f64,
    eps_nodes: &[f64],
    eta: f64,
) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = eps_nodes.len() as f64;
    let (mut m0, mut m1) = (0.0, 0.0);
    let (mut j00, mut j01, mut j11) = (0.0, 0.0, 0.0);
    for &e in eps_nodes {
        let z = l0 + l1 * e;
        let f = occupation(z, eta);
        let w = occupation_weight(z, eta);
        m0 += f;
        m1 += e * f;
        j00 += w;
        j01 += e * w;
        j11 += e * e * w;
    }
    (
        [m0 / n, m1 / n],
        [[j00 / n, j01 / n], [j01 / n, j11 / n]],
    )
}

/// Lagrange multipliers `(lambda0, lambda1)` whose equilibrium has the same
/// mass `int f dp` and energy `int eps f dp` as the momentum profile `f`.
///
/// `eps_nodes` holds the band energy at the momentum nodes carrying `f`.
/// Newton starts from `lambda1 = 0` and the constant equilibrium of mass `m0`.
pub fn bgk_multipliers(
    f: &[f64],
    eps_nodes: &[f64],
    eta: f64,
    opts: &BgkOptions,
) -> Result<BgkMultipliers> {
    if f.len() != eps_nodes.len() {
        return Err(Error::ShapeMismatch {
            expected: eps_nodes.len(),
            got: f.len(),
        });
    }
    let n = f.len() as f64;
    let m0 = f.iter().sum::<f64>() / n;
    let m1 = f.iter().zip(eps_nodes).map(|(a, e)| a * e).sum::<f64>() / n;
    let non_realizable = |reason: &str| Error::NonRealizableMoments {
        m0,
        m1,
        reason: reason.to_string(),
    };
    if !(m0 > 0.0) || (eta > 0.0 && m0 * eta >= 1.0) || !m1.is_finite() {
        return Err(non_realizable("mass outside (0, 1/eta)"));
    }
    let scale0 = m0.abs();
    let scale1 = m0 * eps_nodes.iter().fold(0.0f64, |a, e| a.max(e.abs())).max(1e-300);

    let mut l0 = -(1.0 / m0 - eta).ln();
    let mut l1 = 0.0;
    let residual_of = |mom: [f64; 2]| [(mom[0] - m0) / scale0, (mom[1] - m1) / scale1];
    let (mut mom, mut jac) = moment_map(l0, l1, eps_nodes, eta);
    let mut res = residual_of(mom);
    for it in 0..=opts.max_iter {
        let rnorm = res[0].abs().max(res[1].abs());
        if rnorm < opts.tol {
            return Ok(BgkMultipliers {
                lambda0: l0,
                lambda1: l1,
                iterations: it,
                residual: res,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jscale = jac[0][0] * jac[1][1];
        if !(det.abs() > 1e-14 * jscale.abs()) || !det.is_finite() {
            return Err(Error::SingularJacobian { det });
        }
        let r0 = mom[0] - m0;
        let r1 = mom[1] - m1;
        let d0 = (jac[1][1] * r0 - jac[0][1] * r1) / det;
        let d1 = (-jac[1][0] * r0 + jac[0][0] * r1) / det;
        // damped step: halve until the residual decreases
        let mut step = 1.0;
        loop {
            let (nl0, nl1) = (l0 - step * d0, l1 - step * d1);
            let (nmom, njac) = moment_map(nl0, nl1, eps_nodes, eta);
            let nres = residual_of(nmom);
            let nnorm = nres[0].abs().max(nres[1].abs());
            if nnorm.is_finite() && (nnorm < rnorm || step < 1e-4) {
                l0 = nl0;
                l1 = nl1;
                mom = nmom;
                jac = njac;
                res = nres;
                break;
            }
            step *= 0.5;
        }
        if res[0].abs().max(res[1].abs()) >= rnorm && step < 1e-4 {
            // stagnation at round-off level is acceptable, otherwise fail
            if rnorm < 1e-11 {
                return Ok(BgkMultipliers {
                    lambda0: l0,
                    lambda1: l1,
                    iterations: it + 1,
                    residual: res,
                });
            }
            return Err(non_realizable("Newton iteration stagnated"));
        }
    }
    let rnorm = res[0].abs().max(res[1].abs());
    if rnorm < 1e-11 {
        return Ok(BgkMultipliers {
            lambda0: l0,
            lambda1: l1,
            iterations: opts.max_iter,
            residual: res,
        });
    }
    Err(non_realizable("Newton did not converge within max_iter"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd() -> EntropyParams {
        EntropyParams::new(0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn band_energy_at_special_points() {
        let bp = BandParams::new(0.5, 3).unwrap();
        assert!((band_energy(&[0.0; 3], &bp) + 3.0).abs() < 1e-15);
        assert!((band_energy(&[0.5; 3], &bp) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn band_gradient_matches_finite_differences() {
        let bp = BandParams::new(0.7, 3).unwrap();
        let h = 1e-6;
        for p in [[0.13, 0.71, 0.42], [0.9, 0.05, 0.33]] {
            let g = band_gradient(&p, &bp);
            for i in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[i] += h;
                pm[i] -= h;
                let fdv = (band_energy(&pp, &bp) - band_energy(&pm, &bp)) / (2.0 * h);
                assert!((fdv - g[i]).abs() < 1e-8, "{fdv} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn band_energy_is_even_and_gradient_odd_on_grid() {
        let bp = BandParams::default();
        let n = 64;
        for j in 0..n {
            let p = j as f64 / n as f64;
            let q = ((n - j) % n) as f64 / n as f64;
            assert_eq!(band_energy(&[p], &bp), band_energy(&[q], &bp));
            assert!((band_gradient(&[p], &bp)[0] + band_gradient(&[q], &bp)[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn equilibrium_special_cases() {
        let bp = BandParams::default();
        let half = EntropyParams::new(0.0, 0.0, 1.0).unwrap();
        for p in [0.0, 0.3, 0.77] {
            assert_eq!(equilibrium(&[p], &half, &bp), 0.5);
            let w = equilibrium_weight(&[p], &half, &bp).unwrap();
            assert_eq!(w.weight, 0.25);
            assert_eq!(w.inverse, 4.0);
        }
        let mb = EntropyParams::new(0.3, 1.7, 0.0).unwrap();
        for p in [0.1, 0.45] {
            let e = band_energy(&[p], &bp);
            let exact = (0.3 + 1.7 * e).exp();
            assert!((equilibrium(&[p], &mb, &bp) - exact).abs() <= 1e-15 * exact);
            let w = equilibrium_weight(&[p], &mb, &bp).unwrap().weight;
            assert!((w - exact).abs() <= 1e-15 * exact);
        }
    }

    #[test]
    fn equilibrium_is_overflow_safe_and_bounded() {
        let bp = BandParams::default();
        let ep = EntropyParams::new(-800.0, 5.0, 1.0).unwrap();
        let f = equilibrium(&[0.2], &ep, &bp);
        assert!(f.is_finite() && f >= 0.0);
        let ep = EntropyParams::new(800.0, 5.0, 1.0).unwrap();
        let f = equilibrium(&[0.2], &ep, &bp);
        assert!(f.is_finite() && f <= 1.0);
        // weight underflow is reported
        assert!(matches!(
            equilibrium_weight(&[0.2], &ep, &bp),
            Err(Error::DegenerateWeight { .. })
        ));
    }

    #[test]
    fn equilibrium_monotone_in_energy_for_positive_lambda1() {
        let bp = BandParams::default();
        let ep = EntropyParams::new(-0.4, 2.0, 1.0).unwrap();
        // eps increases on p in [0, 1/2]
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=200 {
            let p = 0.5 * k as f64 / 200.0;
            let f = equilibrium(&[p], &ep, &bp);
            assert!(f >= prev);
            assert!(f > 0.0 && f < 1.0);
            prev = f;
        }
    }

    #[test]
    fn equilibrium_partials_match_finite_differences() {
        let bp = BandParams::new(0.5, 2).unwrap();
        let ep = EntropyParams::new(0.2, 1.3, 1.0).unwrap();
        let p = [0.17, 0.62];
        let h = 1e-4;
        let f = |q: &[f64]| equilibrium(q, &ep, &bp);
        // first order matches the analytic gradient
        let g = equilibrium_gradient(&p, &ep, &bp);
        assert!((equilibrium_partial(&p, &[1, 0], &ep, &bp) - g[0]).abs() < 1e-14);
        assert!((equilibrium_partial(&p, &[0, 1], &ep, &bp) - g[1]).abs() < 1e-14);
        // second order, pure and mixed
        let d2 = (f(&[p[0] + h, p[1]]) - 2.0 * f(&p) + f(&[p[0] - h, p[1]])) / (h * h);
        assert!((equilibrium_partial(&p, &[2, 0], &ep, &bp) - d2).abs() < 1e-5);
        let mixed = (f(&[p[0] + h, p[1] + h]) - f(&[p[0] + h, p[1] - h]) - f(&[p[0] - h, p[1] + h])
            + f(&[p[0] - h, p[1] - h]))
            / (4.0 * h * h);
        assert!((equilibrium_partial(&p, &[1, 1], &ep, &bp) - mixed).abs() < 1e-5);
        // third order from differences of the analytic second derivative
        let d3 = (equilibrium_partial(&[p[0] + h, p[1]], &[2, 0], &ep, &bp)
            - equilibrium_partial(&[p[0] - h, p[1]], &[2, 0], &ep, &bp))
            / (2.0 * h);
        assert!((equilibrium_partial(&p, &[3, 0], &ep, &bp) - d3).abs() < 1e-4 * d3.abs().max(1.0));
    }

    #[test]
    fn criticality_vanishes_without_lambda1_and_is_linear_in_u() {
        let bp = BandParams::default();
        let ep = EntropyParams::new(0.3, 0.0, 1.0).unwrap();
        assert_eq!(criticality_value(&ep, &bp, 3.0, 64), 0.0);
        let ep = fd();
        let k1 = criticality_value(&ep, &bp, 1.0, 64);
        let k2 = criticality_value(&ep, &bp, 2.0, 64);
        assert!((k2 - 2.0 * k1).abs() < 1e-12);
    }

    #[test]
    fn criticality_matches_dense_quadrature() {
        let bp = BandParams::default();
        let ep = fd();
        let reference = criticality_value(&ep, &bp, 1.0, 10_000);
        let production = criticality_value(&ep, &bp, 1.0, 64);
        assert!((reference - production).abs() < 1e-9);
        // self-convergence of the weight integral
        let a = torus_quadrature(1, 32, |p| weight_at_energy(band_energy(p, &bp), &ep));
        let b = torus_quadrature(1, 64, |p| weight_at_energy(band_energy(p, &bp), &ep));
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn criticality_monotone_in_lambda1() {
        let bp = BandParams::default();
        for lambda0 in [-1.0, -0.3, 0.0] {
            let mut prev = -1.0;
            // K rises until lambda1 ~ 3.5 and then saturates from above
            for k in 0..=12 {
                let l1 = 0.25 * k as f64;
                let ep = EntropyParams::new(lambda0, l1, 1.0).unwrap();
                let v = criticality_value(&ep, &bp, 1.0, 128);
                assert!(v >= prev, "lambda0 = {lambda0}, lambda1 = {l1}");
                prev = v;
            }
        }
    }

    fn nodes(n: usize, bp: &BandParams) -> Vec<f64> {
        (0..n).map(|j| band_energy(&[j as f64 / n as f64], bp)).collect()
    }

    #[test]
    fn bgk_recovers_equilibrium_multipliers() {
        let bp = BandParams::default();
        let eps = nodes(64, &bp);
        for ep in [fd(), EntropyParams::new(-0.5, 0.8, 1.0).unwrap(), EntropyParams::new(0.1, 0.6, 0.0).unwrap()] {
            let f: Vec<f64> = eps.iter().map(|&e| equilibrium_at_energy(e, &ep)).collect();
            let m = bgk_multipliers(&f, &eps, ep.eta, &BgkOptions::default()).unwrap();
            assert!((m.lambda0 - ep.lambda0).abs() < 1e-10);
            assert!((m.lambda1 - ep.lambda1).abs() < 1e-10);
        }
    }

    #[test]
    fn bgk_maxwell_boltzmann_matches_bisection() {
        let bp = BandParams::default();
        let eps = nodes(64, &bp);
        let f: Vec<f64> = (0..64)
            .map(|j| {
                let p = j as f64 / 64.0;
                0.4 + 0.1 * (2.0 * PI * p).cos() + 0.05 * (4.0 * PI * p).sin()
            })
            .collect();
        let n = f.len() as f64;
        let m0 = f.iter().sum::<f64>() / n;
        let m1 = f.iter().zip(&eps).map(|(a, e)| a * e).sum::<f64>() / n;
        // mean energy of exp(l1 eps) is increasing in l1
        let mean = |l1: f64| {
            let z: f64 = eps.iter().map(|e| (l1 * e).exp()).sum();
            let ze: f64 = eps.iter().map(|e| e * (l1 * e).exp()).sum();
            ze / z
        };
        let target = m1 / m0;
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let l1 = 0.5 * (lo + hi);
        let l0 = (m0 / (eps.iter().map(|e| (l1 * e).exp()).sum::<f64>() / n)).ln();
        let m = bgk_multipliers(&f, &eps, 0.0, &BgkOptions::default()).unwrap();
        assert!((m.lambda1 - l1).abs() < 1e-9, "{} vs {l1}", m.lambda1);
        assert!((m.lambda0 - l0).abs() < 1e-9);
    }

    #[test]
    fn bgk_perturbed_profile_residuals() {
        let bp = BandParams::default();
        let eps = nodes(64, &bp);
        let ep = fd();
        let f: Vec<f64> = (0..64)
            .map(|j| {
                let p = j as f64 / 64.0;
                equilibrium_at_energy(eps[j], &ep) * (1.0 + 0.01 * (2.0 * PI * p).sin())
            })
            .collect();
        let m = bgk_multipliers(&f, &eps, 1.0, &BgkOptions::default()).unwrap();
        assert!(m.residual[0].abs() < 1e-10 && m.residual[1].abs() < 1e-10);
    }

    #[test]
    fn bgk_rejects_unrealizable_mass() {
        let eps = nodes(16, &BandParams::default());
        let f = vec![1.2; 16];
        assert!(matches!(
            bgk_multipliers(&f, &eps, 1.0, &BgkOptions::default()),
            Err(Error::NonRealizableMoments { .. })
        ));
        let f = vec![-0.1; 16];
        assert!(bgk_multipliers(&f, &eps, 1.0, &BgkOptions::default()).is_err());
    }
}
