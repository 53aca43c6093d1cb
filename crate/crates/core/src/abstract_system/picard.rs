// SPDX-License-Identifier: Apache-2.0

//! Picard iteration of `u(t) = u0 + int_0^t Q_{sL}(u(s)) ds` on a sampled
//! interval, with `Q_{sL}(u) = e^{sL} Q(e^{-sL} u, e^{-sL} u)`, and the norm
//! bookkeeping of the shrinking-radius space.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constants::ContractionConstants;
use super::FiniteSystem;
use crate::error::{Error, Result};
use crate::multiindex;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// Stop when the sup distance of successive iterates drops below
    /// `tol (1 + sup |u|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Allowed excess of the measured contraction factor over `1 - C_1`;
    /// `None` means `C_1 / 2`.
    pub slack: Option<f64>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 80,
            slack: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AbstractTrajectory {
    pub times: Vec<f64>,
    /// Transformed state `u(t)`.
    pub u: Vec<DVector<f64>>,
    /// `x(t) = xbar + e^{-tL} u(t)`.
    pub x: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub iterations: usize,
    pub contraction_factor: f64,
    pub contraction_allowed: f64,
    /// `||u||_{nu, omega}`.
    pub solution_norm: f64,
    pub initial_norm: f64,
    /// `max_t ||u(t)||_{X_t^{nu e^{-omega t}}} / (2 eps nu)`.
    pub transformed_ratio: f64,
    /// `||x(t) - xbar||_{X_0^{nu e^{-omega t}}}` on the samples.
    pub decay_lhs: Vec<f64>,
    /// `2 C_L eps nu e^{-omega t}` on the samples.
    pub decay_rhs: Vec<f64>,
    pub decay_ratio: f64,
}

/// Group matrices `e^{tL}`, `e^{-tL}` on a sample grid.
pub(crate) struct SampledGroup {
    pub times: Vec<f64>,
    pub plus: Vec<DMatrix<f64>>,
    pub minus: Vec<DMatrix<f64>>,
}

impl SampledGroup {
    pub fn new(sys: &FiniteSystem, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > 0.0 && dt > 0.0) {
            return Err(Error::InvalidParameter("T and dt must be positive".into()));
        }
        let steps = (t_end / dt).ceil() as usize;
        let h = t_end / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
        let plus: Vec<DMatrix<f64>> = times.par_iter().map(|&t| sys.group(t)).collect();
        let minus: Vec<DMatrix<f64>> = times.par_iter().map(|&t| sys.group(-t)).collect();
        Ok(Self { times, plus, minus })
    }
}

/// Truncation order for `sum_alpha nu^|alpha|/alpha! ||...||`, from
/// `(nu sum_i |A_i|)^J / J! * kappa < 1e-17` with `kappa` bounding the
/// conjugation.
pub(crate) fn truncation_order(sys: &FiniteSystem, nu: f64) -> usize {
    let a: f64 = sys.generators().iter().map(|ai| ai.clone().singular_values().max()).sum();
    let x = nu * a;
    let kappa = sys.c_l().powi(2) * 1e17;
    let mut term = 1.0;
    for j in 1..200 {
        term *= x / j as f64;
        if term * kappa < 1.0 && j as f64 > x {
            return j;
        }
    }
    200
}

/// `(||u||_{X_t^nu}, [||A_{tL}^{e_i} u||_{X_t^nu}]_i)` with `v = e^{-tL} u` and
/// `conj = e^{tL}`; `conj = None` evaluates the untransformed norm of `v`.
pub(crate) fn graded_norms(
    sys: &FiniteSystem,
    v: &DVector<f64>,
    conj: Option<&DMatrix<f64>>,
    nu: f64,
    order: usize,
) -> (f64, Vec<f64>) {
    let n = sys.generator_count();
    let indices = multiindex::up_to_order(n, order + 1);
    let mut table: std::collections::HashMap<Vec<usize>, DVector<f64>> =
        std::collections::HashMap::with_capacity(indices.len());
    let mut norms = std::collections::HashMap::with_capacity(indices.len());
    for alpha in &indices {
        let w = match alpha.iter().position(|&a| a > 0) {
            None => v.clone(),
            Some(i) => {
                let prev = multiindex::sub(alpha, &multiindex::unit(n, i));
                &sys.generators()[i] * &table[&prev]
            }
        };
        let nrm = match conj {
            Some(g) => (g * &w).norm(),
            None => w.norm(),
        };
        norms.insert(alpha.clone(), nrm);
        table.insert(alpha.clone(), w);
    }
    let mut base = 0.0;
    let mut shifted = vec![0.0; n];
    for alpha in multiindex::up_to_order(n, order) {
        let w = nu.powi(multiindex::order(&alpha) as i32) / multiindex::factorial(&alpha);
        base += w * norms[&alpha];
        for (i, s) in shifted.iter_mut().enumerate() {
            *s += w * norms[&multiindex::add(&alpha, &multiindex::unit(n, i))];
        }
    }
    (base, shifted)
}

/// `||y||_{X_t^nu} = sum_alpha nu^|alpha|/alpha! ||e^{tL} A^alpha e^{-tL} y||`.
pub fn graded_norm(sys: &FiniteSystem, y: &DVector<f64>, t: f64, nu: f64) -> f64 {
    let order = truncation_order(sys, nu);
    if t == 0.0 {
        return graded_norms(sys, y, None, nu, order).0;
    }
    let v = sys.group(-t) * y;
    graded_norms(sys, &v, Some(&sys.group(t)), nu, order).0
}

/// `sup_t (||w(t)||_{X_t^{nu(t)}} + (omega - mu0) sum_i int_0^t nu(s)
/// ||A_{sL}^{e_i} w(s)||_{X_s^{nu(s)}} ds)` with `nu(t) = nu e^{-omega t}`,
/// the integral by the trapezoid rule.
pub(crate) fn trajectory_norm(
    sys: &FiniteSystem,
    group: &SampledGroup,
    w: &[DVector<f64>],
    nu: f64,
    consts: &ContractionConstants,
    order: usize,
) -> f64 {
    let omega = consts.omega;
    let parts: Vec<(f64, f64)> = group
        .times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let nut = nu * (-omega * t).exp();
            let v = &group.minus[k] * &w[k];
            let (base, shifted) = graded_norms(sys, &v, Some(&group.plus[k]), nut, order);
            (base, nut * shifted.iter().sum::<f64>())
        })
        .collect();
    let mut integral = 0.0;
    let mut best = parts[0].0;
    for k in 1..parts.len() {
        let h = group.times[k] - group.times[k - 1];
        integral += 0.5 * h * (parts[k - 1].1 + parts[k].1);
        best = best.max(parts[k].0 + (omega - consts.mu0) * integral);
    }
    best
}

fn picard_map(sys: &FiniteSystem, group: &SampledGroup, u0: &DVector<f64>, u: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let rhs: Vec<DVector<f64>> = u
        .par_iter()
        .enumerate()
        .map(|(k, uk)| {
            let y = &group.minus[k] * uk;
            &group.plus[k] * sys.bilinear(&y, &y)
        })
        .collect();
    let mut out = Vec::with_capacity(u.len());
    out.push(u0.clone());
    let mut acc = u0.clone();
    for k in 1..u.len() {
        let h = group.times[k] - group.times[k - 1];
        acc += (&rhs[k - 1] + &rhs[k]) * (0.5 * h);
        out.push(acc.clone());
    }
    out
}

fn sup_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Solve the transformed problem by Picard iteration from `u^0 = u0` on
/// `[0, T]` with samples spaced at most `dt`, using `nu = consts.nu0`.
///
/// Checks the contraction factor against `1 - C_1 + slack`, and reports the
/// transformed bound `||u(t)|| <= 2 eps nu` and the decay bound
/// `||x(t) - xbar||_{X_0^{nu e^{-omega t}}} <= 2 C_L eps nu e^{-omega t}`.
pub fn picard_solve_abstract(
    sys: &FiniteSystem,
    u0: &DVector<f64>,
    consts: &ContractionConstants,
    t_end: f64,
    dt: f64,
    opts: &PicardOptions,
) -> Result<(AbstractTrajectory, PicardReport)> {
    let nu = consts.nu0;
    let order = truncation_order(sys, nu);
    let initial_norm = graded_norms(sys, u0, None, nu, order).0;
    if initial_norm > consts.epsilon * nu * (1.0 + 1e-12) {
        return Err(Error::HypothesisViolated(format!(
            "||u0||_(X_0^nu) = {initial_norm} exceeds eps nu = {}",
            consts.epsilon * nu
        )));
    }
    let group = SampledGroup::new(sys, t_end, dt)?;
    let allowed = 1.0 - consts.c1 + opts.slack.unwrap_or(0.5 * consts.c1);

    let mut u = vec![u0.clone(); group.times.len()];
    let mut prev_gap: Option<f64> = None;
    let mut factor: f64 = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut gaps = Vec::new();
    while iterations < opts.max_iter {
        iterations += 1;
        let next = picard_map(sys, &group, u0, &u);
        let diff: Vec<DVector<f64>> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let sup = sup_distance(&next, &u);
        let scale = 1.0 + next.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let gap = trajectory_norm(sys, &group, &diff, nu, consts, order);
        gaps.push(gap);
        if let Some(p) = prev_gap {
            // ratios are meaningful only above round-off
            if p > 1e-11 * initial_norm.max(1e-300) {
                factor = factor.max(gap / p);
            }
        }
        prev_gap = Some(gap);
        u = next;
        if sup <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged || factor > allowed {
        return Err(Error::ContractionFailure { factor, allowed });
    }

    let solution_norm = trajectory_norm(sys, &group, &u, nu, consts, order);
    let x: Vec<DVector<f64>> = u
        .iter()
        .zip(&group.minus)
        .map(|(uk, g)| sys.xbar() + g * uk)
        .collect();
    let omega = consts.omega;
    let per_sample: Vec<(f64, f64)> = group
        .times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let nut = nu * (-omega * t).exp();
            let v = &group.minus[k] * &u[k];
            let transformed = graded_norms(sys, &v, Some(&group.plus[k]), nut, order).0;
            let lhs = graded_norms(sys, &(&x[k] - sys.xbar()), None, nut, order).0;
            (transformed, lhs)
        })
        .collect();
    let two_eps_nu = 2.0 * consts.epsilon * nu;
    let transformed_ratio = per_sample.iter().map(|p| p.0 / two_eps_nu).fold(0.0, f64::max);
    let decay_lhs: Vec<f64> = per_sample.iter().map(|p| p.1).collect();
    let decay_rhs: Vec<f64> = group
        .times
        .iter()
        .map(|&t| consts.c_l * two_eps_nu * (-omega * t).exp())
        .collect();
    let decay_ratio = decay_lhs
        .iter()
        .zip(&decay_rhs)
        .map(|(l, r)| l / r)
        .fold(0.0, f64::max);
    let report = PicardReport {
        iterations,
        contraction_factor: factor,
        contraction_allowed: allowed,
        solution_norm,
        initial_norm,
        transformed_ratio,
        decay_lhs,
        decay_rhs,
        decay_ratio,
    };
    Ok((
        AbstractTrajectory {
            times: group.times,
            u,
            x,
        },
        report,
    ))
}

/// `||u - w||_{nu, omega}` for two trajectories on the same samples.
pub fn trajectory_distance(
    sys: &FiniteSystem,
    consts: &ContractionConstants,
    a: &AbstractTrajectory,
    b: &AbstractTrajectory,
) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::GridMismatch);
    }
    let t_end = *a.times.last().unwrap();
    let dt = if a.times.len() > 1 { a.times[1] } else { t_end };
    let group = SampledGroup::new(sys, t_end, dt)?;
    let diff: Vec<DVector<f64>> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    let order = truncation_order(sys, consts.nu0);
    Ok(trajectory_norm(sys, &group, &diff, consts.nu0, consts, order))
}

/// Classical RK4 on `d_t x = -L(x - xbar) + Q(x - xbar, x - xbar)`, returning
/// the state at `t = k * dt` for `k = 0..=steps`.
pub fn rk4_reference(sys: &FiniteSystem, x0: &DVector<f64>, dt: f64, steps: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    out.push(x.clone());
    for _ in 0..steps {
        let k1 = sys.vector_field(&x);
        let k2 = sys.vector_field(&(&x + &k1 * (0.5 * dt)));
        let k3 = sys.vector_field(&(&x + &k2 * (0.5 * dt)));
        let k4 = sys.vector_field(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(x.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstract_system::{constants_estimate, random_admissible};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn admissible_start(sys: &FiniteSystem, c: &ContractionConstants, rng: &mut ChaCha8Rng, frac: f64) -> DVector<f64> {
        let v = DVector::from_fn(sys.dim(), |_, _| StandardNormal.sample(rng));
        let n = graded_norm(sys, &v, 0.0, c.nu0);
        v * (frac * c.epsilon * c.nu0 / n)
    }

    #[test]
    fn graded_norm_at_zero_radius_is_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (sys, _) = random_admissible(&mut rng, 1).unwrap();
        let y = DVector::from_fn(sys.dim(), |_, _| StandardNormal.sample(&mut rng));
        assert!((graded_norm(&sys, &y, 0.0, 0.0) - y.norm()).abs() < 1e-14 * y.norm());
        // an eigenvector of A with eigenvalue k has norm e^{nu k} |y| at t = 0
        let a = &sys.generators()[0];
        let eig = a.clone().complex_eigenvalues();
        let k = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let shifted = a - DMatrix::identity(sys.dim(), sys.dim()) * k;
        let svd = shifted.svd(true, true);
        let (j, _) = svd.singular_values.argmin();
        let e = svd.v_t.unwrap().row(j).transpose();
        let nu = 0.2;
        let got = graded_norm(&sys, &e, 0.0, nu);
        assert!((got - (nu * k).exp() * e.norm()).abs() < 1e-9 * got);
    }

    #[test]
    fn zero_nonlinearity_is_fixed_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (sys, _) = random_admissible(&mut rng, 1).unwrap();
        let m = sys.dim();
        let free = FiniteSystem::new(
            sys.l().clone(),
            sys.generators().to_vec(),
            vec![DMatrix::zeros(m, m); m],
            sys.xbar().clone(),
            sys.c_l(),
            sys.omega(),
        )
        .unwrap();
        let c = constants_estimate(&free, 8, None, &mut rng).unwrap();
        let u0 = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let (traj, rep) = picard_solve_abstract(&free, &u0, &c, 1.0, 0.05, &PicardOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(traj.u.iter().all(|u| (u - &u0).amax() == 0.0));
    }

    #[test]
    fn matches_high_resolution_ode() {
        // m = 2, n = 1, A = diag(1, 2), L = omega I + kappa J, Q(e1, e1) = c e2
        let omega = 1.0;
        let l = DMatrix::from_row_slice(2, 2, &[omega, 0.3, -0.3, omega]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let mut q1 = DMatrix::zeros(2, 2);
        q1[(0, 0)] = 1.5;
        let q = vec![DMatrix::zeros(2, 2), q1];
        let xbar = DVector::from_vec(vec![0.4, -0.2]);
        let sys = FiniteSystem::new(l, vec![a], q, xbar, 1.0, omega).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = constants_estimate(&sys, 8, None, &mut rng).unwrap();
        let u0 = admissible_start(&sys, &c, &mut rng, 0.9);
        let t_end = 5.0 / omega;
        let dt = 1e-3;
        let (traj, _) = picard_solve_abstract(&sys, &u0, &c, t_end, dt, &PicardOptions::default()).unwrap();
        let x0 = sys.xbar() + &u0;
        let steps = traj.times.len() - 1;
        let fine = rk4_reference(&sys, &x0, t_end / (100 * steps) as f64, 100 * steps);
        let err = traj
            .x
            .iter()
            .enumerate()
            .map(|(k, x)| (x - &fine[100 * k]).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn decay_bound_and_uniqueness_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [1, 2] {
            let (sys, c) = random_admissible(&mut rng, n).unwrap();
            let t_end = 5.0 / c.omega;
            let dt = (0.01 / c.omega).min(t_end / 200.0);
            let u0 = admissible_start(&sys, &c, &mut rng, 1.0);
            let w0 = admissible_start(&sys, &c, &mut rng, 0.5);
            let (a, rep) = picard_solve_abstract(&sys, &u0, &c, t_end, dt, &PicardOptions::default()).unwrap();
            assert!(rep.contraction_factor <= 1.0 - c.c1 / 2.0);
            assert!(rep.decay_ratio <= 1.0 + 1e-6, "{}", rep.decay_ratio);
            assert!(rep.transformed_ratio <= 1.0);
            assert!(rep.solution_norm <= c.radius * (1.0 + 1e-9), "{} {} {:?}", rep.solution_norm, rep.initial_norm, c);
            let (b, _) = picard_solve_abstract(&sys, &w0, &c, t_end, dt, &PicardOptions::default()).unwrap();
            let dist = trajectory_distance(&sys, &c, &a, &b).unwrap();
            let init = graded_norm(&sys, &(&u0 - &w0), 0.0, c.nu0);
            assert!(c.c1 * dist <= init * (1.0 + 1e-9));
        }
    }

    #[test]
    fn inadmissible_start_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (sys, c) = random_admissible(&mut rng, 1).unwrap();
        let u0 = admissible_start(&sys, &c, &mut rng, 2.0);
        let err = picard_solve_abstract(&sys, &u0, &c, 1.0, 0.01, &PicardOptions::default()).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)));
    }
}
