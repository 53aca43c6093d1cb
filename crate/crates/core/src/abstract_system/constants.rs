// SPDX-License-Identifier: Apache-2.0

//! Commutator-growth fits and the fixed-point constants derived from them.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{commutator_tower, FiniteSystem};
use crate::error::{Error, Result};
use crate::multiindex::{self, MultiIndex};

/// Default tower depth for the fits.
pub const DEFAULT_DEPTH: usize = 8;

/// Headroom applied to the fitted `C`.
pub const FIT_INFLATION: f64 = 1.05;

/// Operators `L_alpha` and generators `A_i` acting on sampled states.
pub trait CommutatorFamily: Sync {
    type State: Send + Sync;

    fn generator_count(&self) -> usize;

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> Self::State;

    /// `||L_alpha y||`.
    fn commutator_norm(&self, alpha: &[usize], y: &Self::State) -> Result<f64>;

    /// `sum_i ||A_i y||`.
    fn generator_norm_sum(&self, y: &Self::State) -> Result<f64>;

    /// An upper bound of `||L_alpha y|| / sum_i ||A_i y||` over all states, if one
    /// is available.
    fn certified_ratio(&self, _alpha: &[usize]) -> Option<f64> {
        None
    }
}

/// Fitted `(C, r)` with `||L_alpha y|| <= C alpha! r^{|alpha|} sum_i ||A_i y||`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorFit {
    pub c: f64,
    pub r: f64,
    pub depth: usize,
    /// Per total order, `max_{|alpha| = j} log(ratio_alpha / alpha!)`, `None` when
    /// every ratio of that order vanishes.
    pub envelope: Vec<Option<f64>>,
    pub certified: bool,
}

impl CommutatorFit {
    pub fn bound(&self, alpha: &[usize]) -> f64 {
        let k = multiindex::order(alpha);
        if k == 0 {
            return self.c;
        }
        self.c * multiindex::factorial(alpha) * self.r.powi(k as i32)
    }
}

/// Smallest `C r` over lines `log C + j log r` that dominate the envelope.
fn dominate(envelope: &[Option<f64>]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = envelope
        .iter()
        .enumerate()
        .filter_map(|(j, y)| y.map(|y| (j as f64, y)))
        .collect();
    if pts.is_empty() {
        return (0.0, 0.0);
    }
    if pts.iter().all(|&(j, _)| j == 0.0) {
        return (pts[0].1.exp(), 0.0);
    }
    // log(C r) at slope s is g(s) = max_j (y_j + s (1 - j)), convex and piecewise linear
    let g = |s: f64| pts.iter().map(|&(j, y)| y + s * (1.0 - j)).fold(f64::NEG_INFINITY, f64::max);
    let mut candidates = Vec::new();
    for (a, &(ja, ya)) in pts.iter().enumerate() {
        for &(jb, yb) in &pts[a + 1..] {
            candidates.push((yb - ya) / (jb - ja));
        }
    }
    // least-squares slope as a tie-break candidate
    let n = pts.len() as f64;
    let mj = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sjj: f64 = pts.iter().map(|p| (p.0 - mj).powi(2)).sum();
    if sjj > 0.0 {
        candidates.push(pts.iter().map(|p| (p.0 - mj) * (p.1 - my)).sum::<f64>() / sjj);
    }
    let has_low = pts.iter().any(|&(j, _)| j <= 1.0);
    let has_high = pts.iter().any(|&(j, _)| j >= 2.0);
    let s = if has_low && has_high {
        candidates
            .into_iter()
            .filter(|s| s.is_finite())
            .min_by(|a, b| g(*a).total_cmp(&g(*b)))
            .unwrap_or(0.0)
    } else if has_high {
        // only orders >= 2: g decreases in s, cap r at the largest candidate
        candidates.into_iter().filter(|s| s.is_finite()).fold(0.0, f64::max)
    } else {
        candidates.into_iter().filter(|s| s.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    };
    let b = pts.iter().map(|&(j, y)| y - s * j).fold(f64::NEG_INFINITY, f64::max);
    (b.exp(), s.exp())
}

fn ratios<F: CommutatorFamily>(
    family: &F,
    states: &[F::State],
    indices: &[MultiIndex],
) -> Result<Vec<f64>> {
    let denominators: Vec<f64> = states
        .par_iter()
        .map(|y| family.generator_norm_sum(y))
        .collect::<Result<_>>()?;
    indices
        .par_iter()
        .map(|alpha| {
            let mut best = family.certified_ratio(alpha).unwrap_or(0.0);
            for (y, &den) in states.iter().zip(&denominators) {
                let num = family.commutator_norm(alpha, y)?;
                if num == 0.0 {
                    continue;
                }
                if den == 0.0 {
                    return Err(Error::HypothesisViolated(format!(
                        "L_{alpha:?} y != 0 while sum_i ||A_i y|| = 0"
                    )));
                }
                best = best.max(num / den);
            }
            Ok(best)
        })
        .collect()
}

/// Fit `(C, r)` over `|alpha| <= depth`. Ratios come from `sample_count` random
/// states and, when available, from the certified bounds. The line is the
/// dominating one with the smallest `C r`, then `C` is inflated by 5%.
pub fn fit_commutators<F: CommutatorFamily>(
    family: &F,
    sample_count: usize,
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CommutatorFit> {
    let n = family.generator_count();
    let states: Vec<F::State> = (0..sample_count).map(|_| family.sample_state(rng)).collect();
    let indices = multiindex::up_to_order(n, depth);
    let values = ratios(family, &states, &indices)?;
    let mut envelope: Vec<Option<f64>> = vec![None; depth + 1];
    let mut certified = true;
    for (alpha, v) in indices.iter().zip(&values) {
        certified &= family.certified_ratio(alpha).is_some();
        if *v > 0.0 {
            let y = (v / multiindex::factorial(alpha)).ln();
            let j = multiindex::order(alpha);
            envelope[j] = Some(envelope[j].map_or(y, |e: f64| e.max(y)));
        }
    }
    let (c, r) = dominate(&envelope);
    Ok(CommutatorFit {
        c: c * FIT_INFLATION,
        r,
        depth,
        envelope,
        certified,
    })
}

/// Largest `ratio / bound` over fresh samples and `|alpha| <= fit.depth`.
pub fn validate_fit<F: CommutatorFamily>(
    family: &F,
    fit: &CommutatorFit,
    sample_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let states: Vec<F::State> = (0..sample_count).map(|_| family.sample_state(rng)).collect();
    let indices = multiindex::up_to_order(family.generator_count(), fit.depth);
    let mut worst: f64 = 0.0;
    for y in &states {
        let den = family.generator_norm_sum(y)?;
        for alpha in &indices {
            let num = family.commutator_norm(alpha, y)?;
            if num == 0.0 {
                continue;
            }
            let bound = fit.bound(alpha) * den;
            worst = worst.max(if bound > 0.0 { num / bound } else { f64::INFINITY });
        }
    }
    Ok(worst)
}

/// A finite system seen as a commutator family, with the tower cached and the
/// certified ratio `sigma_max(L_alpha Abar^+)` for the stacked generator matrix
/// `Abar`, using `sum_i ||A_i y|| >= ||Abar y||`.
pub struct FiniteFamily<'a> {
    sys: &'a FiniteSystem,
    tower: HashMap<MultiIndex, DMatrix<f64>>,
    stacked_pinv: Option<DMatrix<f64>>,
}

impl<'a> FiniteFamily<'a> {
    pub fn new(sys: &'a FiniteSystem, depth: usize) -> Self {
        let n = sys.generator_count();
        let tower = multiindex::up_to_order(n, depth)
            .into_iter()
            .map(|alpha| {
                let l = commutator_tower(sys, &alpha);
                (alpha, l)
            })
            .collect();
        let m = sys.dim();
        let mut stacked = DMatrix::zeros(n * m, m);
        for (i, a) in sys.generators().iter().enumerate() {
            stacked.view_mut((i * m, 0), (m, m)).copy_from(a);
        }
        let sv = stacked.clone().singular_values();
        let stacked_pinv = if sv.min() > 1e-12 * sv.max() {
            stacked.pseudo_inverse(0.0).ok()
        } else {
            None
        };
        Self {
            sys,
            tower,
            stacked_pinv,
        }
    }

    pub fn tower(&self, alpha: &[usize]) -> Option<&DMatrix<f64>> {
        self.tower.get(alpha)
    }
}

impl CommutatorFamily for FiniteFamily<'_> {
    type State = DVector<f64>;

    fn generator_count(&self) -> usize {
        self.sys.generator_count()
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(self.sys.dim(), |_, _| StandardNormal.sample(rng))
    }

    fn commutator_norm(&self, alpha: &[usize], y: &DVector<f64>) -> Result<f64> {
        Ok(match self.tower.get(alpha) {
            Some(l) => (l * y).norm(),
            None => (commutator_tower(self.sys, alpha) * y).norm(),
        })
    }

    fn generator_norm_sum(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(self.sys.generators().iter().map(|a| (a * y).norm()).sum())
    }

    fn certified_ratio(&self, alpha: &[usize]) -> Option<f64> {
        let pinv = self.stacked_pinv.as_ref()?;
        let l = self.tower.get(alpha)?;
        Some((l * pinv).singular_values().max())
    }
}

/// `mu_0 = n C r / (1 - nu0 r)^n`.
pub fn mu0(n: usize, c: f64, r: f64, nu0: f64) -> f64 {
    n as f64 * c * r / (1.0 - nu0 * r).powi(n as i32)
}

/// `(1/r)(1 - (n C r / omega)^{1/n})`, infinite for `r = 0`.
pub fn nu0_bound(n: usize, c: f64, r: f64, omega: f64) -> f64 {
    if r == 0.0 {
        return f64::INFINITY;
    }
    (1.0 - (n as f64 * c * r / omega).powf(1.0 / n as f64)) / r
}

/// Constants of the fixed-point argument for the transformed problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    pub c: f64,
    pub r: f64,
    pub n: usize,
    pub c_l: f64,
    pub omega: f64,
    /// `C C_L^2`, the commutator constant after conjugation by the group.
    pub c_prime: f64,
    pub mu0: f64,
    pub nu0: f64,
    pub nu0_max: f64,
    pub m0: f64,
    pub m1: f64,
    pub m0_prime: f64,
    pub m1_prime: f64,
    pub gamma: f64,
    pub r_prime: f64,
    /// `R = R' nu0`.
    pub radius: f64,
    pub epsilon: f64,
    pub c0: f64,
    pub c1: f64,
}

impl ContractionConstants {
    /// Derive every constant from a fit and the quadratic bounds `M` of the
    /// transformed problem. `gamma` in `(0, 1)` sets the Lipschitz budget,
    /// `gamma = 1/2` being the default.
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        fit: &CommutatorFit,
        n: usize,
        c_l: f64,
        omega: f64,
        nu0: Option<f64>,
        m: [f64; 2],
        m_prime: [f64; 2],
        gamma: f64,
    ) -> Result<Self> {
        let (c, r) = (fit.c, fit.r);
        let side = omega / (n as f64 * c_l * c_l);
        if c * r >= side {
            return Err(Error::HypothesisViolated(format!(
                "C r = {} must be < omega / (n C_L^2) = {side}",
                c * r
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let c_prime = c * c_l * c_l;
        let nu0_max = nu0_bound(n, c_prime, r, omega);
        let nu0 = nu0.unwrap_or(if nu0_max.is_finite() { 0.5 * nu0_max } else { 1.0 });
        if !(nu0 > 0.0 && nu0 < nu0_max) {
            return Err(Error::HypothesisViolated(format!(
                "nu0 = {nu0} must lie in (0, {nu0_max})"
            )));
        }
        let mu0 = mu0(n, c_prime, r, nu0);
        let gap = omega - mu0;
        let limit = |m0: f64, m1: f64| -> f64 {
            let a = if m0 > 0.0 { omega / (m0 * nu0) } else { f64::INFINITY };
            let b = if m1 > 0.0 { gap / m1 } else { f64::INFINITY };
            a.min(b)
        };
        let weight = |m0: f64, m1: f64| (m0 * nu0 / omega).max(m1 / gap);
        let r_prime = (0.5 * limit(m[0], m[1])).min(0.5 * gamma * limit(m_prime[0], m_prime[1]));
        let (epsilon, c0, c1) = if r_prime.is_finite() {
            (
                r_prime * (1.0 - r_prime * weight(m[0], m[1])),
                1.0 - r_prime * weight(m[0], m[1]),
                1.0 - 2.0 * r_prime * weight(m_prime[0], m_prime[1]),
            )
        } else {
            (f64::INFINITY, 1.0, 1.0)
        };
        Ok(Self {
            c,
            r,
            n,
            c_l,
            omega,
            c_prime,
            mu0,
            nu0,
            nu0_max,
            m0: m[0],
            m1: m[1],
            m0_prime: m_prime[0],
            m1_prime: m_prime[1],
            gamma,
            r_prime,
            radius: r_prime * nu0,
            epsilon,
            c0,
            c1,
        })
    }
}

/// Fit `(C, r)` on the finite system and derive the fixed-point constants with
/// `M_0 = M'_0 = 0` and `M_1 = M'_1 = 2 C_Q C_L^3` for the transformed
/// nonlinearity, `gamma = 1/2`. `nu0 = None` picks half the admissible bound.
pub fn constants_estimate(
    sys: &FiniteSystem,
    sample_count: usize,
    nu0: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<ContractionConstants> {
    let family = FiniteFamily::new(sys, DEFAULT_DEPTH);
    let fit = fit_commutators(&family, sample_count, DEFAULT_DEPTH, rng)?;
    let cq = sys.bilinear_constant()?;
    let m1 = 2.0 * cq * sys.c_l().powi(3);
    ContractionConstants::derive(
        &fit,
        sys.generator_count(),
        sys.c_l(),
        sys.omega(),
        nu0,
        [0.0, m1],
        [0.0, m1],
        0.5,
    )
}

/// Both sides of `sum_{alpha <= N} nu^|alpha|/alpha! ||[L, A^alpha] y||
/// <= n C nu r/(1 - nu r)^n sum_{alpha < N} nu^|alpha|/alpha! sum_i ||A^{alpha+e_i} y||`.
pub fn commutator_sum_check(
    sys: &FiniteSystem,
    fit: &CommutatorFit,
    nu: f64,
    big_n: &[usize],
    y: &DVector<f64>,
) -> Result<(f64, f64)> {
    let n = sys.generator_count();
    if big_n.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: big_n.len(),
        });
    }
    if nu * fit.r >= 1.0 {
        return Err(Error::HypothesisViolated(format!("nu r = {} must be < 1", nu * fit.r)));
    }
    let l = sys.l();
    let mut lhs = 0.0;
    let mut sum = 0.0;
    for alpha in multiindex::box_below(big_n) {
        let w = nu.powi(multiindex::order(&alpha) as i32) / multiindex::factorial(&alpha);
        let ay = sys.generator_power(&alpha, y);
        let lay = l * &ay;
        let aly = sys.generator_power(&alpha, &(l * y));
        lhs += w * (lay - aly).norm();
        if alpha.as_slice() != big_n {
            let s: f64 = sys.generators().iter().map(|a| (a * &ay).norm()).sum();
            sum += w * s;
        }
    }
    let rhs = n as f64 * fit.c * nu * fit.r / (1.0 - nu * fit.r).powi(n as i32) * sum;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn mu0_by_substitution() {
        assert!((mu0(1, 1.0, 0.5, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(mu0(2, 0.0, 0.5, 1.0), 0.0);
        assert_eq!(nu0_bound(1, 1.0, 0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn vanishing_operator_gives_zero_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base = super::super::random_commuting_system(&mut rng, 4, 1, 2);
        let sys = FiniteSystem::new(
            DMatrix::zeros(4, 4),
            base.generators().to_vec(),
            base.bilinear_tensor().to_vec(),
            base.xbar().clone(),
            1.0,
            1.0,
        )
        .unwrap();
        let fit = fit_commutators(&FiniteFamily::new(&sys, 4), 8, 4, &mut rng).unwrap();
        assert_eq!((fit.c, fit.r), (0.0, 0.0));
        let c = ContractionConstants::derive(&fit, 1, 1.0, 1.0, Some(0.5), [0.0, 1.0], [0.0, 1.0], 0.5).unwrap();
        assert_eq!(c.mu0, 0.0);
    }

    #[test]
    fn dominating_line_is_tight_and_dominates() {
        let env = vec![Some(0.0), Some(-1.0), Some(-1.5), Some(-3.0)];
        let (c, r) = dominate(&env);
        for (j, y) in env.iter().enumerate() {
            assert!(c.ln() + j as f64 * r.ln() >= y.unwrap() - 1e-12);
        }
        // a single point at order 0 and 1 fixes r exactly
        let (c, r) = dominate(&[Some(0.0), Some(-1.0)]);
        assert!((c - 1.0).abs() < 1e-12 && (r - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn admissible_constants_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [1, 2] {
            let (sys, c) = super::super::random_admissible(&mut rng, n).unwrap();
            assert!(c.c * c.r < c.omega / (n as f64 * c.c_l * c.c_l));
            assert!(c.mu0 < c.omega);
            assert!((c.mu0 - mu0(n, c.c * c.c_l * c.c_l, c.r, c.nu0)).abs() < 1e-14);
            assert!(c.c0 > 0.0 && c.c0 <= 1.0 && c.c1 >= 0.5 - 1e-12 && c.c1 <= 1.0);
            let family = FiniteFamily::new(&sys, DEFAULT_DEPTH);
            let fit = CommutatorFit {
                c: c.c,
                r: c.r,
                depth: DEFAULT_DEPTH,
                envelope: vec![],
                certified: true,
            };
            let slack = validate_fit(&family, &fit, 50, &mut rng).unwrap();
            assert!(slack <= FIT_INFLATION, "{slack}");
        }
    }

    #[test]
    fn commutator_sum_trivial_cases_and_random_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (sys, c) = super::super::random_admissible(&mut rng, 1).unwrap();
        let fit = CommutatorFit {
            c: c.c,
            r: c.r,
            depth: DEFAULT_DEPTH,
            envelope: vec![],
            certified: true,
        };
        let family = FiniteFamily::new(&sys, 1);
        let y = family.sample_state(&mut rng);
        assert_eq!(commutator_sum_check(&sys, &fit, 0.0, &[4], &y).unwrap(), (0.0, 0.0));
        let nu = 0.3 / c.r;
        for _ in 0..100 {
            let y = family.sample_state(&mut rng);
            let (lhs, rhs) = commutator_sum_check(&sys, &fit, nu, &[4], &y).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-9), "{lhs} > {rhs}");
        }
        // L commuting with A: the left side vanishes
        let a = sys.generators()[0].clone();
        let comm = FiniteSystem::new(a.clone() * 0.5, vec![a], sys.bilinear_tensor().to_vec(), sys.xbar().clone(), 1.0, 1.0).unwrap();
        let (lhs, _) = commutator_sum_check(&comm, &fit, nu, &[4], &y).unwrap();
        assert!(lhs < 1e-9 * y.norm());
    }
}
