// SPDX-License-Identifier: Apache-2.0

//! Verification battery over one seeded random system, reported as one record
//! per checked inequality.

use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::constants::{commutator_sum_check, validate_fit, CommutatorFit, FiniteFamily, DEFAULT_DEPTH, FIT_INFLATION};
use super::generate::{random_admissible, random_commuting_system};
use super::picard::{graded_norm, picard_solve_abstract, trajectory_distance, PicardOptions};
use super::{expansion_check, h3a_check, lipschitz_check, FiniteSystem, COMMUTATION_TOL};
use crate::error::Result;
use crate::multiindex;

/// One checked inequality `lhs <= rhs`; `margin = (rhs - lhs) / max(|lhs|, |rhs|)`,
/// zero when both sides vanish.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub seed: u64,
}

impl InequalityRecord {
    pub fn new(name: &str, lhs: f64, rhs: f64, seed: u64) -> Self {
        let scale = lhs.abs().max(rhs.abs());
        let margin = if scale == 0.0 { 0.0 } else { (rhs - lhs) / scale };
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            margin,
            seed,
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryOptions {
    /// Number of generators of the random admissible system.
    pub n: usize,
    /// Random trials per sampled inequality.
    pub trials: usize,
    /// Relative tolerance granted to sampled inequalities.
    pub rel_tol: f64,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            n: 1,
            trials: 100,
            rel_tol: 1e-9,
        }
    }
}

fn worst(name: &str, pairs: impl Iterator<Item = (f64, f64)>, rel_tol: f64, seed: u64) -> InequalityRecord {
    let mut best: Option<(f64, f64, f64)> = None;
    for (l, r) in pairs {
        let r = r * (1.0 + rel_tol);
        let ratio = if r > 0.0 { l / r } else if l > 0.0 { f64::INFINITY } else { 0.0 };
        if best.is_none_or(|b| ratio > b.2) {
            best = Some((l, r, ratio));
        }
    }
    let (l, r, _) = best.unwrap_or((0.0, 0.0, 0.0));
    InequalityRecord::new(name, l, r, seed)
}

fn normal(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| StandardNormal.sample(rng))
}

/// Run every check on the system drawn from `seed`.
pub fn verification_battery(seed: u64, opts: &BatteryOptions) -> Result<Vec<InequalityRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // commutator expansion on a polynomial family
    let poly = random_commuting_system(&mut rng, 6, 2, 3);
    let expansion = multiindex::up_to_order(2, 4)
        .iter()
        .map(|a| expansion_check(&poly, a))
        .fold(0.0, f64::max);
    out.push(InequalityRecord::new("expansion", expansion, 1e-10, seed));

    let (sys, consts) = random_admissible(&mut rng, opts.n)?;
    out.push(InequalityRecord::new("commutation", commutation_residual(&sys), COMMUTATION_TOL, seed));

    let fit = CommutatorFit {
        c: consts.c,
        r: consts.r,
        depth: DEFAULT_DEPTH,
        envelope: Vec::new(),
        certified: true,
    };
    let family = FiniteFamily::new(&sys, DEFAULT_DEPTH);
    let slack = validate_fit(&family, &fit, opts.trials, &mut rng)?;
    out.push(InequalityRecord::new("h2b_holdout", slack, FIT_INFLATION, seed));
    out.push(InequalityRecord::new(
        "h2b_side_condition",
        consts.c * consts.r,
        consts.omega / (opts.n as f64 * consts.c_l * consts.c_l),
        seed,
    ));

    let m = sys.dim();
    let nu = if consts.r > 0.0 { 0.3 / consts.r } else { 1.0 };
    let big_n = if opts.n == 1 { vec![4] } else { vec![3; opts.n] };
    let mut pairs = Vec::with_capacity(opts.trials);
    for _ in 0..opts.trials {
        pairs.push(commutator_sum_check(&sys, &fit, nu, &big_n, &normal(&mut rng, m))?);
    }
    out.push(worst("commutator_sum", pairs.into_iter(), opts.rel_tol, seed));

    let alphas = multiindex::up_to_order(opts.n, 3);
    let mut h3a = Vec::new();
    let mut h3b = Vec::new();
    for k in 0..opts.trials {
        let alpha = &alphas[k % alphas.len()];
        let x = normal(&mut rng, m);
        let y = normal(&mut rng, m);
        h3a.push(h3a_check(&sys, &x, alpha)?);
        h3b.push(lipschitz_check(&sys, &x, &y, alpha)?);
    }
    out.push(worst("h3a", h3a.into_iter(), opts.rel_tol, seed));
    out.push(worst("h3b", h3b.into_iter(), opts.rel_tol, seed));

    let t_end = 5.0 / consts.omega;
    let dt = (0.01 / consts.omega).min(t_end / 200.0);
    let start = |rng: &mut ChaCha8Rng, frac: f64| {
        let v = normal(rng, m);
        let n0 = graded_norm(&sys, &v, 0.0, consts.nu0);
        v * (frac * consts.epsilon * consts.nu0 / n0)
    };
    let u0 = start(&mut rng, 1.0);
    let w0 = start(&mut rng, 0.5);
    let popts = PicardOptions::default();
    let (a, rep) = picard_solve_abstract(&sys, &u0, &consts, t_end, dt, &popts)?;
    out.push(InequalityRecord::new(
        "contraction",
        rep.contraction_factor,
        1.0 - consts.c1 / 2.0,
        seed,
    ));
    out.push(InequalityRecord::new("transformed_bound", rep.transformed_ratio, 1.0, seed));
    let k = rep
        .decay_lhs
        .iter()
        .zip(&rep.decay_rhs)
        .enumerate()
        .max_by(|x, y| (x.1 .0 / x.1 .1).total_cmp(&(y.1 .0 / y.1 .1)))
        .map(|(k, _)| k)
        .unwrap_or(0);
    out.push(InequalityRecord::new(
        "decay",
        rep.decay_lhs[k],
        rep.decay_rhs[k] * (1.0 + 1e-6),
        seed,
    ));
    let (b, _) = picard_solve_abstract(&sys, &w0, &consts, t_end, dt, &popts)?;
    let dist = trajectory_distance(&sys, &consts, &a, &b)?;
    let init = graded_norm(&sys, &(&u0 - &w0), 0.0, consts.nu0);
    out.push(InequalityRecord::new("uniqueness", consts.c1 * dist, init * (1.0 + opts.rel_tol), seed));
    Ok(out)
}

fn commutation_residual(sys: &FiniteSystem) -> f64 {
    let a = sys.generators();
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let scale = 1.0 + a[i].norm() * a[j].norm();
            worst = worst.max((&a[i] * &a[j] - &a[j] * &a[i]).amax() / scale);
        }
    }
    worst
}

pub fn write_report<W: Write>(mut w: W, records: &[InequalityRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_and_is_deterministic() {
        for n in [1, 2] {
            let opts = BatteryOptions {
                n,
                trials: 20,
                ..Default::default()
            };
            let a = verification_battery(3, &opts).unwrap();
            for r in &a {
                assert!(r.holds(), "{r:?}");
            }
            let b = verification_battery(3, &opts).unwrap();
            let mut ba = Vec::new();
            let mut bb = Vec::new();
            write_report(&mut ba, &a).unwrap();
            write_report(&mut bb, &b).unwrap();
            assert_eq!(ba, bb);
        }
    }

    #[test]
    fn margins() {
        assert_eq!(InequalityRecord::new("x", 0.0, 0.0, 0).margin, 0.0);
        assert_eq!(InequalityRecord::new("x", 1.0, 2.0, 0).margin, 0.5);
        assert!(!InequalityRecord::new("x", 2.0, 1.0, 0).holds());
    }
}
