// SPDX-License-Identifier: Apache-2.0

//! Verification suite of the linearized group on random smooth fields.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstract_system::random_smooth_field;
use crate::error::Result;
use crate::grid::{self, SpectralAxes, C64};
use crate::lingroup::LinearizedOperator;

/// One measured quantity and the tolerance it must stay below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tol,
            pass: value < tol,
        }
    }
}

pub const ANTISYMMETRY_TOL: f64 = 1e-10;
pub const ISOMETRY_TOL: f64 = 1e-8;
pub const GROUP_LAW_TOL: f64 = 1e-10;
pub const RESOLVENT_TOL: f64 = 1e-9;
pub const FREE_RESOLVENT_TOL: f64 = 1e-12;

pub const RESOLVENT_SIGMAS: [(f64, f64); 3] = [(1.0, 0.0), (1.0, 3.0), (-0.5, 1.0)];

/// Run every check on `samples` random fields; tolerances are multiplied by
/// `tol_scale`. With `U = 0` the closed-form resolvent is checked as well.
pub fn linear_suite(
    op: &LinearizedOperator,
    samples: usize,
    t_max: f64,
    tol_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CheckRecord>> {
    let grid = *op.grid();
    let xn = op.x_norm();
    let kmax = (grid.nx.min(grid.np) / 8).max(1) as i32;
    let fields: Vec<_> = (0..samples).map(|_| random_smooth_field(grid, rng, kmax)).collect();
    let times: Vec<f64> = (1..=4).map(|k| t_max * k as f64 / 4.0).collect();

    let mut anti: f64 = 0.0;
    let mut iso: f64 = 0.0;
    let mut law: f64 = 0.0;
    let mut round: f64 = 0.0;
    let mut bound: f64 = 0.0;
    let mut free: f64 = 0.0;
    for g in &fields {
        let n2 = xn.inner(g, g);
        let lg = op.apply_l(g)?;
        anti = anti.max(xn.inner(&lg, g).abs() / n2);

        let gs = grid::to_spectral(g, SpectralAxes::Spatial);
        let n = n2.sqrt();
        for &t in &times {
            let e = op.group_action_spectral(t, &gs);
            iso = iso.max((xn.norm_spectral(&e) - n).abs() / n);
            let half = op.group_action_spectral(0.5 * t, &op.group_action_spectral(0.5 * t, &gs));
            let diff = e.lincomb(1.0, &half, -1.0);
            law = law.max(xn.norm_spectral(&diff) / n);
        }

        for (re, im) in RESOLVENT_SIGMAS {
            let sigma = C64::new(re, im);
            let f = op.resolvent_spectral(sigma, &gs)?;
            let lf = op.apply_l_spectral(&f);
            let scale = gs.coeffs().iter().fold(0.0f64, |a, c| a.max(c.norm()));
            let res = (0..gs.coeffs().len())
                .map(|k| (f.coeffs()[k] * sigma + lf.coeffs()[k] - gs.coeffs()[k]).norm())
                .fold(0.0f64, f64::max);
            round = round.max(res / scale);
            bound = bound.max(xn.norm_spectral(&f) - n / re.abs());
            if op.coupling() == 0.0 {
                let grads = grid.band_gradients(op.band());
                let d = grid.d;
                let np = grid.momentum_len();
                for ix in 0..grid.spatial_len() {
                    let xi = grid.derivative_wavevector(ix);
                    for j in 0..np {
                        let a: f64 = (0..d).map(|i| xi[i] * grads[j * d + i]).sum();
                        let exact = gs.mode(ix)[j] / (sigma + C64::new(0.0, a));
                        free = free.max((f.mode(ix)[j] - exact).norm() / scale);
                    }
                }
            }
        }
    }
    let mut out = vec![
        CheckRecord::new("antisymmetry", anti, ANTISYMMETRY_TOL * tol_scale),
        CheckRecord::new("isometry", iso, ISOMETRY_TOL * tol_scale),
        CheckRecord::new("group_law", law, GROUP_LAW_TOL * tol_scale),
        CheckRecord::new("resolvent_round_trip", round, RESOLVENT_TOL * tol_scale),
        CheckRecord::new("resolvent_bound_excess", bound, RESOLVENT_TOL * tol_scale),
    ];
    if op.coupling() == 0.0 {
        out.push(CheckRecord::new("resolvent_closed_form", free, FREE_RESOLVENT_TOL * tol_scale));
    }
    Ok(out)
}
