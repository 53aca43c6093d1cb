// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use super::*;
use crate::grid::PhaseGrid;
use crate::model::{BandParams, EntropyParams, PhysicalParams};

fn problem(n: usize, u: f64, tau: f64) -> Problem {
    let grid = PhaseGrid::new(1, n, n, 1.0).unwrap();
    Problem::new(
        grid,
        EntropyParams::new(0.0, 1.0, 1.0).unwrap(),
        BandParams::default(),
        PhysicalParams::with_coupling(u, tau).unwrap(),
    )
    .unwrap()
}

/// `F + a cos(2 pi x) (1 + cos(2 pi p) / 2)`.
fn perturbed(p: &Problem, a: f64) -> PhaseGridFunction {
    let pert = PhaseGridFunction::from_fn(*p.grid(), |x, q| {
        a * (2.0 * PI * x[0]).cos() * (1.0 + 0.5 * (2.0 * PI * q[0]).cos())
    });
    p.equilibrium().add(&pert)
}

fn config(dt: f64, t_end: f64) -> SolverConfig {
    SolverConfig {
        dt,
        t_end,
        sample_every: 1,
        ..Default::default()
    }
}

#[test]
fn equilibrium_is_stationary() {
    let p = problem(16, 1.0, 0.05);
    let rec = evolve(&p, p.equilibrium(), &config(1e-3, 0.05)).unwrap();
    assert!(rec.samples.iter().all(|s| s.norm_x < 1e-12));
    let rec = evolve_bgk(&p, p.equilibrium(), &config(1e-3, 0.02)).unwrap();
    assert!(rec.samples.iter().all(|s| s.norm_x < 1e-10), "{:?}", rec.norms());
}

#[test]
fn free_transport_is_exact() {
    let p = problem(16, 0.0, f64::INFINITY);
    let f0 = perturbed(&p, 0.1);
    let t_end = 0.1;
    let rec = evolve(&p, &f0, &config(1e-3, t_end)).unwrap();
    let l2 = |f: &PhaseGridFunction| f.l2_norm();
    assert!((l2(&rec.final_state) - l2(&f0)).abs() < 1e-10 * l2(&f0));
    let bp = BandParams::default();
    let exact = PhaseGridFunction::from_fn(*p.grid(), |x, q| {
        let v = model::band_gradient(q, &bp)[0];
        let xs = x[0] - t_end * v;
        model::equilibrium(q, p.op().entropy(), &bp)
            + 0.1 * (2.0 * PI * xs).cos() * (1.0 + 0.5 * (2.0 * PI * q[0]).cos())
    });
    assert!(rec.final_state.sub(&exact).max_abs() < 1e-10);
}

#[test]
fn strang_is_second_order() {
    let p = problem(16, 1.0, 0.05);
    let f0 = perturbed(&p, 0.05);
    let run = |dt: f64| evolve(&p, &f0, &config(dt, 0.04)).unwrap().final_state;
    let (a, b, c) = (run(1e-3), run(5e-4), run(2.5e-4));
    let xn = p.op().x_norm();
    let order = (xn.norm(&a.sub(&b)) / xn.norm(&b.sub(&c))).log2();
    assert!(order >= 1.8, "{order}");
}

#[test]
fn transformed_zero_stays_zero_and_linear_part_is_the_group() {
    let p = problem(16, 1.0, 0.05);
    let zero = PhaseGridFunction::zeros(*p.grid());
    let rec = evolve_transformed(&p, &zero, &config(1e-3, 0.02)).unwrap();
    assert!(rec.final_state.sub(p.equilibrium()).max_abs() == 0.0);

    let lin = problem(16, 1.0, f64::INFINITY).linearized();
    let g0 = perturbed(&lin, 0.1).sub(lin.equilibrium());
    let t = 0.05;
    let rec = evolve_transformed(&lin, &g0, &config(1e-3, t)).unwrap();
    let g = rec.final_state.sub(lin.equilibrium());
    let oracle = lin.op().group_action(-t, &g0).unwrap();
    assert!(g.sub(&oracle).max_abs() < 1e-10);
}

#[test]
fn transformed_matches_strang() {
    let p = problem(16, 1.0, 0.05);
    let f0 = perturbed(&p, 1e-4);
    let cfg = config(2.5e-4, 0.25);
    let a = evolve(&p, &f0, &cfg).unwrap();
    let b = evolve_transformed(&p, &f0.sub(p.equilibrium()), &cfg).unwrap();
    let err = a
        .densities
        .iter()
        .zip(&b.densities)
        .map(|(x, y)| x.rho.iter().zip(&y.rho).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let fin = a.final_state.sub(&b.final_state).max_abs();
    assert!(err < 1e-8 && fin < 1e-8, "{err} {fin}");
}

#[test]
fn picard_fixed_point_and_contraction() {
    let free = problem(16, 0.0, 0.05);
    let g0 = perturbed(&free, 0.1).sub(free.equilibrium());
    let times = [0.0, 0.01, 0.02];
    let u = vec![g0.clone(); 3];
    let next = picard_step(&free, &times, &u).unwrap();
    assert!(next.iter().all(|v| v.sub(&g0).max_abs() == 0.0));

    let p = problem(16, 1.0, 0.05);
    let g0 = perturbed(&p, 1e-2).sub(p.equilibrium());
    let tau = 0.05;
    let (traj, rep) = picard_solve(&p, &g0, tau, 200, 30, 1e-13).unwrap();
    assert!(rep.max_ratio <= 0.9, "{rep:?}");
    let gs = traj.transformed(&p).unwrap();
    let rec = evolve_transformed(&p, &g0, &config(2.5e-4, tau)).unwrap();
    let last = rec.final_state.sub(p.equilibrium()).scale((1.0f64).exp());
    let xn = p.op().x_norm();
    let err = xn.norm(&gs.last().unwrap().sub(&last)) / xn.norm(&g0);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn decay_fit_recovers_rates() {
    let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.05).collect();
    let n: Vec<f64> = t.iter().map(|t| 2.0 * (-3.0 * t).exp()).collect();
    let fit = decay_fit_series(&t, &n).unwrap();
    assert!((fit.rate - 3.0).abs() < 1e-6 && (fit.c - 2.0).abs() < 1e-6 && fit.monotone);
    assert!(decay_fit_series(&t[..5], &n[..5]).is_err());

    let tau = 0.05;
    let p = problem(16, 0.0, tau);
    let mut cfg = config(1e-3, 0.3);
    cfg.sample_every = 5;
    let rec = evolve(&p, &perturbed(&p, 0.1), &cfg).unwrap();
    let fit = rec.fit.unwrap();
    assert!((fit.rate * tau - 1.0).abs() < 0.01, "{fit:?}");
}

#[test]
fn bgk_conserves_moments_and_vanishes_without_mass() {
    let p = problem(16, 1.0, 0.05);
    let f0 = perturbed(&p, 0.05);
    let dt = 1e-3;
    let mut cfg = config(dt, 0.1);
    cfg.sample_every = 20;
    let rec = evolve_bgk(&p, &f0, &cfg).unwrap();
    assert!(rec.collision_residual[0] < 1e-9 * dt && rec.collision_residual[1] < 1e-9 * dt, "{:?}", rec.collision_residual);
    let m0 = rec.samples[0].mass;
    assert!(rec.samples.iter().all(|s| (s.mass - m0).abs() < 1e-12));

    let zero = PhaseGridFunction::zeros(*p.grid());
    let (out, res) = p.bgk_collision(&zero, dt).unwrap();
    assert_eq!(out, zero);
    assert_eq!(res, [0.0, 0.0]);
}

#[test]
fn config_checks_and_resume() {
    let p = problem(16, 1.0, 0.05);
    let f0 = perturbed(&p, 1e-3);
    assert!(evolve(&p, &f0, &config(0.01, 0.1)).is_err());
    assert!(evolve(&p, &f0, &config(4e-3, 0.1)).is_err());

    let cfg = config(1e-3, 0.02);
    let whole = evolve(&p, &f0, &cfg).unwrap();
    let half = evolve(&p, &f0, &config(1e-3, 0.01)).unwrap();
    let rest = evolve_from(&p, &half.final_state, half.final_time, &cfg).unwrap();
    assert_eq!(rest.final_state, whole.final_state);
    assert_eq!(rest.samples.last(), whole.samples.last());
}

#[test]
fn threshold_formula() {
    let th = RelaxationThreshold::from_constants(0.5, 2.0, 0.1, 1).unwrap();
    let omega0 = 1.01 * 2.0 * 1.0 / 0.8f64.powi(2);
    assert!((th.tau0 - 1.0 / (omega0 + 2.0)).abs() < 1e-15);
    assert!(th.tau0 < 1.0 / (2.0 * 0.5 * 2.0));
    assert!(RelaxationThreshold::from_constants(0.5, 2.0, 0.6, 1).is_err());
}

#[test]
fn ndjson_stream_has_one_line_per_sample() {
    let p = problem(16, 1.0, 0.05);
    let rec = evolve(&p, &perturbed(&p, 1e-3), &config(1e-3, 0.005)).unwrap();
    let mut buf = Vec::new();
    rec.write_ndjson(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), rec.samples.len());
    let s: TrajectorySample = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(s, rec.samples[0]);
}
