// SPDX-License-Identifier: Apache-2.0

use super::*;

fn small(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::parse(
        "grid.nx = 16\ngrid.np = 16\nsolver.dt = 1e-3\nsolver.t_end = 0.02\nsolver.sample_every = 1\n\
         threshold.enabled = false\nlinear.samples = 3\nstability.lambda0 = 0\nstability.lambda1 = 0, 1\n\
         stability.u = 1, 2\nstability.penrose_nodes = 128\nabstract.trials = 10\n",
    )
    .unwrap();
    c.out = dir.to_path_buf();
    c
}

#[test]
fn exit_codes() {
    assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
    assert_eq!(exit_code(&Error::InvariantViolated("x".into())), EXIT_CONFIG);
    assert_eq!(
        exit_code(&Error::BlowUp {
            t: 0.0,
            norm: 1.0,
            limit: 0.5
        }),
        EXIT_BLOW_UP
    );
    assert_eq!(exit_code(&Error::NanDetected { t: 0.0 }), EXIT_BLOW_UP);
    assert_eq!(
        exit_code(&Error::ContractionFailure {
            factor: 2.0,
            allowed: 1.0
        }),
        EXIT_CHECK_FAILURE
    );
}

#[test]
fn zero_perturbation_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.perturbation.modes.clear();
    let o = run(Command::Simulate, &c);
    assert_eq!(o.code, EXIT_OK, "{:?}", o.messages);
    let s: SimulationSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(s.stationary);
    assert!(s.max_norm < 1e-12);
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.config_hash, c.hash());
}

#[test]
fn simulate_is_deterministic_and_resumable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = small(a.path());
    let cb = small(b.path());
    assert_eq!(run(Command::Simulate, &ca).code, EXIT_OK);
    assert_eq!(run(Command::Simulate, &cb).code, EXIT_OK);
    let read = |d: &Path| std::fs::read(d.join("trajectory.ndjson")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(read_trajectory(&a.path().join("trajectory.ndjson")).unwrap().len(), 21);

    // resume from the final snapshot
    let r = tempfile::tempdir().unwrap();
    let mut cr = small(r.path());
    cr.perturbation.snapshot = Some(a.path().join("final.bin"));
    cr.solver.t_end = 0.03;
    assert_eq!(run(Command::Simulate, &cr).code, EXIT_OK);
    let s: SimulationSummary =
        serde_json::from_str(&std::fs::read_to_string(r.path().join("summary.json")).unwrap()).unwrap();
    assert!((s.t0 - 0.02).abs() < 1e-15);
    assert_eq!(s.steps, 10);

    // mismatched parameters are refused
    cr.model.u = 2.0;
    assert_eq!(run(Command::Simulate, &cr).code, EXIT_CONFIG);
}

#[test]
fn stability_rows_and_trivial_columns() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    assert_eq!(run(Command::Stability, &c).code, EXIT_OK);
    let text = std::fs::read_to_string(dir.path().join("criticality.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    let rows = stability_sweep(&c).unwrap();
    assert_eq!(rows[0].criticality, 0.0);
    assert_eq!(rows[0].penrose_margin, 1.0);
    assert!((rows[3].criticality - 2.0 * rows[2].criticality).abs() <= 1e-12 * rows[3].criticality.abs());
}

#[test]
fn linear_passes_and_forced_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    let o = run(Command::Linear, &c);
    assert_eq!(o.code, EXIT_OK, "{:?}", o.messages);
    c.linear.tol_scale = 0.0;
    let o = run(Command::Linear, &c);
    assert_eq!(o.code, EXIT_CHECK_FAILURE);
    assert!(o.messages.iter().any(|m| m.contains("antisymmetry")));
    c.model.u = 0.0;
    c.linear.tol_scale = 1.0;
    run(Command::Linear, &c);
    let text = std::fs::read_to_string(dir.path().join("linear_report.ndjson")).unwrap();
    assert!(text.contains("resolvent_closed_form"));
}

#[test]
fn abstract_report_is_reproducible_and_rejects_noncommuting() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = small(a.path());
    ca.abstract_.seeds = 2;
    let mut cb = ca.clone();
    cb.out = b.path().to_path_buf();
    assert_eq!(run(Command::Abstract, &ca).code, EXIT_OK);
    assert_eq!(run(Command::Abstract, &cb).code, EXIT_OK);
    let read = |d: &Path| std::fs::read(d.join("abstract_report.ndjson")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    ca.abstract_.inject_noncommuting = true;
    let o = run(Command::Abstract, &ca);
    assert_eq!(o.code, EXIT_CONFIG);
    assert!(o.messages[0].contains("do not commute"));
}

#[test]
fn norms_trace_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.norms.samples = 3;
    c.norms.t_end = 0.01;
    assert_eq!(run(Command::Norms, &c).code, EXIT_OK);
    let dat = std::fs::read_to_string(dir.path().join("norm_trace.dat")).unwrap();
    assert_eq!(dat.lines().count(), 4);

    assert_eq!(run(Command::Simulate, &c).code, EXIT_OK);
    c.norms.trajectory = Some(dir.path().join("trajectory.ndjson"));
    assert_eq!(run(Command::Norms, &c).code, EXIT_OK);
    let dat = std::fs::read_to_string(dir.path().join("trajectory.dat")).unwrap();
    assert_eq!(dat.lines().count(), 22);
}

#[test]
fn bad_config_is_exit_two() {
    let e = ExperimentConfig::parse("model.lamda0 = 1\n").unwrap_err();
    assert_eq!(exit_code(&e), EXIT_CONFIG);
    assert!(e.to_string().contains("model.lamda0"));
}
