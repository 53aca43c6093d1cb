// SPDX-License-Identifier: Apache-2.0

//! Experiment runner behind the `bdb` binary. Each command reads an
//! [`ExperimentConfig`], writes NDJSON/CSV outputs plus `manifest.json` into
//! the output directory and maps its result to an exit code.

pub mod config;
pub mod linear;
mod simulate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstract_system::{self, BatteryOptions, FiniteSystem};
use crate::error::{Error, Result};
use crate::gevrey::{self, NormTraceRecord};
use crate::lingroup::{penrose_margin, LinearizedOperator, PenroseGrid};
use crate::model::{self, EntropyParams};
use crate::solver::TrajectorySample;

pub use config::ExperimentConfig;
pub use linear::{linear_suite, CheckRecord};
pub use simulate::{initial_datum, SimulationSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;

/// Exit code for an error surfaced by a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::InvariantViolated(_)
        | Error::ShapeMismatch { .. }
        | Error::GridMismatch
        | Error::Snapshot(_)
        | Error::Io(_)
        | Error::NonRealizableMoments { .. } => EXIT_CONFIG,
        Error::BlowUp { .. } | Error::NanDetected { .. } => EXIT_BLOW_UP,
        _ => EXIT_CHECK_FAILURE,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Stability,
    Linear,
    Abstract,
    Norms,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Stability => "stability",
            Command::Linear => "linear",
            Command::Abstract => "abstract",
            Command::Norms => "norms",
        }
    }
}

/// What a command produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub code: i32,
    /// Failed checks or the error message.
    pub messages: Vec<String>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl Outcome {
    fn checked(outputs: Vec<String>, failures: Vec<String>) -> Self {
        Self {
            code: if failures.is_empty() { EXIT_OK } else { EXIT_CHECK_FAILURE },
            messages: failures,
            outputs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub elapsed_seconds: f64,
    pub exit_code: i32,
    pub outputs: Vec<String>,
    pub messages: Vec<String>,
}

/// Thread count from the flag, else `BDB_THREADS`, else rayon's default.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("BDB_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("BDB_THREADS: cannot parse '{v}' as a thread count"))),
        Err(_) => Ok(0),
    }
}

/// Size the global pool; `0` keeps rayon's default. A pool that already
/// exists is left alone.
pub fn init_threads(n: usize) -> usize {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    rayon::current_num_threads()
}

/// Run `command`, write its outputs and the manifest into `config.out`.
pub fn run(command: Command, config: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let out = config.out.clone();
    let mut outcome = match std::fs::create_dir_all(&out) {
        Err(e) => Err(Error::Io(e)),
        Ok(()) => match command {
            Command::Simulate => simulate::cmd_simulate(config, &out),
            Command::Stability => cmd_stability(config, &out),
            Command::Linear => cmd_linear(config, &out),
            Command::Abstract => cmd_abstract(config, &out),
            Command::Norms => cmd_norms(config, &out),
        },
    }
    .unwrap_or_else(|e| Outcome {
        code: exit_code(&e),
        messages: vec![e.to_string()],
        outputs: Vec::new(),
    });
    let manifest = Manifest {
        command: command.name().to_string(),
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        threads: rayon::current_num_threads(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        exit_code: outcome.code,
        outputs: outcome.outputs.clone(),
        messages: outcome.messages.clone(),
    };
    let written = File::create(out.join("manifest.json"))
        .map_err(Error::from)
        .and_then(|f| serde_json::to_writer_pretty(BufWriter::new(f), &manifest).map_err(Error::from));
    if let Err(e) = written {
        if outcome.code == EXIT_OK {
            outcome.code = exit_code(&e);
        }
        outcome.messages.push(e.to_string());
    }
    outcome
}

pub(crate) fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub(crate) fn write_ndjson<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the stability sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub lambda0: f64,
    pub lambda1: f64,
    pub u: f64,
    pub criticality: f64,
    pub penrose_margin: f64,
}

/// Every `(lambda0, lambda1, U)` of the sweep, in that nesting order.
pub fn stability_sweep(config: &ExperimentConfig) -> Result<Vec<StabilityRow>> {
    let bp = config.band()?;
    let s = &config.stability;
    let mut grid = PenroseGrid::default_for(config.model.d);
    grid.nodes_per_dim = s.penrose_nodes;
    let mut jobs = Vec::new();
    for &l0 in &s.lambda0 {
        for &l1 in &s.lambda1 {
            for &u in &s.u {
                jobs.push((EntropyParams::new(l0, l1, config.model.eta)?, u));
            }
        }
    }
    Ok(jobs
        .par_iter()
        .map(|(ep, u)| StabilityRow {
            lambda0: ep.lambda0,
            lambda1: ep.lambda1,
            u: *u,
            criticality: model::criticality_value(ep, &bp, *u, s.nodes),
            penrose_margin: penrose_margin(ep, &bp, *u, &grid),
        })
        .collect())
}

fn cmd_stability(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let rows = stability_sweep(config)?;
    let mut outputs = Vec::new();
    let eta = config.model.eta;
    let mut w = create(out, "criticality.csv", &mut outputs)?;
    writeln!(w, "lambda0,lambda1,eta,u,criticality")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.lambda0, r.lambda1, eta, r.u, r.criticality)?;
    }
    w.flush()?;
    let mut w = create(out, "penrose.csv", &mut outputs)?;
    writeln!(w, "lambda0,lambda1,eta,u,margin")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.lambda0, r.lambda1, eta, r.u, r.penrose_margin)?;
    }
    w.flush()?;
    Ok(Outcome::checked(outputs, Vec::new()))
}

fn cmd_linear(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let op = LinearizedOperator::new(config.phase_grid()?, config.entropy()?, config.band()?, config.model.u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let l = &config.linear;
    let checks = linear_suite(&op, l.samples, l.t_max, l.tol_scale, &mut rng)?;
    let mut outputs = Vec::new();
    write_ndjson(create(out, "linear_report.ndjson", &mut outputs)?, &checks)?;
    let failures = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("check failed: {} = {:e} (tolerance {:e})", c.name, c.value, c.tol))
        .collect();
    Ok(Outcome::checked(outputs, failures))
}

/// A two-generator system whose generators do not commute; construction
/// must be refused.
pub fn noncommuting_system() -> Result<FiniteSystem> {
    use nalgebra::{DMatrix, DVector};
    let a1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let a2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    FiniteSystem::new(
        DMatrix::zeros(2, 2),
        vec![a1, a2],
        vec![DMatrix::zeros(2, 2); 2],
        DVector::zeros(2),
        1.0,
        1.0,
    )
}

fn cmd_abstract(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    if config.abstract_.inject_noncommuting {
        noncommuting_system()?;
    }
    let opts = BatteryOptions {
        n: config.abstract_.n,
        trials: config.abstract_.trials,
        ..BatteryOptions::default()
    };
    let seeds: Vec<u64> = (0..config.abstract_.seeds as u64).map(|k| config.seed + k).collect();
    let blocks: Vec<_> = seeds
        .par_iter()
        .map(|&s| abstract_system::verification_battery(s, &opts))
        .collect::<Result<_>>()?;
    let records: Vec<_> = blocks.into_iter().flatten().collect();
    let mut outputs = Vec::new();
    let mut w = create(out, "abstract_report.ndjson", &mut outputs)?;
    abstract_system::write_report(&mut w, &records)?;
    w.flush()?;
    let failures = records
        .iter()
        .filter(|r| !r.holds())
        .map(|r| format!("inequality failed: {} (seed {}): {:e} > {:e}", r.name, r.seed, r.lhs, r.rhs))
        .collect();
    Ok(Outcome::checked(outputs, failures))
}

/// Read a trajectory NDJSON stream.
pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectorySample>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Whitespace-separated columns with a `#` header.
pub fn write_columns<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "# {}", header.join(" "))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// `Y_t` norm of `f - F` at `samples` equispaced times in `[0, t_end]`.
pub fn norm_trace(config: &ExperimentConfig, samples: usize, t_end: f64) -> Result<Vec<NormTraceRecord>> {
    let problem = simulate::problem(config)?;
    let (f0, t0) = initial_datum(config, &problem)?;
    let mut f = f0;
    let mut t = t0;
    let mut cfg = config.solver;
    cfg.sample_every = usize::MAX;
    cfg.snapshot_every = 0;
    let n = samples.max(2) - 1;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let tk = t0 + (t_end - t0) * k as f64 / n as f64;
        if tk > t {
            cfg.t_end = tk;
            f = crate::solver::evolve_from(&problem, &f, t, &cfg)?.final_state;
            t = tk;
        }
        let h = f.sub(problem.equilibrium());
        out.push(gevrey::trace_record(&h, t, &cfg.schedule, problem.op())?);
    }
    Ok(out)
}

fn cmd_norms(config: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut outputs = Vec::new();
    if let Some(path) = &config.norms.trajectory {
        let samples = read_trajectory(path)?;
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| vec![s.t, s.norm_x, s.norm_gevrey, s.nu, s.mass, s.energy])
            .collect();
        write_columns(
            create(out, "trajectory.dat", &mut outputs)?,
            &["t", "norm_x", "norm_gevrey", "nu", "mass", "energy"],
            &rows,
        )?;
        return Ok(Outcome::checked(outputs, Vec::new()));
    }
    let trace = norm_trace(config, config.norms.samples, config.norms.t_end)?;
    gevrey::write_trace(create(out, "norm_trace.ndjson", &mut outputs)?, &trace)?;
    let rows: Vec<Vec<f64>> = trace.iter().map(|r| vec![r.t, r.nu, r.value, r.shell_tail]).collect();
    write_columns(
        create(out, "norm_trace.dat", &mut outputs)?,
        &["t", "nu", "value", "shell_tail"],
        &rows,
    )?;
    Ok(Outcome::checked(outputs, Vec::new()))
}

/// Parse a config file and apply the command-line overrides.
pub fn load_config(path: Option<&Path>, out: Option<PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = out {
        cfg.out = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests;
