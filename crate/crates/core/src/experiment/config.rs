// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration.
//!
//! One `section.key = value` per line; `#` starts a comment, blank lines are
//! ignored, every key may appear at most once and unknown keys are rejected.
//! Lists are comma separated. Perturbation modes are `k:amplitude` with the
//! wavevector components of `k` separated by `/` when `d > 1`.
//!
//! ```text
//! model.lambda1 = 1.0
//! grid.nx = 64
//! solver.scheme = strang_split
//! perturbation.modes = 1:1e-4, 2:5e-5
//! stability.u = 0.5, 1, 2
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gevrey::GevreySchedule;
use crate::grid::PhaseGrid;
use crate::model::{BandParams, EntropyParams, PhysicalParams};
use crate::solver::{Collision, Scheme, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub lambda0: f64,
    pub lambda1: f64,
    pub eta: f64,
    pub u: f64,
    pub tau: f64,
    pub epsilon0: f64,
    pub d: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSection {
    pub nx: usize,
    pub np: usize,
    pub lx: f64,
}

/// Initial datum `F + sum_k a_k cos(2 pi k . x / Lx) W(p) / max W` with
/// `W = F (1 - eta F)`, or a snapshot to resume from.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSection {
    pub modes: Vec<(Vec<i64>, f64)>,
    pub snapshot: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSection {
    pub enabled: bool,
    pub samples: usize,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardSection {
    /// Horizon of the Picard cross-check as a multiple of `tau`.
    pub horizon: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilitySection {
    pub lambda0: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub u: Vec<f64>,
    /// Quadrature nodes of the criticality integral.
    pub nodes: usize,
    /// Trapezoid nodes per momentum dimension of the Penrose scan.
    pub penrose_nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSection {
    pub samples: usize,
    pub t_max: f64,
    /// Multiplies every tolerance of the suite.
    pub tol_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbstractSection {
    pub seeds: usize,
    pub n: usize,
    pub trials: usize,
    pub inject_noncommuting: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormsSection {
    pub samples: usize,
    pub t_end: f64,
    /// Trajectory NDJSON to convert into plot columns.
    pub trajectory: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub solver: SolverConfig,
    pub perturbation: PerturbationSection,
    pub threshold: ThresholdSection,
    pub picard: PicardSection,
    pub stability: StabilitySection,
    pub linear: LinearSection,
    pub abstract_: AbstractSection,
    pub norms: NormsSection,
    pub out: PathBuf,
    pub seed: u64,
    /// Every key set in the source, in sorted order.
    pub entries: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    /// The demo run: `d = 1`, `64 x 64`, `lambda = (0, 1)`, `eta = 1`, `U = 1`,
    /// `tau = 0.05`, amplitude `1e-4` on mode 1, `T = 10 tau`.
    fn default() -> Self {
        Self {
            model: ModelSection {
                lambda0: 0.0,
                lambda1: 1.0,
                eta: 1.0,
                u: 1.0,
                tau: 0.05,
                epsilon0: 0.5,
                d: 1,
            },
            grid: GridSection {
                nx: 64,
                np: 64,
                lx: 1.0,
            },
            solver: SolverConfig::default(),
            perturbation: PerturbationSection {
                modes: vec![(vec![1], 1e-4)],
                snapshot: None,
            },
            threshold: ThresholdSection {
                enabled: true,
                samples: 8,
                depth: 6,
            },
            picard: PicardSection {
                horizon: 1.0,
                samples: 100,
            },
            stability: StabilitySection {
                lambda0: vec![-1.0, 0.0, 1.0],
                lambda1: vec![0.0, 0.5, 1.0, 2.0],
                u: vec![0.5, 1.0, 2.0],
                nodes: crate::model::DEFAULT_QUADRATURE_NODES,
                penrose_nodes: 1024,
            },
            linear: LinearSection {
                samples: 20,
                t_max: 1.0,
                tol_scale: 1.0,
            },
            abstract_: AbstractSection {
                seeds: 1,
                n: 1,
                trials: 100,
                inject_noncommuting: false,
            },
            norms: NormsSection {
                samples: 11,
                t_end: 0.5,
                trajectory: None,
            },
            out: PathBuf::from("out"),
            seed: 0,
            entries: BTreeMap::new(),
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("key '{key}': cannot parse '{value}' as {what}"))
}

fn real(key: &str, v: &str) -> Result<f64> {
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| bad(key, v, "a number")),
    }
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, v, "a nonnegative integer"))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    v.parse().map_err(|_| bad(key, v, "true or false"))
}

fn reals(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| real(key, s.trim())).collect()
}

fn modes(key: &str, v: &str) -> Result<Vec<(Vec<i64>, f64)>> {
    if v.trim().is_empty() || v.trim() == "none" {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|item| {
            let (k, a) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| bad(key, item, "k:amplitude"))?;
            let k: Vec<i64> = k
                .split('/')
                .map(|c| c.trim().parse().map_err(|_| bad(key, item, "an integer wavevector")))
                .collect::<Result<_>>()?;
            Ok((k, real(key, a.trim())?))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if cfg.entries.contains_key(key) {
                return Err(Error::Config(format!("key '{key}' appears twice")));
            }
            cfg.set(key, value)?;
            cfg.entries.insert(key.to_string(), value.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key; used by the parser and for command-line overrides.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.solver;
        match key {
            "model.lambda0" => self.model.lambda0 = real(key, v)?,
            "model.lambda1" => self.model.lambda1 = real(key, v)?,
            "model.eta" => self.model.eta = real(key, v)?,
            "model.u" => self.model.u = real(key, v)?,
            "model.tau" => self.model.tau = real(key, v)?,
            "model.epsilon0" => self.model.epsilon0 = real(key, v)?,
            "model.d" => self.model.d = count(key, v)?,
            "grid.nx" => self.grid.nx = count(key, v)?,
            "grid.np" => self.grid.np = count(key, v)?,
            "grid.lx" => self.grid.lx = real(key, v)?,
            "solver.dt" => s.dt = real(key, v)?,
            "solver.t_end" => s.t_end = real(key, v)?,
            "solver.scheme" => {
                s.scheme = match v {
                    "strang_split" => Scheme::StrangSplit,
                    "duhamel_picard" => Scheme::DuhamelPicard,
                    _ => return Err(bad(key, v, "strang_split or duhamel_picard")),
                }
            }
            "solver.collision" => {
                s.collision = match v {
                    "relaxation" => Collision::Relaxation,
                    "bgk" => Collision::Bgk,
                    _ => return Err(bad(key, v, "relaxation or bgk")),
                }
            }
            "solver.picard_max_iter" => s.picard_max_iter = count(key, v)?,
            "solver.picard_tol" => s.picard_tol = real(key, v)?,
            "solver.sample_every" => s.sample_every = count(key, v)?,
            "solver.snapshot_every" => s.snapshot_every = count(key, v)?,
            "gevrey.nu0" => s.schedule.nu0 = real(key, v)?,
            "gevrey.mu" => s.schedule.mu = real(key, v)?,
            "gevrey.delta" => s.schedule.delta = real(key, v)?,
            "gevrey.n_max" => s.schedule.n_max = count(key, v)?,
            "perturbation.modes" => self.perturbation.modes = modes(key, v)?,
            "perturbation.snapshot" => self.perturbation.snapshot = Some(PathBuf::from(v)),
            "threshold.enabled" => self.threshold.enabled = flag(key, v)?,
            "threshold.samples" => self.threshold.samples = count(key, v)?,
            "threshold.depth" => self.threshold.depth = count(key, v)?,
            "picard.horizon" => self.picard.horizon = real(key, v)?,
            "picard.samples" => self.picard.samples = count(key, v)?,
            "stability.lambda0" => self.stability.lambda0 = reals(key, v)?,
            "stability.lambda1" => self.stability.lambda1 = reals(key, v)?,
            "stability.u" => self.stability.u = reals(key, v)?,
            "stability.nodes" => self.stability.nodes = count(key, v)?,
            "stability.penrose_nodes" => self.stability.penrose_nodes = count(key, v)?,
            "linear.samples" => self.linear.samples = count(key, v)?,
            "linear.t_max" => self.linear.t_max = real(key, v)?,
            "linear.tol_scale" => self.linear.tol_scale = real(key, v)?,
            "abstract.seeds" => self.abstract_.seeds = count(key, v)?,
            "abstract.n" => self.abstract_.n = count(key, v)?,
            "abstract.trials" => self.abstract_.trials = count(key, v)?,
            "abstract.inject_noncommuting" => self.abstract_.inject_noncommuting = flag(key, v)?,
            "norms.samples" => self.norms.samples = count(key, v)?,
            "norms.t_end" => self.norms.t_end = real(key, v)?,
            "norms.trajectory" => self.norms.trajectory = Some(PathBuf::from(v)),
            "experiment.out" => self.out = PathBuf::from(v),
            "experiment.seed" => self.seed = v.parse().map_err(|_| bad(key, v, "a seed"))?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Re-run every module-level check.
    pub fn validate(&self) -> Result<()> {
        self.phase_grid()?;
        self.entropy()?;
        self.band()?;
        self.physical()?;
        let g = &self.solver.schedule;
        GevreySchedule::new(g.nu0, g.mu, g.delta, g.n_max)?;
        let d = self.model.d;
        for (k, _) in &self.perturbation.modes {
            if k.len() != d {
                return Err(Error::Config(format!(
                    "key 'perturbation.modes': wavevector {k:?} has {} components, d = {d}",
                    k.len()
                )));
            }
        }
        if self.stability.lambda0.is_empty() || self.stability.lambda1.is_empty() || self.stability.u.is_empty() {
            return Err(Error::Config("stability sweeps must be nonempty".into()));
        }
        if !(1..=2).contains(&self.abstract_.n) {
            return Err(Error::Config("key 'abstract.n' must be 1 or 2".into()));
        }
        if self.norms.samples < 1 || self.picard.samples < 1 || self.linear.samples < 1 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        Ok(())
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(self.model.d, self.grid.nx, self.grid.np, self.grid.lx)
    }

    pub fn entropy(&self) -> Result<EntropyParams> {
        EntropyParams::new(self.model.lambda0, self.model.lambda1, self.model.eta)
    }

    pub fn band(&self) -> Result<BandParams> {
        BandParams::new(self.model.epsilon0, self.model.d)
    }

    pub fn physical(&self) -> Result<PhysicalParams> {
        PhysicalParams::with_coupling(self.model.u, self.model.tau)
    }

    /// Canonical `key = value` text of the explicitly set keys.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`ExperimentConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let cfg = ExperimentConfig::parse(
            "# demo\nmodel.tau = 0.1  # relaxation\n\ngrid.nx = 32\nperturbation.modes = 1:1e-4, 3:2e-5\nstability.u = 1, 2\nsolver.scheme = duhamel_picard\n",
        )
        .unwrap();
        assert_eq!(cfg.model.tau, 0.1);
        assert_eq!(cfg.grid.nx, 32);
        assert_eq!(cfg.perturbation.modes, vec![(vec![1], 1e-4), (vec![3], 2e-5)]);
        assert_eq!(cfg.stability.u, vec![1.0, 2.0]);
        assert_eq!(cfg.solver.scheme, Scheme::DuhamelPicard);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        let e = ExperimentConfig::parse("model.tua = 1\n").unwrap_err().to_string();
        assert!(e.contains("model.tua"), "{e}");
        assert!(ExperimentConfig::parse("grid.nx = 32\ngrid.nx = 64\n").is_err());
        assert!(ExperimentConfig::parse("grid.nx = 7\n").is_err());
        assert!(ExperimentConfig::parse("model.lambda1 = -1\n").is_err());
        assert!(ExperimentConfig::parse("model.tau\n").is_err());
        assert!(ExperimentConfig::parse("perturbation.modes = 1/2:1e-3\n").is_err());
    }

    #[test]
    fn hash_ignores_order_and_comments() {
        let a = ExperimentConfig::parse("grid.nx = 32\nmodel.u = 2\n").unwrap();
        let b = ExperimentConfig::parse("# x\nmodel.u = 2\ngrid.nx = 32\n").unwrap();
        let c = ExperimentConfig::parse("model.u = 3\ngrid.nx = 32\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
