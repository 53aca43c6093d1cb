// SPDX-License-Identifier: Apache-2.0

// Driving the `bdb` commands from code: parse a config, run, read the
// manifest.

use bdb_core::experiment::{run, Command, ExperimentConfig, Manifest};

pub fn run_example() -> bdb_core::Result<()> {
    let dir = std::env::temp_dir().join(format!("bdb_runner_example_{}", std::process::id()));
    let mut cfg = ExperimentConfig::parse(
        "grid.nx = 16\ngrid.np = 16\nsolver.dt = 1e-3\nsolver.t_end = 0.05\nthreshold.enabled = false\nlinear.samples = 4\n",
    )?;
    cfg.out = dir.clone();
    for cmd in [Command::Linear, Command::Simulate] {
        let outcome = run(cmd, &cfg);
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        println!("{:<9} exit {}  outputs {:?}  config {}", m.command, outcome.code, m.outputs, &m.config_hash[..12]);
        assert_eq!(outcome.code, 0);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> bdb_core::Result<()> {
    run_example()
}
