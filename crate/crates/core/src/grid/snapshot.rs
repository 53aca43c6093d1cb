// SPDX-License-Identifier: Apache-2.0

//! Binary snapshots of a [`PhaseGridFunction`].
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  type      field
//! 0       [u8; 8]   magic "BDBSNAP1"
//! 8       u32       format version (1)
//! 12      u32       d
//! 16      u32       Nx
//! 20      u32       Np
//! 24      f64       Lx
//! 32      f64       time
//! 40      f64 x 6   lambda0, lambda1, eta, U, tau, epsilon0
//! 88      u64       value count (Nx^d * Np^d)
//! 96      f64 x n   samples, row-major, spatial axes first
//! ```

use std::io::{Read, Write};

use super::{PhaseGrid, PhaseGridFunction};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BDBSNAP1";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub eta: f64,
    pub u: f64,
    pub tau: f64,
    pub epsilon0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub params: SnapshotParams,
    pub field: PhaseGridFunction,
}

pub fn write<W: Write>(mut w: W, snap: &Snapshot) -> Result<()> {
    let g = snap.field.grid();
    w.write_all(MAGIC)?;
    for v in [VERSION, g.d as u32, g.nx as u32, g.np as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let p = &snap.params;
    for v in [g.lx, snap.time, p.lambda0, p.lambda1, p.eta, p.u, p.tau, p.epsilon0] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(snap.field.values().len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * snap.field.values().len());
    for v in snap.field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let d = read_u32(&mut r)? as usize;
    let nx = read_u32(&mut r)? as usize;
    let np = read_u32(&mut r)? as usize;
    let lx = read_f64(&mut r)?;
    let time = read_f64(&mut r)?;
    let mut p = [0.0; 6];
    for v in &mut p {
        *v = read_f64(&mut r)?;
    }
    let grid = PhaseGrid::new(d, nx, np, lx).map_err(|e| Error::Snapshot(e.to_string()))?;
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let count = u64::from_le_bytes(b) as usize;
    if count != grid.len() {
        return Err(Error::Snapshot(format!(
            "value count {count} does not match grid size {}",
            grid.len()
        )));
    }
    let mut raw = vec![0u8; 8 * count];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let field = PhaseGridFunction::new(grid, values).map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok(Snapshot {
        time,
        params: SnapshotParams {
            lambda0: p[0],
            lambda1: p[1],
            eta: p[2],
            u: p[3],
            tau: p[4],
            epsilon0: p[5],
        },
        field,
    })
}

pub fn write_file(path: &std::path::Path, snap: &Snapshot) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write(std::io::BufWriter::new(f), snap)
}

pub fn read_file(path: &std::path::Path) -> Result<Snapshot> {
    let f = std::fs::File::open(path)?;
    read(std::io::BufReader::new(f))
}
