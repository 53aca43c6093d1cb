// SPDX-License-Identifier: Apache-2.0

//! Phase-space spectral simulator and verification toolkit for the
//! semiconductor Boltzmann-Dirac-Benney equation with relaxation-time
//! collisions.

pub mod abstract_system;
pub mod error;
pub mod experiment;
pub mod gevrey;
pub mod grid;
pub mod lingroup;
pub mod model;
pub mod multiindex;
pub mod solver;

pub use error::{Error, Result};
