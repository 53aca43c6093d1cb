// SPDX-License-Identifier: Apache-2.0

//! Periodic phase-space discretization.
//!
//! Samples live on the tensor grid `T_{Lx}^d x T_1^d`, stored row-major with
//! the spatial axes first: `index = ix * Np^d + jp`, where `ix` and `jp` are the
//! flattened spatial and momentum indices (last axis fastest in each block).
//!
//! Fourier coefficients use the standard FFT mode order along each axis
//! (`0, 1, ..., N/2 - 1, -N/2, ..., -1`) and the forward transform carries the
//! `1/N` factor, so a constant function maps to a zero-mode coefficient equal
//! to the constant and `mean |f|^2 = sum |c|^2`.
//!
//! Spectral derivatives of odd order annihilate the Nyquist mode so that
//! derivatives of real data stay real.

mod fft;
pub mod snapshot;

use std::f64::consts::PI;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::model::{self, BandParams, EntropyParams};
use crate::multiindex;

pub use fft::transform_axes;

pub type C64 = Complex<f64>;

/// Largest total derivative order accepted by [`spectral_derivative`].
pub const MAX_DERIVATIVE_ORDER: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseGrid {
    pub d: usize,
    pub nx: usize,
    pub np: usize,
    pub lx: f64,
}

impl PhaseGrid {
    pub fn new(d: usize, nx: usize, np: usize, lx: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension {d} not in 1..=3")));
        }
        for (name, n) in [("Nx", nx), ("Np", np)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be even and >= 8, got {n}"
                )));
            }
        }
        if !(lx > 0.0 && lx.is_finite()) {
            return Err(Error::InvalidParameter(format!("Lx must be positive, got {lx}")));
        }
        Ok(Self { d, nx, np, lx })
    }

    pub fn spatial_len(&self) -> usize {
        self.nx.pow(self.d as u32)
    }

    pub fn momentum_len(&self) -> usize {
        self.np.pow(self.d as u32)
    }

    pub fn len(&self) -> usize {
        self.spatial_len() * self.momentum_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis lengths of the full tensor: `d` spatial axes, then `d` momentum axes.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.nx; self.d];
        s.extend(std::iter::repeat_n(self.np, self.d));
        s
    }

    pub fn spatial_axes(&self) -> Vec<usize> {
        (0..self.d).collect()
    }

    pub fn momentum_axes(&self) -> Vec<usize> {
        (self.d..2 * self.d).collect()
    }

    /// Quadrature weight of one spatial cell, `(Lx / Nx)^d`.
    pub fn cell_volume(&self) -> f64 {
        (self.lx / self.nx as f64).powi(self.d as i32)
    }

    /// Spatial volume `Lx^d`.
    pub fn spatial_volume(&self) -> f64 {
        self.lx.powi(self.d as i32)
    }

    fn unflatten(&self, mut flat: usize, n: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        for axis in (0..self.d).rev() {
            idx[axis] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn spatial_index(&self, flat: usize) -> Vec<usize> {
        self.unflatten(flat, self.nx)
    }

    pub fn momentum_index(&self, flat: usize) -> Vec<usize> {
        self.unflatten(flat, self.np)
    }

    pub fn spatial_point(&self, flat: usize) -> Vec<f64> {
        let h = self.lx / self.nx as f64;
        self.spatial_index(flat).into_iter().map(|i| i as f64 * h).collect()
    }

    pub fn momentum_point(&self, flat: usize) -> Vec<f64> {
        let h = 1.0 / self.np as f64;
        self.momentum_index(flat).into_iter().map(|i| i as f64 * h).collect()
    }

    /// Integer wavenumbers of a flattened spatial mode.
    pub fn spatial_mode(&self, flat: usize) -> Vec<i64> {
        self.spatial_index(flat)
            .into_iter()
            .map(|j| wavenumber(j, self.nx))
            .collect()
    }

    /// `xi = (2 pi / Lx) k` for a flattened spatial mode.
    pub fn wavevector(&self, flat: usize) -> Vec<f64> {
        let s = 2.0 * PI / self.lx;
        self.spatial_mode(flat).into_iter().map(|k| s * k as f64).collect()
    }

    /// Wavevector seen by a first derivative: the Nyquist component is zero.
    pub fn derivative_wavevector(&self, flat: usize) -> Vec<f64> {
        let s = 2.0 * PI / self.lx;
        self.spatial_index(flat)
            .into_iter()
            .map(|j| {
                if j == self.nx / 2 {
                    0.0
                } else {
                    s * wavenumber(j, self.nx) as f64
                }
            })
            .collect()
    }

    /// Band energy at every momentum node.
    pub fn band_energies(&self, bp: &BandParams) -> Vec<f64> {
        (0..self.momentum_len())
            .map(|j| model::band_energy(&self.momentum_point(j), bp))
            .collect()
    }

    /// Band gradient at every momentum node, `d` entries per node.
    pub fn band_gradients(&self, bp: &BandParams) -> Vec<f64> {
        (0..self.momentum_len())
            .flat_map(|j| model::band_gradient(&self.momentum_point(j), bp))
            .collect()
    }

    /// Analytic equilibrium gradient at every momentum node, `d` entries per node.
    pub fn equilibrium_gradients(&self, ep: &EntropyParams, bp: &BandParams) -> Vec<f64> {
        (0..self.momentum_len())
            .flat_map(|j| model::equilibrium_gradient(&self.momentum_point(j), ep, bp))
            .collect()
    }

    /// `1 / (F (1 - eta F))` at every momentum node.
    pub fn inverse_weights(&self, ep: &EntropyParams, bp: &BandParams) -> Result<Vec<f64>> {
        (0..self.momentum_len())
            .map(|j| model::equilibrium_weight(&self.momentum_point(j), ep, bp).map(|w| w.inverse))
            .collect()
    }

    /// The equilibrium `F_lambda(p)` as an `x`-independent grid function.
    pub fn equilibrium(&self, ep: &EntropyParams, bp: &BandParams) -> PhaseGridFunction {
        let profile: Vec<f64> = (0..self.momentum_len())
            .map(|j| model::equilibrium(&self.momentum_point(j), ep, bp))
            .collect();
        PhaseGridFunction::from_momentum_profile(*self, &profile)
    }
}

impl Default for PhaseGrid {
    /// Desk-scale default: `d = 1`, `Nx = Np = 64`, `Lx = 1`.
    fn default() -> Self {
        Self {
            d: 1,
            nx: 64,
            np: 64,
            lx: 1.0,
        }
    }
}

/// Signed wavenumber of FFT index `j` on an axis of length `n`.
#[inline]
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Real samples of a microscopic density on a [`PhaseGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGridFunction {
    grid: PhaseGrid,
    values: Vec<f64>,
}

impl PhaseGridFunction {
    pub fn new(grid: PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample at index {pos}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: PhaseGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Sample `f(x, p)` at every node.
    pub fn from_fn<F: FnMut(&[f64], &[f64]) -> f64>(grid: PhaseGrid, mut f: F) -> Self {
        let np = grid.momentum_len();
        let ps: Vec<Vec<f64>> = (0..np).map(|j| grid.momentum_point(j)).collect();
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.spatial_len() {
            let x = grid.spatial_point(ix);
            for p in &ps {
                values.push(f(&x, p));
            }
        }
        Self { grid, values }
    }

    /// Repeat a momentum profile at every spatial node.
    pub fn from_momentum_profile(grid: PhaseGrid, profile: &[f64]) -> Self {
        assert_eq!(profile.len(), grid.momentum_len());
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.spatial_len() {
            values.extend_from_slice(profile);
        }
        Self { grid, values }
    }

    pub(crate) fn from_parts(grid: PhaseGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Momentum profile at spatial node `ix`.
    pub fn row(&self, ix: usize) -> &[f64] {
        let n = self.grid.momentum_len();
        &self.values[ix * n..(ix + 1) * n]
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Plain `L^2(dx dp)` norm by trapezoid quadrature.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.cell_volume() / self.grid.momentum_len() as f64;
        (w * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Which axes of a [`SpectralField`] are in Fourier space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralAxes {
    /// Fourier in `x`, nodal in `p`: `f_hat(xi, p)`.
    Spatial,
    /// Fourier in both `x` and `p`.
    PhaseSpace,
}

/// Complex Fourier coefficients of a grid function, same flat layout as the
/// physical samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: PhaseGrid,
    axes: SpectralAxes,
    coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn new(grid: PhaseGrid, axes: SpectralAxes, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, axes, coeffs })
    }

    pub fn zeros(grid: PhaseGrid, axes: SpectralAxes) -> Self {
        Self {
            grid,
            axes,
            coeffs: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn axes(&self) -> SpectralAxes {
        self.axes
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    /// Coefficient block of spatial mode `ix` (length `Np^d`).
    pub fn mode(&self, ix: usize) -> &[C64] {
        let n = self.grid.momentum_len();
        &self.coeffs[ix * n..(ix + 1) * n]
    }

    pub fn mode_mut(&mut self, ix: usize) -> &mut [C64] {
        let n = self.grid.momentum_len();
        &mut self.coeffs[ix * n..(ix + 1) * n]
    }

    fn transformed_axes(&self) -> Vec<usize> {
        match self.axes {
            SpectralAxes::Spatial => self.grid.spatial_axes(),
            SpectralAxes::PhaseSpace => (0..2 * self.grid.d).collect(),
        }
    }

    /// `d_x^alpha d_p^beta`, staying in the same representation.
    pub fn derivative(&self, alpha: &[usize], beta: &[usize]) -> Result<SpectralField> {
        check_orders(&self.grid, alpha, beta, MAX_DERIVATIVE_ORDER)?;
        let grid = self.grid;
        let shape = grid.shape();
        let mut coeffs = self.coeffs.clone();
        let need_p = beta.iter().any(|&b| b > 0) && self.axes == SpectralAxes::Spatial;
        if need_p {
            transform_axes(&mut coeffs, &shape, &grid.momentum_axes(), false);
        }
        let mut orders = alpha.to_vec();
        orders.extend_from_slice(beta);
        let scales: Vec<f64> = (0..2 * grid.d)
            .map(|a| if a < grid.d { 2.0 * PI / grid.lx } else { 2.0 * PI })
            .collect();
        apply_derivative_multipliers(&mut coeffs, &shape, &orders, &scales);
        if need_p {
            transform_axes(&mut coeffs, &shape, &grid.momentum_axes(), true);
        }
        Ok(SpectralField {
            grid,
            axes: self.axes,
            coeffs,
        })
    }

    /// Change representation, transforming only the momentum axes.
    pub fn to_axes(&self, axes: SpectralAxes) -> SpectralField {
        if axes == self.axes {
            return self.clone();
        }
        let mut coeffs = self.coeffs.clone();
        let inverse = axes == SpectralAxes::Spatial;
        transform_axes(&mut coeffs, &self.grid.shape(), &self.grid.momentum_axes(), inverse);
        SpectralField {
            grid: self.grid,
            axes,
            coeffs,
        }
    }

    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.grid, other.grid);
        assert_eq!(self.axes, other.axes);
        Self {
            grid: self.grid,
            axes: self.axes,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| x * a + y * b)
                .collect(),
        }
    }
}

fn check_orders(grid: &PhaseGrid, alpha: &[usize], beta: &[usize], max: usize) -> Result<()> {
    if alpha.len() != grid.d || beta.len() != grid.d {
        return Err(Error::InvalidParameter(format!(
            "multi-indices must have length {}",
            grid.d
        )));
    }
    let order = multiindex::order(alpha) + multiindex::order(beta);
    if order > max {
        return Err(Error::OrderExceedsTruncation { order, max });
    }
    Ok(())
}

/// Multiply each coefficient by `prod_axis (i k_axis s_axis)^{order_axis}`.
fn apply_derivative_multipliers(coeffs: &mut [C64], shape: &[usize], orders: &[usize], scales: &[f64]) {
    if orders.iter().all(|&o| o == 0) {
        return;
    }
    // per-axis multiplier tables
    let tables: Vec<Vec<C64>> = shape
        .iter()
        .zip(orders)
        .zip(scales)
        .map(|((&n, &o), &s)| {
            (0..n)
                .map(|j| {
                    if o == 0 {
                        C64::new(1.0, 0.0)
                    } else if j == n / 2 && o % 2 == 1 {
                        C64::new(0.0, 0.0)
                    } else {
                        let k = wavenumber(j, n) as f64 * s;
                        C64::new(0.0, k).powu(o as u32)
                    }
                })
                .collect()
        })
        .collect();
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for c in coeffs.iter_mut() {
        let mut m = C64::new(1.0, 0.0);
        for a in 0..rank {
            if orders[a] > 0 {
                m *= tables[a][idx[a]];
            }
        }
        *c *= m;
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Forward transform on the chosen axes.
pub fn to_spectral(f: &PhaseGridFunction, axes: SpectralAxes) -> SpectralField {
    let grid = *f.grid();
    let mut coeffs: Vec<C64> = f.values().iter().map(|&v| C64::new(v, 0.0)).collect();
    let field_axes = match axes {
        SpectralAxes::Spatial => grid.spatial_axes(),
        SpectralAxes::PhaseSpace => (0..2 * grid.d).collect(),
    };
    transform_axes(&mut coeffs, &grid.shape(), &field_axes, false);
    SpectralField { grid, axes, coeffs }
}

/// Inverse transform; the imaginary part (round-off for real data) is dropped.
pub fn from_spectral(s: &SpectralField) -> PhaseGridFunction {
    let mut coeffs = s.coeffs.clone();
    transform_axes(&mut coeffs, &s.grid.shape(), &s.transformed_axes(), true);
    PhaseGridFunction::from_parts(s.grid, coeffs.into_iter().map(|c| c.re).collect())
}

/// `d_x^alpha d_p^beta f` by Fourier multipliers.
pub fn spectral_derivative(f: &PhaseGridFunction, alpha: &[usize], beta: &[usize]) -> Result<PhaseGridFunction> {
    spectral_derivative_truncated(f, alpha, beta, MAX_DERIVATIVE_ORDER)
}

/// As [`spectral_derivative`] with an explicit truncation order `n_max`.
pub fn spectral_derivative_truncated(
    f: &PhaseGridFunction,
    alpha: &[usize],
    beta: &[usize],
    n_max: usize,
) -> Result<PhaseGridFunction> {
    let grid = *f.grid();
    check_orders(&grid, alpha, beta, n_max)?;
    if alpha.iter().chain(beta).all(|&o| o == 0) {
        return Ok(f.clone());
    }
    let mut axes = Vec::new();
    for (a, &o) in alpha.iter().chain(beta).enumerate() {
        if o > 0 {
            axes.push(a);
        }
    }
    let shape = grid.shape();
    let mut coeffs: Vec<C64> = f.values().iter().map(|&v| C64::new(v, 0.0)).collect();
    transform_axes(&mut coeffs, &shape, &axes, false);
    let mut orders = alpha.to_vec();
    orders.extend_from_slice(beta);
    let scales: Vec<f64> = (0..2 * grid.d)
        .map(|a| if a < grid.d { 2.0 * PI / grid.lx } else { 2.0 * PI })
        .collect();
    apply_derivative_multipliers(&mut coeffs, &shape, &orders, &scales);
    transform_axes(&mut coeffs, &shape, &axes, true);
    Ok(PhaseGridFunction::from_parts(
        grid,
        coeffs.into_iter().map(|c| c.re).collect(),
    ))
}

/// A function of `x` alone, sampled on the spatial nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialFunction {
    pub values: Vec<f64>,
}

/// `rho_f(x) = int f dp` by trapezoid quadrature on the unit momentum torus.
pub fn density(f: &PhaseGridFunction) -> SpatialFunction {
    let n = f.grid().momentum_len();
    let inv = 1.0 / n as f64;
    SpatialFunction {
        values: f.values().chunks(n).map(|row| row.iter().sum::<f64>() * inv).collect(),
    }
}

/// `int eps(p) f(x, p) dp`.
pub fn energy_moment(f: &PhaseGridFunction, bp: &BandParams) -> SpatialFunction {
    let eps = f.grid().band_energies(bp);
    let n = eps.len();
    let inv = 1.0 / n as f64;
    SpatialFunction {
        values: f
            .values()
            .chunks(n)
            .map(|row| row.iter().zip(&eps).map(|(a, e)| a * e).sum::<f64>() * inv)
            .collect(),
    }
}

/// Zero every spatial mode with `|k| > Nx / 3` on some axis (2/3 rule).
pub fn dealias_spatial(s: &mut SpectralField) {
    let grid = s.grid;
    let cutoff = (grid.nx / 3) as i64;
    let np = grid.momentum_len();
    for ix in 0..grid.spatial_len() {
        if grid.spatial_mode(ix).iter().any(|k| k.abs() > cutoff) {
            for c in &mut s.coeffs[ix * np..(ix + 1) * np] {
                *c = C64::new(0.0, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: PhaseGrid, seed: u64) -> PhaseGridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        PhaseGridFunction::new(grid, values).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(PhaseGrid::new(1, 6, 8, 1.0).is_err());
        assert!(PhaseGrid::new(1, 9, 8, 1.0).is_err());
        assert!(PhaseGrid::new(1, 8, 8, 0.0).is_err());
        assert!(PhaseGrid::new(4, 8, 8, 1.0).is_err());
        assert!(PhaseGrid::new(2, 8, 10, 2.0).is_ok());
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let grid = PhaseGrid::new(1, 16, 16, 1.0).unwrap();
        let f = PhaseGridFunction::from_fn(grid, |_, _| 2.5);
        let s = to_spectral(&f, SpectralAxes::PhaseSpace);
        assert!((s.coeffs()[0] - C64::new(2.5, 0.0)).norm() < 1e-14);
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn round_trip_and_parseval() {
        for grid in [PhaseGrid::new(1, 16, 32, 2.0).unwrap(), PhaseGrid::new(2, 8, 8, 1.0).unwrap()] {
            let f = random_field(grid, 3);
            for axes in [SpectralAxes::Spatial, SpectralAxes::PhaseSpace] {
                let s = to_spectral(&f, axes);
                let back = from_spectral(&s);
                let err = back.sub(&f).max_abs();
                assert!(err < 1e-13 * f.max_abs());
                // mean of squares over the transformed axes equals coefficient energy
                let grid_energy: f64 = f.values().iter().map(|v| v * v).sum::<f64>();
                let coeff_energy: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
                let n_transformed = match axes {
                    SpectralAxes::Spatial => grid.spatial_len(),
                    SpectralAxes::PhaseSpace => grid.len(),
                } as f64;
                assert!((grid_energy / n_transformed - coeff_energy).abs() < 1e-12 * grid_energy);
            }
        }
    }

    #[test]
    fn derivative_of_sine_is_cosine() {
        let lx = 2.0;
        let grid = PhaseGrid::new(1, 32, 16, lx).unwrap();
        let k = 2.0 * PI / lx;
        let f = PhaseGridFunction::from_fn(grid, |x, _| (k * x[0]).sin());
        let df = spectral_derivative(&f, &[1], &[0]).unwrap();
        let exact = PhaseGridFunction::from_fn(grid, |x, _| k * (k * x[0]).cos());
        assert!(df.sub(&exact).max_abs() < 1e-12);
        assert_eq!(spectral_derivative(&f, &[0], &[0]).unwrap(), f);
    }

    #[test]
    fn mixed_derivative_matches_closed_form() {
        let lx = 1.5;
        let grid = PhaseGrid::new(1, 16, 16, lx).unwrap();
        let kx = 2.0 * PI * 2.0 / lx;
        let kp = 2.0 * PI * 3.0;
        let f = PhaseGridFunction::from_fn(grid, |x, p| (kx * x[0]).sin() * (kp * p[0]).cos());
        let d = spectral_derivative(&f, &[1], &[1]).unwrap();
        let exact = PhaseGridFunction::from_fn(grid, |x, p| -kx * kp * (kx * x[0]).cos() * (kp * p[0]).sin());
        assert!(d.sub(&exact).max_abs() < 1e-11);
        let d = spectral_derivative(&f, &[2], &[1]).unwrap();
        let exact = PhaseGridFunction::from_fn(grid, |x, p| kx * kx * kp * (kx * x[0]).sin() * (kp * p[0]).sin());
        assert!(d.sub(&exact).max_abs() < 1e-9);
    }

    #[test]
    fn derivative_order_is_checked() {
        let grid = PhaseGrid::new(1, 8, 8, 1.0).unwrap();
        let f = PhaseGridFunction::zeros(grid);
        assert!(matches!(
            spectral_derivative_truncated(&f, &[3], &[2], 4),
            Err(Error::OrderExceedsTruncation { order: 5, max: 4 })
        ));
    }

    #[test]
    fn derivatives_commute_and_are_linear() {
        let grid = PhaseGrid::new(1, 16, 16, 1.0).unwrap();
        let f = random_field(grid, 7);
        let g = random_field(grid, 8);
        let a = spectral_derivative(&spectral_derivative(&f, &[1], &[0]).unwrap(), &[0], &[2]).unwrap();
        let b = spectral_derivative(&f, &[1], &[2]).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-12 * b.max_abs().max(1.0));
        let comb = f.lincomb(0.3, &g, -1.7);
        let lhs = to_spectral(&comb, SpectralAxes::PhaseSpace);
        let fs = to_spectral(&f, SpectralAxes::PhaseSpace);
        let gs = to_spectral(&g, SpectralAxes::PhaseSpace);
        let rhs = fs.lincomb(0.3, &gs, -1.7);
        let err = lhs.coeffs().iter().zip(rhs.coeffs()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
        assert!(err < 1e-12);
    }

    #[test]
    fn spectral_field_derivative_matches_physical_route() {
        let grid = PhaseGrid::new(1, 16, 16, 1.0).unwrap();
        let f = random_field(grid, 9);
        let direct = spectral_derivative(&f, &[1], &[1]).unwrap();
        let s = to_spectral(&f, SpectralAxes::Spatial).derivative(&[1], &[1]).unwrap();
        assert!(from_spectral(&s).sub(&direct).max_abs() < 1e-11);
        let s = to_spectral(&f, SpectralAxes::PhaseSpace).derivative(&[1], &[1]).unwrap();
        assert!(from_spectral(&s).sub(&direct).max_abs() < 1e-11);
    }

    #[test]
    fn density_of_constant_and_products() {
        let grid = PhaseGrid::new(1, 16, 32, 1.0).unwrap();
        let f = PhaseGridFunction::from_fn(grid, |_, _| 0.7);
        assert!(density(&f).values.iter().all(|r| (r - 0.7).abs() < 1e-15));
        // a(x) b(p) with b analytic: rho = a * int b
        let b = |p: f64| (1.0 + 0.5 * (2.0 * PI * p).cos()).recip();
        let f = PhaseGridFunction::from_fn(grid, |x, p| (1.0 + x[0]) * b(p[0]));
        let int_b = crate::model::torus_quadrature(1, 10_000, |p| b(p[0]));
        for (ix, r) in density(&f).values.iter().enumerate() {
            let x = grid.spatial_point(ix)[0];
            assert!((r - (1.0 + x) * int_b).abs() < 1e-10);
        }
    }

    #[test]
    fn density_is_translation_equivariant() {
        let grid = PhaseGrid::new(1, 16, 8, 1.0).unwrap();
        let f = random_field(grid, 11);
        let np = grid.momentum_len();
        let shifted_vals: Vec<f64> = (0..grid.spatial_len())
            .flat_map(|ix| f.row((ix + 3) % grid.spatial_len()).to_vec())
            .collect();
        let shifted = PhaseGridFunction::new(grid, shifted_vals).unwrap();
        let r = density(&f).values;
        let rs = density(&shifted).values;
        for ix in 0..grid.spatial_len() {
            assert_eq!(rs[ix], r[(ix + 3) % grid.spatial_len()]);
        }
        assert_eq!(np, 8);
    }

    #[test]
    fn dealiasing_keeps_low_modes() {
        let grid = PhaseGrid::new(1, 12, 8, 1.0).unwrap();
        let f = PhaseGridFunction::from_fn(grid, |x, _| (2.0 * PI * x[0]).cos() + (2.0 * PI * 5.0 * x[0]).cos());
        let mut s = to_spectral(&f, SpectralAxes::Spatial);
        dealias_spatial(&mut s);
        let g = from_spectral(&s);
        let low = PhaseGridFunction::from_fn(grid, |x, _| (2.0 * PI * x[0]).cos());
        assert!(g.sub(&low).max_abs() < 1e-14);
    }
}
