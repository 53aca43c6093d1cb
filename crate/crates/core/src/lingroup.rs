// SPDX-License-Identifier: Apache-2.0

//! The linearized operator
//!
//! ```text
//! L g = grad eps(p) . grad_x g + U grad_x rho_g . grad_p F(p)
//! ```
//!
//! its group `e^{tL}`, resolvent, the weighted `X` norm in which it is
//! skew-adjoint, and the stability diagnostics built from the same bracket.
//!
//! Sign convention: solutions of `d_t u + L u = 0` are `u(t) = e^{-tL} u(0)`;
//! [`LinearizedOperator::group_action`] applies `e^{tL}` for either sign of `t`.
//!
//! On spatial mode `xi` with momentum nodes `p_j` and trapezoid weights
//! `w_j = 1 / Np^d`, `L` is the matrix
//!
//! ```text
//! M_xi = i diag(xi . grad eps(p_j)) + i U (xi . grad F(p_j)) w^T
//! ```
//!
//! which is skew-adjoint for the Gram matrix `G = diag(w_j / W_j) + U lambda1 w w^T`,
//! `W = F (1 - eta F)`. The exponential is evaluated through the Cholesky
//! factor of `G` and a Hermitian eigendecomposition, so it is unitary in the
//! `X` norm up to round-off.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{self, PhaseGrid, PhaseGridFunction, SpectralAxes, SpectralField, C64};
use crate::model::{self, BandParams, EntropyParams};
use crate::multiindex;

const I: C64 = C64::new(0.0, 1.0);

/// Smallest integer `k > d/2`.
pub fn default_sobolev_order(d: usize) -> usize {
    d / 2 + 1
}

/// The space `X = H^k_x(L^2_p)` with the weighted inner product
/// `sum_{|alpha| <= k} <d_x^alpha f, d_x^alpha g>_0`.
#[derive(Clone, Debug)]
pub struct XNorm {
    grid: PhaseGrid,
    inv_weight: Vec<f64>,
    coupling: f64,
    k: usize,
    multipliers: Vec<f64>,
}

impl XNorm {
    pub fn new(grid: PhaseGrid, ep: &EntropyParams, bp: &BandParams, u: f64, k: usize) -> Result<Self> {
        let inv_weight = grid.inverse_weights(ep, bp)?;
        let multipliers = (0..grid.spatial_len())
            .map(|ix| sobolev_multiplier(&grid, ix, k))
            .collect();
        Ok(Self {
            grid,
            inv_weight,
            coupling: u * ep.lambda1,
            k,
            multipliers,
        })
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    /// `sum_{|alpha| <= k} |(i xi)^alpha|^2` on spatial mode `ix`.
    pub fn multiplier(&self, ix: usize) -> f64 {
        self.multipliers[ix]
    }

    /// Per-mode `<a, b>_0` kernel (complex, conjugate-linear in `a`).
    pub fn mode_inner(&self, a: &[C64], b: &[C64]) -> C64 {
        let n = a.len() as f64;
        let mut s = C64::new(0.0, 0.0);
        let mut ra = C64::new(0.0, 0.0);
        let mut rb = C64::new(0.0, 0.0);
        for j in 0..a.len() {
            s += a[j].conj() * b[j] * self.inv_weight[j];
            ra += a[j];
            rb += b[j];
        }
        s / n + ra.conj() * rb * (self.coupling / (n * n))
    }

    /// Inner product of two spatially transformed fields.
    pub fn inner_spectral(&self, f: &SpectralField, g: &SpectralField) -> f64 {
        assert_eq!(f.axes(), SpectralAxes::Spatial);
        assert_eq!(g.axes(), SpectralAxes::Spatial);
        assert_eq!(f.grid(), &self.grid);
        let total: f64 = (0..self.grid.spatial_len())
            .map(|ix| self.multipliers[ix] * self.mode_inner(f.mode(ix), g.mode(ix)).re)
            .sum();
        self.grid.spatial_volume() * total
    }

    pub fn norm_spectral(&self, f: &SpectralField) -> f64 {
        self.inner_spectral(f, f).max(0.0).sqrt()
    }

    pub fn inner(&self, f: &PhaseGridFunction, g: &PhaseGridFunction) -> f64 {
        self.inner_spectral(
            &grid::to_spectral(f, SpectralAxes::Spatial),
            &grid::to_spectral(g, SpectralAxes::Spatial),
        )
    }

    pub fn norm(&self, f: &PhaseGridFunction) -> f64 {
        self.norm_spectral(&grid::to_spectral(f, SpectralAxes::Spatial))
    }
}

fn sobolev_multiplier(grid: &PhaseGrid, ix: usize, k: usize) -> f64 {
    let idx = grid.spatial_index(ix);
    let scale = 2.0 * PI / grid.lx;
    multiindex::up_to_order(grid.d, k)
        .iter()
        .map(|alpha| {
            alpha
                .iter()
                .zip(&idx)
                .map(|(&a, &j)| {
                    if a % 2 == 1 && j == grid.nx / 2 {
                        0.0
                    } else {
                        (scale * grid::wavenumber(j, grid.nx) as f64).powi(2 * a as i32)
                    }
                })
                .product::<f64>()
        })
        .sum()
}

/// Cached factorization of one `M_xi`: `exp(t M) = P diag(e^{i t lambda}) Q`.
struct ModeExp {
    p: DMatrix<C64>,
    q: DMatrix<C64>,
    lambda: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersionSample {
    pub sigma: C64,
    pub xi: [f64; 3],
    pub value: C64,
}

pub struct LinearizedOperator {
    ep: EntropyParams,
    bp: BandParams,
    u: f64,
    grid: PhaseGrid,
    eps_grad: Vec<f64>,
    feq_grad: Vec<f64>,
    weight: Vec<f64>,
    xnorm: XNorm,
    modes: Vec<OnceLock<Option<ModeExp>>>,
}

impl std::fmt::Debug for LinearizedOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearizedOperator")
            .field("ep", &self.ep)
            .field("bp", &self.bp)
            .field("u", &self.u)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

impl LinearizedOperator {
    pub fn new(grid: PhaseGrid, ep: EntropyParams, bp: BandParams, u: f64) -> Result<Self> {
        if bp.d != grid.d {
            return Err(Error::InvalidParameter(format!(
                "band dimension {} differs from grid dimension {}",
                bp.d, grid.d
            )));
        }
        if !(u >= 0.0 && u.is_finite()) {
            return Err(Error::InvalidParameter(format!("U must be nonnegative, got {u}")));
        }
        let xnorm = XNorm::new(grid, &ep, &bp, u, default_sobolev_order(grid.d))?;
        let weight = (0..grid.momentum_len())
            .map(|j| model::weight_at_energy(model::band_energy(&grid.momentum_point(j), &bp), &ep))
            .collect();
        Ok(Self {
            ep,
            bp,
            u,
            grid,
            eps_grad: grid.band_gradients(&bp),
            feq_grad: grid.equilibrium_gradients(&ep, &bp),
            weight,
            xnorm,
            modes: (0..grid.spatial_len()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn entropy(&self) -> &EntropyParams {
        &self.ep
    }

    pub fn band(&self) -> &BandParams {
        &self.bp
    }

    pub fn coupling(&self) -> f64 {
        self.u
    }

    pub fn x_norm(&self) -> &XNorm {
        &self.xnorm
    }

    /// `(xi . grad eps(p_j), xi . grad F(p_j))` with the derivative wavevector of mode `ix`.
    fn mode_symbols(&self, ix: usize) -> (Vec<f64>, Vec<f64>) {
        let xi = self.grid.derivative_wavevector(ix);
        let d = self.grid.d;
        let n = self.grid.momentum_len();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for j in 0..n {
            for i in 0..d {
                a[j] += xi[i] * self.eps_grad[j * d + i];
                b[j] += xi[i] * self.feq_grad[j * d + i];
            }
        }
        (a, b)
    }

    /// Dense `M_xi` of spatial mode `ix`.
    pub fn mode_matrix(&self, ix: usize) -> DMatrix<C64> {
        let (a, b) = self.mode_symbols(ix);
        let n = a.len();
        let w = 1.0 / n as f64;
        DMatrix::from_fn(n, n, |r, c| {
            let mut v = I * (self.u * b[r] * w);
            if r == c {
                v += I * a[r];
            }
            v
        })
    }

    /// Gram matrix of `<., .>_0` restricted to one spatial mode.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.momentum_len();
        let w = 1.0 / n as f64;
        let c = self.u * self.ep.lambda1;
        DMatrix::from_fn(n, n, |r, s| {
            let mut v = c * w * w;
            if r == s {
                v += w / self.weight[r];
            }
            v
        })
    }

    fn mode_exp(&self, ix: usize) -> Option<&ModeExp> {
        self.modes[ix].get_or_init(|| self.build_mode_exp(ix)).as_ref()
    }

    fn build_mode_exp(&self, ix: usize) -> Option<ModeExp> {
        let (a, _) = self.mode_symbols(ix);
        if a.iter().all(|&v| v == 0.0) {
            return None;
        }
        let n = a.len();
        let chol = Cholesky::new(self.gram_matrix()).expect("Gram matrix is positive definite");
        let l = chol.l();
        let lt = l.transpose().map(|v| C64::new(v, 0.0));
        let lt_inv = l
            .clone()
            .try_inverse()
            .expect("Cholesky factor is invertible")
            .transpose()
            .map(|v| C64::new(v, 0.0));
        let m = self.mode_matrix(ix);
        let k = &lt * m * &lt_inv;
        let h = k.map(|v| -I * v);
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let v = eig.eigenvectors;
        debug_assert_eq!(v.nrows(), n);
        Some(ModeExp {
            p: &lt_inv * &v,
            q: v.adjoint() * &lt,
            lambda: eig.eigenvalues.iter().copied().collect(),
        })
    }

    /// Build every per-mode factorization now (in parallel).
    pub fn prepare(&self) {
        (0..self.grid.spatial_len()).into_par_iter().for_each(|ix| {
            self.mode_exp(ix);
        });
    }

    /// `L f` with spectral `x`-derivatives and analytic momentum coefficients.
    pub fn apply_l(&self, f: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let d = self.grid.d;
        let n = self.grid.momentum_len();
        let rho = grid::density(f);
        let mut out = vec![0.0; self.grid.len()];
        for i in 0..d {
            let e = multiindex::unit(d, i);
            let zero = vec![0; d];
            let dxf = grid::spectral_derivative(f, &e, &zero)?;
            let drho = spatial_derivative(&self.grid, &rho.values, i);
            for ix in 0..self.grid.spatial_len() {
                for j in 0..n {
                    let k = ix * n + j;
                    out[k] += self.eps_grad[j * d + i] * dxf.values()[k]
                        + self.u * drho[ix] * self.feq_grad[j * d + i];
                }
            }
        }
        Ok(PhaseGridFunction::from_parts(self.grid, out))
    }

    /// `L` on a spatially transformed field, mode by mode.
    pub fn apply_l_spectral(&self, f: &SpectralField) -> SpectralField {
        assert_eq!(f.axes(), SpectralAxes::Spatial);
        let n = self.grid.momentum_len();
        let mut out = SpectralField::zeros(self.grid, SpectralAxes::Spatial);
        let w = 1.0 / n as f64;
        out.coeffs_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(ix, block)| {
                let (a, b) = self.mode_symbols(ix);
                let g = f.mode(ix);
                let rho: C64 = g.iter().sum::<C64>() * w;
                for j in 0..n {
                    block[j] = I * (g[j] * a[j] + rho * (self.u * b[j]));
                }
            });
        out
    }

    /// `e^{tL} g` on a spatially transformed field.
    pub fn group_action_spectral(&self, t: f64, g: &SpectralField) -> SpectralField {
        assert_eq!(g.axes(), SpectralAxes::Spatial);
        assert_eq!(g.grid(), &self.grid);
        let n = self.grid.momentum_len();
        let mut out = g.clone();
        if t == 0.0 {
            return out;
        }
        out.coeffs_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(ix, block)| {
                if let Some(me) = self.mode_exp(ix) {
                    let v = DVector::from_column_slice(block);
                    let mut y = &me.q * v;
                    for (c, &l) in y.iter_mut().zip(&me.lambda) {
                        *c *= C64::from_polar(1.0, t * l);
                    }
                    let r = &me.p * y;
                    block.copy_from_slice(r.as_slice());
                }
            });
        out
    }

    /// `e^{tL} g`.
    pub fn group_action(&self, t: f64, g: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        if g.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if t == 0.0 {
            return Ok(g.clone());
        }
        let s = grid::to_spectral(g, SpectralAxes::Spatial);
        Ok(grid::from_spectral(&self.group_action_spectral(t, &s)))
    }

    /// `D(sigma, xi) = 1 + U int i xi.grad F / (sigma + i xi.grad eps) dp` on the
    /// operator's momentum nodes.
    pub fn dispersion_function(&self, sigma: C64, xi: &[f64]) -> Result<C64> {
        if sigma.re == 0.0 {
            return Err(Error::OnSpectrum {
                re: sigma.re,
                im: sigma.im,
                reason: "Re sigma = 0".into(),
            });
        }
        Ok(dispersion_on_nodes(
            sigma,
            xi,
            &self.eps_grad,
            &self.feq_grad,
            self.grid.d,
            self.u,
        ))
    }

    /// Real form `lambda1 int |xi.grad eps|^2 W / (sigma^2 + |xi.grad eps|^2) dp`,
    /// so that `D(sigma, xi) = 1 + U * reduced` for real `sigma`.
    pub fn dispersion_reduced(&self, sigma: f64, xi: &[f64]) -> f64 {
        let d = self.grid.d;
        let n = self.grid.momentum_len();
        let mut s = 0.0;
        for j in 0..n {
            let a: f64 = (0..d).map(|i| xi[i] * self.eps_grad[j * d + i]).sum();
            s += a * a * self.weight[j] / (sigma * sigma + a * a);
        }
        self.ep.lambda1 * s / n as f64
    }

    /// Solve `(sigma + L) f = h`.
    pub fn resolvent(&self, sigma: C64, h: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        if h.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let hs = grid::to_spectral(h, SpectralAxes::Spatial);
        Ok(grid::from_spectral(&self.resolvent_spectral(sigma, &hs)?))
    }

    pub fn resolvent_spectral(&self, sigma: C64, h: &SpectralField) -> Result<SpectralField> {
        if sigma.re == 0.0 {
            return Err(Error::OnSpectrum {
                re: sigma.re,
                im: sigma.im,
                reason: "Re sigma = 0".into(),
            });
        }
        let n = self.grid.momentum_len();
        let w = 1.0 / n as f64;
        let mut out = SpectralField::zeros(self.grid, SpectralAxes::Spatial);
        for ix in 0..self.grid.spatial_len() {
            let (a, b) = self.mode_symbols(ix);
            let hm = h.mode(ix);
            let denom: Vec<C64> = a.iter().map(|&aj| sigma + I * aj).collect();
            let mut dval = C64::new(1.0, 0.0);
            let mut rhs = C64::new(0.0, 0.0);
            for j in 0..n {
                dval += I * (self.u * b[j] * w) / denom[j];
                rhs += hm[j] * w / denom[j];
            }
            if dval.norm() < 1e-12 {
                return Err(Error::OnSpectrum {
                    re: sigma.re,
                    im: sigma.im,
                    reason: format!("|D| = {:e} on mode {:?}", dval.norm(), self.grid.spatial_mode(ix)),
                });
            }
            let rho = rhs / dval;
            let block = out.mode_mut(ix);
            for j in 0..n {
                block[j] = (hm[j] - I * (self.u * b[j]) * rho) / denom[j];
            }
        }
        Ok(out)
    }

    /// The commutator tower `L~_beta = [[L, d_{p_i}], ...]`:
    /// `(-1)^{|beta|} (d^beta grad eps . grad_x f + U grad_x rho_f . grad_p d^beta F)`.
    pub fn commutator_tower(&self, beta: &[usize], f: &PhaseGridFunction) -> Result<PhaseGridFunction> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let d = self.grid.d;
        let n = self.grid.momentum_len();
        let sign = if multiindex::order(beta) % 2 == 0 { 1.0 } else { -1.0 };
        let rho = grid::density(f);
        let mut out = vec![0.0; self.grid.len()];
        for i in 0..d {
            let e = multiindex::unit(d, i);
            let bi = multiindex::add(beta, &e);
            let zero = vec![0; d];
            let dxf = grid::spectral_derivative(f, &e, &zero)?;
            let drho = spatial_derivative(&self.grid, &rho.values, i);
            let ce: Vec<f64> = (0..n)
                .map(|j| model::band_partial(&self.grid.momentum_point(j), &bi, &self.bp))
                .collect();
            let cf: Vec<f64> = (0..n)
                .map(|j| model::equilibrium_partial(&self.grid.momentum_point(j), &bi, &self.ep, &self.bp))
                .collect();
            for ix in 0..self.grid.spatial_len() {
                for j in 0..n {
                    let k = ix * n + j;
                    out[k] += sign * (ce[j] * dxf.values()[k] + self.u * drho[ix] * cf[j]);
                }
            }
        }
        Ok(PhaseGridFunction::from_parts(self.grid, out))
    }
}

/// Spectral derivative of a spatial function along axis `i`.
pub fn spatial_derivative(grid: &PhaseGrid, values: &[f64], axis: usize) -> Vec<f64> {
    let shape = vec![grid.nx; grid.d];
    let mut c: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    grid::transform_axes(&mut c, &shape, &[axis], false);
    let stride = grid.nx.pow((grid.d - 1 - axis) as u32);
    let scale = 2.0 * PI / grid.lx;
    for (k, v) in c.iter_mut().enumerate() {
        let j = (k / stride) % grid.nx;
        if j == grid.nx / 2 {
            *v = C64::new(0.0, 0.0);
        } else {
            *v *= I * (scale * grid::wavenumber(j, grid.nx) as f64);
        }
    }
    grid::transform_axes(&mut c, &shape, &[axis], true);
    c.into_iter().map(|v| v.re).collect()
}

fn dispersion_on_nodes(sigma: C64, xi: &[f64], eps_grad: &[f64], feq_grad: &[f64], d: usize, u: f64) -> C64 {
    let n = eps_grad.len() / d;
    let mut s = C64::new(0.0, 0.0);
    for j in 0..n {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..d {
            a += xi[i] * eps_grad[j * d + i];
            b += xi[i] * feq_grad[j * d + i];
        }
        s += I * b / (sigma + I * a);
    }
    C64::new(1.0, 0.0) + s * (u / n as f64)
}

/// Momentum-node tables for stability scans on a dedicated quadrature grid.
struct MomentumTables {
    d: usize,
    eps_grad: Vec<f64>,
    feq_grad: Vec<f64>,
}

impl MomentumTables {
    fn new(ep: &EntropyParams, bp: &BandParams, nodes_per_dim: usize) -> Self {
        let d = bp.d;
        let total = nodes_per_dim.pow(d as u32);
        let mut eps_grad = Vec::with_capacity(total * d);
        let mut feq_grad = Vec::with_capacity(total * d);
        let mut p = vec![0.0; d];
        for mut flat in 0..total {
            for axis in (0..d).rev() {
                p[axis] = (flat % nodes_per_dim) as f64 / nodes_per_dim as f64;
                flat /= nodes_per_dim;
            }
            eps_grad.extend(model::band_gradient(&p, bp));
            feq_grad.extend(model::equilibrium_gradient(&p, ep, bp));
        }
        Self { d, eps_grad, feq_grad }
    }
}

/// Sample grids for [`penrose_margin`].
#[derive(Clone, Debug, PartialEq)]
pub struct PenroseGrid {
    pub gamma: Vec<f64>,
    pub tau: Vec<f64>,
    /// Sample vectors `eta~`, each of length `d`.
    pub eta: Vec<Vec<f64>>,
    /// Trapezoid nodes per momentum dimension.
    pub nodes_per_dim: usize,
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

impl PenroseGrid {
    /// `gamma` in `[1e-3, 10]` log-spaced (20), `tau` in `[-20, 20]` (81),
    /// `|eta|` in `[1e-2, 50]` log-spaced (30) along the first axis and, for
    /// `d > 1`, along the diagonal.
    pub fn default_for(d: usize) -> Self {
        let mags = log_space(1e-2, 50.0, 30);
        let mut eta = Vec::new();
        for &m in &mags {
            let mut e = vec![0.0; d];
            e[0] = m;
            eta.push(e);
            if d > 1 {
                eta.push(vec![m / (d as f64).sqrt(); d]);
            }
        }
        Self {
            gamma: log_space(1e-3, 10.0, 20),
            tau: lin_space(-20.0, 20.0, 81),
            eta,
            nodes_per_dim: if d == 1 { 4096 } else { 64 },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenroseSample {
    pub gamma: f64,
    pub tau: f64,
    pub eta: Vec<f64>,
    pub margin: f64,
}

/// Every sample of the Penrose functional
/// `|1 - int_0^inf e^{-(gamma + i tau) s} (i eta/(1+|eta|^2)) . (grad F)^(eta s) ds|`,
/// with the `s`-integral in closed form: it equals `(1 - D(gamma + i tau, eta)) / (1 + |eta|^2)`.
pub fn penrose_scan(ep: &EntropyParams, bp: &BandParams, u: f64, grid: &PenroseGrid) -> Vec<PenroseSample> {
    if u == 0.0 || ep.lambda1 == 0.0 {
        return grid
            .gamma
            .iter()
            .flat_map(|&g| {
                grid.tau.iter().flat_map(move |&t| {
                    grid.eta.iter().map(move |e| PenroseSample {
                        gamma: g,
                        tau: t,
                        eta: e.clone(),
                        margin: 1.0,
                    })
                })
            })
            .collect();
    }
    let tables = MomentumTables::new(ep, bp, grid.nodes_per_dim);
    let mut jobs = Vec::new();
    for &g in &grid.gamma {
        for &t in &grid.tau {
            for e in &grid.eta {
                jobs.push((g, t, e));
            }
        }
    }
    jobs.par_iter()
        .map(|&(g, t, e)| {
            let dval = dispersion_on_nodes(C64::new(g, t), e, &tables.eps_grad, &tables.feq_grad, tables.d, u);
            let norm2: f64 = e.iter().map(|v| v * v).sum();
            let margin = (C64::new(1.0, 0.0) - (C64::new(1.0, 0.0) - dval) / (1.0 + norm2)).norm();
            PenroseSample {
                gamma: g,
                tau: t,
                eta: e.clone(),
                margin,
            }
        })
        .collect()
}

/// Minimum of [`penrose_scan`]. Positive values are numerical evidence of
/// stability, not a proof.
pub fn penrose_margin(ep: &EntropyParams, bp: &BandParams, u: f64, grid: &PenroseGrid) -> f64 {
    penrose_scan(ep, bp, u, grid)
        .iter()
        .map(|s| s.margin)
        .fold(f64::INFINITY, f64::min)
}

/// Evaluate `D` over `(sigma, xi)` pairs.
pub fn dispersion_scan(op: &LinearizedOperator, sigmas: &[C64], xis: &[Vec<f64>]) -> Result<Vec<DispersionSample>> {
    let mut out = Vec::with_capacity(sigmas.len() * xis.len());
    for &sigma in sigmas {
        for xi in xis {
            let value = op.dispersion_function(sigma, xi)?;
            let mut x = [0.0; 3];
            x[..xi.len()].copy_from_slice(xi);
            out.push(DispersionSample { sigma, xi: x, value });
        }
    }
    Ok(out)
}

pub fn write_dispersion_csv<W: Write>(mut w: W, d: usize, samples: &[DispersionSample]) -> Result<()> {
    let xi_cols: Vec<String> = (0..d).map(|i| format!("xi{i}")).collect();
    writeln!(w, "sigma_re,sigma_im,{},D_re,D_im", xi_cols.join(","))?;
    for s in samples {
        let xs: Vec<String> = s.xi[..d].iter().map(|v| format!("{v:e}")).collect();
        writeln!(
            w,
            "{:e},{:e},{},{:e},{:e}",
            s.sigma.re,
            s.sigma.im,
            xs.join(","),
            s.value.re,
            s.value.im
        )?;
    }
    Ok(())
}

pub fn write_penrose_csv<W: Write>(mut w: W, d: usize, samples: &[PenroseSample]) -> Result<()> {
    let eta_cols: Vec<String> = (0..d).map(|i| format!("eta{i}")).collect();
    writeln!(w, "gamma,tau,{},margin", eta_cols.join(","))?;
    for s in samples {
        let es: Vec<String> = s.eta.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{:e},{:e},{},{:e}", s.gamma, s.tau, es.join(","), s.margin)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(nx: usize, np: usize, u: f64) -> LinearizedOperator {
        let grid = PhaseGrid::new(1, nx, np, 1.0).unwrap();
        let ep = EntropyParams::new(0.0, 1.0, 1.0).unwrap();
        LinearizedOperator::new(grid, ep, BandParams::default(), u).unwrap()
    }

    /// Smooth random field: a few low Fourier modes in x and p.
    pub(crate) fn smooth_field(grid: PhaseGrid, seed: u64) -> PhaseGridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0..4) as f64,
                    rng.random_range(0..4) as f64,
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        PhaseGridFunction::from_fn(grid, |x, p| {
            terms
                .iter()
                .map(|&(a, kx, kp, ph)| a * (2.0 * PI * (kx * x[0] / grid.lx + kp * p[0]) + ph).cos())
                .sum()
        })
    }

    #[test]
    fn x_norm_matches_physical_route() {
        let op = setup(16, 16, 1.0);
        let f = smooth_field(*op.grid(), 1);
        let g = smooth_field(*op.grid(), 2);
        let direct: f64 = [vec![0usize], vec![1]]
            .iter()
            .map(|a| {
                let fa = grid::spectral_derivative(&f, a, &[0]).unwrap();
                let ga = grid::spectral_derivative(&g, a, &[0]).unwrap();
                model::weighted_inner_product(&fa, &ga, op.entropy(), op.band(), 1.0).unwrap()
            })
            .sum();
        let fourier = op.x_norm().inner(&f, &g);
        assert!((direct - fourier).abs() < 1e-12 * direct.abs().max(1.0), "{direct} vs {fourier}");
    }

    #[test]
    fn constant_in_x_is_annihilated() {
        let op = setup(16, 16, 1.0);
        let f = PhaseGridFunction::from_fn(*op.grid(), |_, p| (2.0 * PI * p[0]).sin() + 0.3);
        assert!(op.apply_l(&f).unwrap().max_abs() < 1e-13);
        let feq = op.grid().equilibrium(op.entropy(), op.band());
        assert!(op.apply_l(&feq).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn apply_l_matches_mode_matrices() {
        let op = setup(16, 16, 0.8);
        let f = smooth_field(*op.grid(), 4);
        let direct = op.apply_l(&f).unwrap();
        let fs = grid::to_spectral(&f, SpectralAxes::Spatial);
        let mut assembled = SpectralField::zeros(*op.grid(), SpectralAxes::Spatial);
        for ix in 0..op.grid().spatial_len() {
            let m = op.mode_matrix(ix);
            let v = &m * DVector::from_column_slice(fs.mode(ix));
            assembled.mode_mut(ix).copy_from_slice(v.as_slice());
        }
        let err = grid::from_spectral(&assembled).sub(&direct).max_abs();
        assert!(err < 1e-11 * direct.max_abs().max(1.0));
        let fast = grid::from_spectral(&op.apply_l_spectral(&fs));
        assert!(fast.sub(&direct).max_abs() < 1e-11 * direct.max_abs().max(1.0));
    }

    #[test]
    fn mode_matrix_is_skew_in_gram() {
        let op = setup(16, 16, 1.3);
        let g = op.gram_matrix().map(|v| C64::new(v, 0.0));
        for ix in [1, 3, 15] {
            let m = op.mode_matrix(ix);
            let gm = &g * &m;
            let s = &gm + gm.adjoint();
            assert!(s.norm() < 1e-12 * gm.norm());
        }
    }

    #[test]
    fn group_matches_pade_exponential() {
        let op = setup(8, 16, 1.0);
        let f = smooth_field(*op.grid(), 5);
        let fs = grid::to_spectral(&f, SpectralAxes::Spatial);
        let t = 0.37;
        let ours = op.group_action_spectral(t, &fs);
        for ix in 0..op.grid().spatial_len() {
            let e = (op.mode_matrix(ix) * C64::new(t, 0.0)).exp();
            let v = e * DVector::from_column_slice(fs.mode(ix));
            for (a, b) in v.iter().zip(ours.mode(ix)) {
                assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
            }
        }
    }

    #[test]
    fn group_identity_law_and_isometry() {
        let op = setup(16, 16, 1.0);
        let f = smooth_field(*op.grid(), 6);
        assert_eq!(op.group_action(0.0, &f).unwrap(), f);
        let (s, t) = (0.4, -0.75);
        let a = op.group_action(s, &op.group_action(t, &f).unwrap()).unwrap();
        let b = op.group_action(s + t, &f).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-10 * f.max_abs());
        let n0 = op.x_norm().norm(&f);
        for t in [0.1, 0.5, 1.0] {
            let nt = op.x_norm().norm(&op.group_action(t, &f).unwrap());
            assert!(((nt - n0) / n0).abs() < 1e-10);
        }
    }

    #[test]
    fn free_group_is_phase_rotation() {
        let op = setup(16, 16, 0.0);
        let f = smooth_field(*op.grid(), 7);
        let fs = grid::to_spectral(&f, SpectralAxes::Spatial);
        let t = 0.6;
        let g = op.group_action_spectral(-t, &fs);
        let n = op.grid().momentum_len();
        let grads = op.grid().band_gradients(op.band());
        for ix in 0..op.grid().spatial_len() {
            let xi = op.grid().derivative_wavevector(ix)[0];
            for j in 0..n {
                let exact = fs.mode(ix)[j] * C64::from_polar(1.0, -t * xi * grads[j]);
                assert!((g.mode(ix)[j] - exact).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn resolvent_round_trip_bound_and_free_case() {
        let op = setup(16, 16, 1.0);
        let h = smooth_field(*op.grid(), 8);
        let hn = op.x_norm().norm(&h);
        let hs = grid::to_spectral(&h, SpectralAxes::Spatial);
        for sigma in [C64::new(1.0, 0.3), C64::new(-0.5, 1.0)] {
            let f = op.resolvent_spectral(sigma, &hs).unwrap();
            let lf = op.apply_l_spectral(&f);
            let res = (0..hs.coeffs().len())
                .map(|k| (f.coeffs()[k] * sigma + lf.coeffs()[k] - hs.coeffs()[k]).norm())
                .fold(0.0f64, f64::max);
            assert!(res < 1e-9 * h.max_abs());
            assert!(op.x_norm().norm_spectral(&f) <= hn / sigma.re.abs() + 1e-9);
        }
        assert!(op.resolvent(C64::new(0.0, 1.0), &h).is_err());
        let free = setup(16, 16, 0.0);
        let sigma = C64::new(1.0, 0.3);
        let f = free.resolvent_spectral(sigma, &grid::to_spectral(&h, SpectralAxes::Spatial)).unwrap();
        let hs = grid::to_spectral(&h, SpectralAxes::Spatial);
        let grads = free.grid().band_gradients(free.band());
        for ix in 0..16 {
            let xi = free.grid().derivative_wavevector(ix)[0];
            for j in 0..16 {
                let exact = hs.mode(ix)[j] / (sigma + I * xi * grads[j]);
                assert!((f.mode(ix)[j] - exact).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dispersion_function_properties() {
        let op = setup(16, 64, 1.0);
        for sigma in [0.1, 1.0, 4.0] {
            for xi in [0.5, 2.0 * PI, 20.0] {
                let d = op.dispersion_function(C64::new(sigma, 0.0), &[xi]).unwrap();
                assert!(d.im.abs() < 1e-10);
                assert!(d.re >= 1.0);
                let reduced = 1.0 + op.dispersion_reduced(sigma, &[xi]);
                assert!((d.re - reduced).abs() < 1e-9);
            }
        }
        let flat = LinearizedOperator::new(
            *op.grid(),
            EntropyParams::new(0.2, 0.0, 1.0).unwrap(),
            BandParams::default(),
            1.0,
        )
        .unwrap();
        assert_eq!(flat.dispersion_function(C64::new(0.3, 2.0), &[3.0]).unwrap(), C64::new(1.0, 0.0));
    }

    #[test]
    fn commutes_with_spatial_derivative() {
        let op = setup(16, 16, 1.0);
        let f = smooth_field(*op.grid(), 9);
        let a = op.apply_l(&grid::spectral_derivative(&f, &[1], &[0]).unwrap()).unwrap();
        let b = grid::spectral_derivative(&op.apply_l(&f).unwrap(), &[1], &[0]).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-11 * a.max_abs().max(1.0));
    }

    #[test]
    fn commutator_tower_matches_nested_brackets() {
        let op = setup(16, 32, 1.0);
        let f = smooth_field(*op.grid(), 10);
        let bracket = |apply: &dyn Fn(&PhaseGridFunction) -> PhaseGridFunction, g: &PhaseGridFunction| {
            let dp = |h: &PhaseGridFunction| grid::spectral_derivative(h, &[0], &[1]).unwrap();
            apply(&dp(g)).sub(&dp(&apply(g)))
        };
        let l0 = |g: &PhaseGridFunction| op.apply_l(g).unwrap();
        let l1 = |g: &PhaseGridFunction| bracket(&l0, g);
        let l2 = |g: &PhaseGridFunction| bracket(&l1, g);
        assert!(op.commutator_tower(&[0], &f).unwrap().sub(&l0(&f)).max_abs() < 1e-12);
        let t1 = op.commutator_tower(&[1], &f).unwrap();
        assert!(t1.sub(&l1(&f)).max_abs() < 1e-9 * t1.max_abs());
        let t2 = op.commutator_tower(&[2], &f).unwrap();
        assert!(t2.sub(&l2(&f)).max_abs() < 1e-9 * t2.max_abs());
    }

    #[test]
    fn penrose_trivial_cases() {
        let bp = BandParams::default();
        let grid = PenroseGrid {
            nodes_per_dim: 256,
            ..PenroseGrid::default_for(1)
        };
        let flat = EntropyParams::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(penrose_margin(&flat, &bp, 1.0, &grid), 1.0);
        let ep = EntropyParams::new(0.0, 1.0, 1.0).unwrap();
        assert_eq!(penrose_margin(&ep, &bp, 0.0, &grid), 1.0);
        let m = penrose_margin(&ep, &bp, 1.0, &grid);
        assert!(m > 0.0 && m.is_finite());
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_penrose_csv(
            &mut buf,
            1,
            &[PenroseSample {
                gamma: 1.0,
                tau: 0.0,
                eta: vec![2.0],
                margin: 1.0,
            }],
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("gamma,tau,eta0,margin\n"));
        assert_eq!(s.lines().count(), 2);
    }
}
