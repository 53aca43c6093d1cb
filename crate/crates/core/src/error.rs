// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("equilibrium weight degenerates to zero at p = {p:?}")]
    DegenerateWeight { p: Vec<f64> },

    #[error("derivative order {order} exceeds truncation order {max}")]
    OrderExceedsTruncation { order: usize, max: usize },

    #[error("moments (m0 = {m0}, m1 = {m1}) are not realizable: {reason}")]
    NonRealizableMoments { m0: f64, m1: f64, reason: String },

    #[error("moment Jacobian is singular (det = {det:e})")]
    SingularJacobian { det: f64 },

    #[error("sigma = {re} + {im}i lies on the spectrum: {reason}")]
    OnSpectrum { re: f64, im: f64, reason: String },

    #[error("solution blew up at t = {t}: norm {norm:e} exceeds {limit:e}")]
    BlowUp { t: f64, norm: f64, limit: f64 },

    #[error("non-finite value detected at t = {t}")]
    NanDetected { t: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("contraction failure: measured factor {factor} (allowed {allowed})")]
    ContractionFailure { factor: f64, allowed: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
