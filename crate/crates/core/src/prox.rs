//! Proximal operator of the 0-1 loss `C * ||(u)_+||_0`.
//!
//! For step `gamma` the scalar problem `min_u C*1[u > 0] + (u - v)^2 / (2 gamma)`
//! is solved in closed form: components in `(0, sqrt(2 gamma C)]` are set to
//! zero, everything else passes through unchanged.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("prox step gamma must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("penalty C must be positive and finite, got {0}")]
    InvalidPenalty(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    gamma: f64,
    penalty: f64,
    threshold: f64,
}

impl ProxParams {
    pub fn new(gamma: f64, penalty: f64) -> Result<Self, ProxError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(ProxError::InvalidGamma(gamma));
        }
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(ProxError::InvalidPenalty(penalty));
        }
        let threshold = (2.0 * gamma * penalty).sqrt();
        if !threshold.is_finite() {
            return Err(ProxError::InvalidGamma(gamma));
        }
        Ok(Self {
            gamma,
            penalty,
            threshold,
        })
    }

    /// Parameters of the ADMM `u`-step, where the prox step is `1 / sigma`.
    pub fn from_sigma(sigma: f64, penalty: f64) -> Result<Self, ProxError> {
        Self::new(1.0 / sigma, penalty)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// `sqrt(2 gamma C)`, the right end of the zeroing band.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// `1` if `t > 0`, else `0`.
#[inline]
pub fn zero_one_loss(t: f64) -> u8 {
    u8::from(t > 0.0)
}

/// True iff `v` lies in `(0, sqrt(2 gamma C)]`, i.e. the prox maps it to zero.
#[inline]
pub fn in_working_band(v: f64, p: &ProxParams) -> bool {
    v > 0.0 && v <= p.threshold
}

#[inline]
pub fn prox_scalar(v: f64, p: &ProxParams) -> f64 {
    if in_working_band(v, p) {
        0.0
    } else {
        v
    }
}

pub fn prox(v: &[f64], p: &ProxParams) -> Vec<f64> {
    v.iter().map(|&vi| prox_scalar(vi, p)).collect()
}

/// Scalar prox objective `C*1[u > 0] + (u - v)^2 / (2 gamma)`.
pub fn prox_objective(u: f64, v: f64, p: &ProxParams) -> f64 {
    p.penalty * f64::from(zero_one_loss(u)) + (u - v) * (u - v) / (2.0 * p.gamma)
}
