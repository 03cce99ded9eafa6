//! Covariance functions.
//!
//! The Gaussian kernel here is `sigma_f^2 * exp(-|a - b|^2 / sigma_l^2)`; with
//! unit parameters it is the plain `exp(-|a - b|^2)` used by the SVR. The
//! exponential kernel is `sigma_f^2 * exp(-r / sigma_l)` with `r` the
//! Euclidean distance.

use serde::{Deserialize, Serialize};

use super::MlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub sigma_f: f64,
    pub sigma_l: f64,
    /// Observation noise standard deviation; only the GP uses it.
    pub noise_sigma: f64,
}

/// Signal standard deviation selected for the exponential GP kernel.
pub const REFERENCE_SIGMA_F: f64 = 4.6873;
/// Length scale selected for the exponential GP kernel.
pub const REFERENCE_SIGMA_L: f64 = 0.7051;
/// Default GP observation noise, in standardized target units.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;

impl KernelParams {
    /// `exp(-|a - b|^2)`.
    pub fn gaussian() -> Self {
        KernelParams {
            kind: KernelKind::Gaussian,
            sigma_f: 1.0,
            sigma_l: 1.0,
            noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }

    pub fn exponential(sigma_f: f64, sigma_l: f64, noise_sigma: f64) -> Self {
        KernelParams {
            kind: KernelKind::Exponential,
            sigma_f,
            sigma_l,
            noise_sigma,
        }
    }

    /// Exponential kernel with the reference `sigma_f = 4.6873`,
    /// `sigma_l = 0.7051`.
    pub fn reference_exponential() -> Self {
        Self::exponential(REFERENCE_SIGMA_F, REFERENCE_SIGMA_L, DEFAULT_NOISE_SIGMA)
    }

    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) {
            return Err(MlError::InvalidKernel("sigma_f must be > 0"));
        }
        if !(self.sigma_l > 0.0 && self.sigma_l.is_finite()) {
            return Err(MlError::InvalidKernel("sigma_l must be > 0"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(MlError::InvalidKernel("noise_sigma must be > 0"));
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64, MlError> {
        if a.len() != b.len() {
            return Err(MlError::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let s2 = self.sigma_f * self.sigma_f;
        match self.kind {
            KernelKind::Gaussian => s2 * (-sq / (self.sigma_l * self.sigma_l)).exp(),
            KernelKind::Exponential => s2 * (-sq.sqrt() / self.sigma_l).exp(),
        }
    }
}

pub fn gaussian_kernel(a: &[f64], b: &[f64]) -> Result<f64, MlError> {
    KernelParams::gaussian().eval(a, b)
}

pub fn exponential_kernel(a: &[f64], b: &[f64], p: &KernelParams) -> Result<f64, MlError> {
    if p.kind != KernelKind::Exponential {
        return Err(MlError::InvalidKernel("expected an exponential kernel"));
    }
    p.eval(a, b)
}
