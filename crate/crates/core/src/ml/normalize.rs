use serde::{Deserialize, Serialize};

use super::MlError;
use crate::measurement::LabeledSample;

/// Per-feature z-score constants for `[rtt_raw, mean_rssi]`, frozen at
/// training time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: [f64; 2],
    pub stds: [f64; 2],
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            means: [0.0; 2],
            stds: [1.0; 2],
        }
    }

    pub fn apply(&self, features: [f64; 2]) -> [f64; 2] {
        [
            (features[0] - self.means[0]) / self.stds[0],
            (features[1] - self.means[1]) / self.stds[1],
        ]
    }
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn fit_normalizer(samples: &[LabeledSample]) -> Result<Normalizer, MlError> {
    if samples.len() < 2 {
        return Err(MlError::TooFewSamples {
            needed: 2,
            have: samples.len(),
        });
    }
    let mut means = [0.0; 2];
    let mut stds = [0.0; 2];
    for k in 0..2 {
        let (m, s) = mean_std(samples.iter().map(|x| x.features()[k]));
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(MlError::ConstantFeature(k));
        }
        means[k] = m;
        stds[k] = s;
    }
    Ok(Normalizer { means, stds })
}

/// Affine scaling of the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    /// Falls back to unit scale when the target has no spread.
    pub fn fit(y: &[f64]) -> Self {
        if y.len() < 2 {
            return TargetScale {
                mean: y.first().copied().unwrap_or(0.0),
                std: 1.0,
            };
        }
        let (mean, std) = mean_std(y.iter().copied());
        let std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
        TargetScale { mean, std }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}
