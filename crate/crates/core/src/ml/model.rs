//! Trained estimators with their frozen preprocessing.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::gp::{GaussianProcess, GpConfig};
use super::nn::{Mlp, NnConfig};
use super::normalize::{fit_normalizer, Normalizer, TargetScale};
use super::svr::{Svr, SvrConfig};
use super::tree::RegressionTree;
use super::{KernelParams, MlError};
use crate::correction::distance_from_rtt;
use crate::measurement::LabeledSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Tree,
    Svr,
    Gp,
    Nn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Tree, Variant::Svr, Variant::Gp, Variant::Nn];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tree => "tree",
            Variant::Svr => "svr",
            Variant::Gp => "gp",
            Variant::Nn => "nn",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown model variant `{s}` (expected tree, svr, gp or nn)"))
    }
}

/// What the regressor learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// The true distance itself.
    #[default]
    Absolute,
    /// `true distance - rtt_raw * c / 2`, added back at prediction time.
    Correction,
}

impl TargetMode {
    pub fn target(self, s: &LabeledSample) -> f64 {
        match self {
            TargetMode::Absolute => s.true_distance,
            TargetMode::Correction => s.true_distance - distance_from_rtt(s.rtt_raw),
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(TargetMode::Absolute),
            1 => Some(TargetMode::Correction),
            _ => None,
        }
    }
}

impl FromStr for TargetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "absolute" => Ok(TargetMode::Absolute),
            "correction" => Ok(TargetMode::Correction),
            _ => Err(format!("unknown target mode `{s}` (expected absolute or correction)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum Hyperparams {
    Tree { min_leaf_size: usize },
    Svr(SvrConfig),
    Gp(GpConfig),
    Nn(NnConfig),
}

impl Hyperparams {
    pub fn default_for(v: Variant) -> Self {
        match v {
            Variant::Tree => Hyperparams::Tree { min_leaf_size: 4 },
            Variant::Svr => Hyperparams::Svr(SvrConfig::default()),
            Variant::Gp => Hyperparams::Gp(GpConfig::default()),
            Variant::Nn => Hyperparams::Nn(NnConfig::default()),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Hyperparams::Tree { .. } => Variant::Tree,
            Hyperparams::Svr(_) => Variant::Svr,
            Hyperparams::Gp(_) => Variant::Gp,
            Hyperparams::Nn(_) => Variant::Nn,
        }
    }

    /// Sets a named tunable. Names: tree `min_leaf_size`; svr `c`,
    /// `epsilon`, `sigma_l`; gp `sigma_f`, `sigma_l`, `noise_sigma`,
    /// `max_points`; nn `lr`, `hidden`, `momentum`, `batch_size`, `epochs`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), MlError> {
        let count = |v: f64| -> Result<usize, MlError> {
            if v >= 1.0 && v.is_finite() {
                Ok(v.round() as usize)
            } else {
                Err(MlError::InvalidParameter(format!("{name} must be a count >= 1, got {v}")))
            }
        };
        match (self, name) {
            (Hyperparams::Tree { min_leaf_size }, "min_leaf_size") => *min_leaf_size = count(value)?,
            (Hyperparams::Svr(c), "c") => c.c = value,
            (Hyperparams::Svr(c), "epsilon") => c.epsilon = value,
            (Hyperparams::Svr(c), "sigma_l") => c.kernel.sigma_l = value,
            (Hyperparams::Gp(c), "sigma_f") => c.kernel.sigma_f = value,
            (Hyperparams::Gp(c), "sigma_l") => c.kernel.sigma_l = value,
            (Hyperparams::Gp(c), "noise_sigma") => c.kernel.noise_sigma = value,
            (Hyperparams::Gp(c), "max_points") => c.max_points = count(value)?,
            (Hyperparams::Nn(c), "lr") => c.lr = value,
            (Hyperparams::Nn(c), "hidden") => c.hidden = count(value)?,
            (Hyperparams::Nn(c), "momentum") => c.momentum = value,
            (Hyperparams::Nn(c), "batch_size") => c.batch_size = count(value)?,
            (Hyperparams::Nn(c), "epochs") => c.epochs = count(value)?,
            (hp, _) => {
                return Err(MlError::InvalidParameter(format!(
                    "unknown {} hyperparameter `{name}`",
                    hp.variant()
                )))
            }
        }
        Ok(())
    }

    /// Reseeds the stochastic parts (GP subsampling, NN init and batching).
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Hyperparams::Gp(c) => c.seed = seed,
            Hyperparams::Nn(c) => c.seed = seed,
            _ => {}
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub hyperparams: Hyperparams,
    pub target_mode: TargetMode,
}

impl TrainOptions {
    pub fn new(hyperparams: Hyperparams) -> Self {
        TrainOptions {
            hyperparams,
            target_mode: TargetMode::Absolute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "parameters", rename_all = "lowercase")]
pub enum Estimator {
    Tree(RegressionTree),
    Svr(Svr),
    Gp(GaussianProcess),
    Nn(Mlp),
}

impl Estimator {
    pub fn variant(&self) -> Variant {
        match self {
            Estimator::Tree(_) => Variant::Tree,
            Estimator::Svr(_) => Variant::Svr,
            Estimator::Gp(_) => Variant::Gp,
            Estimator::Nn(_) => Variant::Nn,
        }
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        match self {
            Estimator::Tree(m) => m.predict(z),
            Estimator::Svr(m) => m.predict(z),
            Estimator::Gp(m) => m.predict(z),
            Estimator::Nn(m) => m.predict(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub normalizer: Normalizer,
    pub target: TargetScale,
    pub target_mode: TargetMode,
    pub estimator: Estimator,
    /// Held-out loss reported by the NN trainer, in standardized units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_loss: Option<f64>,
}

impl TrainedModel {
    pub fn variant(&self) -> Variant {
        self.estimator.variant()
    }

    /// Distance estimate in meters, never negative.
    pub fn predict(&self, rtt_raw: f64, mean_rssi: f64) -> f64 {
        let z = self.normalizer.apply([rtt_raw, mean_rssi]);
        let t = self.target.inverse(self.estimator.predict(&z));
        let d = match self.target_mode {
            TargetMode::Absolute => t,
            TargetMode::Correction => t + distance_from_rtt(rtt_raw),
        };
        d.max(0.0)
    }
}

pub fn predict(model: &TrainedModel, rtt_raw: f64, mean_rssi: f64) -> f64 {
    model.predict(rtt_raw, mean_rssi)
}

pub fn train(samples: &[LabeledSample], opts: &TrainOptions) -> Result<TrainedModel, MlError> {
    let normalizer = fit_normalizer(samples)?;
    let x: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| normalizer.apply(s.features()).to_vec())
        .collect();
    let raw: Vec<f64> = samples.iter().map(|s| opts.target_mode.target(s)).collect();
    let target = TargetScale::fit(&raw);
    let y: Vec<f64> = raw.iter().map(|v| target.forward(*v)).collect();
    let mut validation_loss = None;
    let estimator = match &opts.hyperparams {
        Hyperparams::Tree { min_leaf_size } => {
            Estimator::Tree(RegressionTree::fit(&x, &y, *min_leaf_size)?)
        }
        Hyperparams::Svr(cfg) => Estimator::Svr(Svr::fit(&x, &y, cfg)?),
        Hyperparams::Gp(cfg) => Estimator::Gp(GaussianProcess::fit(&x, &y, cfg)?),
        Hyperparams::Nn(cfg) => {
            let fit = Mlp::fit(&x, &y, cfg)?;
            validation_loss = Some(fit.validation_loss);
            Estimator::Nn(fit.model)
        }
    };
    Ok(TrainedModel {
        normalizer,
        target,
        target_mode: opts.target_mode,
        estimator,
        validation_loss,
    })
}

pub fn train_tree(samples: &[LabeledSample], min_leaf_size: usize) -> Result<TrainedModel, MlError> {
    train(samples, &TrainOptions::new(Hyperparams::Tree { min_leaf_size }))
}

pub fn train_svr(samples: &[LabeledSample], c: f64, epsilon: f64) -> Result<TrainedModel, MlError> {
    train(
        samples,
        &TrainOptions::new(Hyperparams::Svr(SvrConfig {
            c,
            epsilon,
            kernel: KernelParams::gaussian(),
            ..SvrConfig::default()
        })),
    )
}

pub fn train_gp(samples: &[LabeledSample], kernel: KernelParams, max_points: usize) -> Result<TrainedModel, MlError> {
    train(
        samples,
        &TrainOptions::new(Hyperparams::Gp(GpConfig {
            kernel,
            max_points,
            ..GpConfig::default()
        })),
    )
}

/// Returns the model with its final validation loss.
pub fn train_nn(
    samples: &[LabeledSample],
    hidden: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(TrainedModel, f64), MlError> {
    let m = train(
        samples,
        &TrainOptions::new(Hyperparams::Nn(NnConfig {
            hidden,
            epochs,
            lr,
            seed,
            ..NnConfig::default()
        })),
    )?;
    let loss = m.validation_loss.unwrap_or(f64::NAN);
    Ok((m, loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize) -> Vec<LabeledSample> {
        (0..n)
            .map(|i| {
                let d = 1.0 + i as f64 * 0.5;
                LabeledSample {
                    rtt_raw: 2.0 * d / 0.299_792_458 + (i % 3) as f64,
                    mean_rssi: -40.0 - 20.0 * d.log10() + (i % 5) as f64,
                    true_distance: d,
                }
            })
            .collect()
    }

    #[test]
    fn constant_label_tree_predicts_constant() {
        let mut s = samples(20);
        for x in &mut s {
            x.true_distance = 5.0;
        }
        let m = train_tree(&s, 4).unwrap();
        for q in [(0.0, -90.0), (1000.0, 0.0), (50.0, -50.0)] {
            assert_eq!(predict(&m, q.0, q.1), 5.0);
        }
    }

    #[test]
    fn near_noiseless_gp_interpolates() {
        let s = samples(30);
        let m = train_gp(&s, KernelParams::exponential(4.6873, 0.7051, 1e-6), 2000).unwrap();
        for x in &s {
            assert!((predict(&m, x.rtt_raw, x.mean_rssi) - x.true_distance).abs() < 1e-3);
        }
    }

    #[test]
    fn predictions_are_frozen_and_nonnegative() {
        let s = samples(40);
        let m = train_svr(&s, 10.0, 0.1).unwrap();
        let a = predict(&m, 30.0, -60.0);
        let b = predict(&m, 30.0, -60.0);
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(predict(&m, -1e4, 0.0) >= 0.0);
    }

    #[test]
    fn correction_mode_adds_raw_distance() {
        let s = samples(30);
        let opts = TrainOptions {
            hyperparams: Hyperparams::Tree { min_leaf_size: 30 / 2 },
            target_mode: TargetMode::Correction,
        };
        let m = train(&s, &opts).unwrap();
        assert_eq!(m.target_mode, TargetMode::Correction);
        let x = &s[3];
        let p = predict(&m, x.rtt_raw, x.mean_rssi);
        assert!((p - distance_from_rtt(x.rtt_raw)).abs() < 5.0);
    }

    #[test]
    fn set_hyperparams_by_name() {
        let mut h = Hyperparams::default_for(Variant::Gp);
        h.set("noise_sigma", 0.5).unwrap();
        assert!(matches!(h, Hyperparams::Gp(c) if c.kernel.noise_sigma == 0.5));
        assert!(h.set("min_leaf_size", 3.0).is_err());
        let mut t = Hyperparams::default_for(Variant::Tree);
        assert!(t.set("min_leaf_size", 0.0).is_err());
        assert_eq!("nn".parse::<Variant>().unwrap(), Variant::Nn);
    }
}
