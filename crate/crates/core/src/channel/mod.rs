//! Synthetic radio environments.
//!
//! RSSI follows a log-distance path loss with log-normal shadowing. RTT gets
//! a per-frame Gaussian error, a fixed hardware delay, and, with probability
//! `nlos_probability`, an exponentially distributed excess delay shared by the
//! whole burst (the first path is missed and a reflection is timestamped
//! instead). Bursts flagged as NLOS also lose `nlos_attenuation_db` of power.
//!
//! Each tag position draws from its own ChaCha stream, so serial and parallel
//! generation give identical datasets.

mod presets;

pub use presets::{preset, preset_names, Preset, PresetError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correction::{distance_from_rtt, PiecewiseLinearMap};
use crate::measurement::{Bandwidth, Dataset, FtmMeasurement, Scenario};
use crate::protocol::{simulate_exchange, ExchangeConfig, NoiseModel, ProtocolError};

/// Reference distance of the path-loss model, meters.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;
/// Distances below this are clamped before evaluating path loss.
pub const MIN_PATHLOSS_DISTANCE_M: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("invalid channel model: {0}")]
    InvalidModel(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub pathloss_exponent: f64,
    /// Received power at 1 m, dBm.
    pub pl0_dbm: f64,
    pub shadowing_sigma_db: f64,
    /// Per-frame RTT noise, ns.
    pub rtt_noise_sigma_ns: f64,
    pub nlos_probability: f64,
    /// Mean of the exponential NLOS excess delay, ns.
    pub nlos_excess_mean_ns: f64,
    /// Constant delay added to every burst, ns.
    #[serde(default)]
    pub rtt_bias_ns: f64,
    #[serde(default)]
    pub nlos_attenuation_db: f64,
    #[serde(default = "default_frame_rssi_sigma")]
    pub frame_rssi_sigma_db: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_frame_rssi_sigma() -> f64 {
    0.5
}

impl ChannelModel {
    /// Free-space-like channel with no noise at all.
    pub fn ideal(pl0_dbm: f64, pathloss_exponent: f64) -> Self {
        ChannelModel {
            pathloss_exponent,
            pl0_dbm,
            shadowing_sigma_db: 0.0,
            rtt_noise_sigma_ns: 0.0,
            nlos_probability: 0.0,
            nlos_excess_mean_ns: 0.0,
            rtt_bias_ns: 0.0,
            nlos_attenuation_db: 0.0,
            frame_rssi_sigma_db: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let sigmas = [
            self.shadowing_sigma_db,
            self.rtt_noise_sigma_ns,
            self.frame_rssi_sigma_db,
            self.nlos_excess_mean_ns,
        ];
        if !(self.pathloss_exponent > 0.0) {
            return Err(ChannelError::InvalidModel("pathloss_exponent must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.nlos_probability) {
            return Err(ChannelError::InvalidModel("nlos_probability must be in [0, 1]"));
        }
        if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(ChannelError::InvalidModel("sigmas and means must be >= 0"));
        }
        if !self.pl0_dbm.is_finite() || !self.rtt_bias_ns.is_finite() {
            return Err(ChannelError::InvalidModel("non-finite parameter"));
        }
        Ok(())
    }

    /// Mean received power at `d` meters, without shadowing.
    pub fn mean_rssi(&self, d: f64) -> f64 {
        self.pl0_dbm - 10.0 * self.pathloss_exponent * (d / REFERENCE_DISTANCE_M).log10()
    }
}

/// Log-distance path loss plus Gaussian shadowing.
pub fn rssi_at<R: Rng + ?Sized>(d: f64, ch: &ChannelModel, rng: &mut R) -> Result<f64, ChannelError> {
    if !(d > 0.0) {
        return Err(ChannelError::NonPositiveDistance(d));
    }
    let shadow = if ch.shadowing_sigma_db > 0.0 {
        Normal::new(0.0, ch.shadowing_sigma_db)
            .expect("validated sigma")
            .sample(rng)
    } else {
        0.0
    };
    Ok(ch.mean_rssi(d) + shadow)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub scenario: Scenario,
    pub anchor_positions: Vec<[f64; 3]>,
    pub tag_positions: Vec<[f64; 3]>,
    pub bandwidth: Bandwidth,
    /// Bursts per (tag position, anchor).
    pub dwell: usize,
    pub channel: ChannelModel,
    pub exchange: ExchangeConfig,
    /// When set, each burst also gets firmware-style `rtt_est`/`dist_est`.
    pub vendor_map: Option<PiecewiseLinearMap>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.anchor_positions.is_empty() {
            return Err(ChannelError::InvalidScenario("no anchors".into()));
        }
        if self.tag_positions.is_empty() {
            return Err(ChannelError::InvalidScenario("no tag positions".into()));
        }
        if self.dwell == 0 {
            return Err(ChannelError::InvalidScenario("dwell must be >= 1".into()));
        }
        self.channel.validate()?;
        self.exchange.validate()?;
        Ok(())
    }

    pub fn measurement_count(&self) -> usize {
        self.anchor_positions.len() * self.tag_positions.len() * self.dwell
    }
}

fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Generates one burst per (tag position, anchor, repeat), tag-major.
pub fn generate_dataset(spec: &ScenarioSpec) -> Result<Dataset, ChannelError> {
    spec.validate()?;
    let per_tag: Result<Vec<Vec<FtmMeasurement>>, ChannelError> = spec
        .tag_positions
        .par_iter()
        .enumerate()
        .map(|(i, tag)| generate_at_position(spec, i as u64, tag))
        .collect();
    Ok(Dataset {
        name: spec.name.clone(),
        scenario: spec.scenario,
        measurements: per_tag?.into_iter().flatten().collect(),
    })
}

fn generate_at_position(
    spec: &ScenarioSpec,
    stream: u64,
    tag: &[f64; 3],
) -> Result<Vec<FtmMeasurement>, ChannelError> {
    let ch = &spec.channel;
    let mut rng = ChaCha8Rng::seed_from_u64(ch.rng_seed);
    rng.set_stream(stream);
    let excess = (ch.nlos_excess_mean_ns > 0.0)
        .then(|| Exp::new(1.0 / ch.nlos_excess_mean_ns).expect("positive mean"));

    let mut out = Vec::with_capacity(spec.anchor_positions.len() * spec.dwell);
    for (a, anchor) in spec.anchor_positions.iter().enumerate() {
        let d = round3(euclid(tag, anchor));
        for _ in 0..spec.dwell {
            let nlos = ch.nlos_probability > 0.0 && rng.random_bool(ch.nlos_probability);
            let excess_ns = match (&excess, nlos) {
                (Some(e), true) => e.sample(&mut rng),
                _ => 0.0,
            };
            let mut rssi = rssi_at(d.max(MIN_PATHLOSS_DISTANCE_M), ch, &mut rng)?;
            if nlos {
                rssi -= ch.nlos_attenuation_db;
            }
            let noise = NoiseModel {
                frame_rtt_sigma_ns: ch.rtt_noise_sigma_ns,
                excess_delay_ns: ch.rtt_bias_ns + excess_ns,
                rssi_dbm: rssi,
                rssi_frame_sigma_db: ch.frame_rssi_sigma_db,
            };
            let cfg = ExchangeConfig {
                rng_seed: rng.random(),
                bandwidth: spec.bandwidth,
                ..spec.exchange.clone()
            };
            let mut m = simulate_exchange(d, &cfg, &noise)?;
            m.anchor_id = format!("A{a}");
            if let Some(map) = &spec.vendor_map {
                let est = round3(map.apply(m.rtt_raw));
                m.rtt_est = Some(est);
                m.dist_est = Some(round3(distance_from_rtt(est).max(0.0)));
            }
            out.push(m);
        }
    }
    Ok(out)
}
