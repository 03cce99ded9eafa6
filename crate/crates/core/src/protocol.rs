//! Initiator/responder timestamp exchange.
//!
//! ```text
//!  initiator            responder
//!   t1 |----- FTM ------->| t2
//!      |                  |  turnaround
//!   t4 |<----- ACK -------| t3
//! ```
//!
//! `rtt = (t4 - t1) - (t3 - t2)`. Each side only differences its own clock,
//! so clock offsets and the responder turnaround cancel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::measurement::{Bandwidth, FtmFrame, FtmMeasurement, Timestamps};
use crate::SPEED_OF_LIGHT;

/// Spacing between frame departures inside one burst, in picoseconds.
const FRAME_SPACING_PS: u64 = 1_000_000_000;
/// Scale of the random per-burst clock offsets, in picoseconds. Offsets
/// start at this value so shifted timestamps never go negative.
const MAX_CLOCK_OFFSET_PS: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("timestamps out of order: t4 < t1 or t3 < t2")]
    InvalidOrdering,
    #[error("invalid exchange configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("distance must be finite and non-negative, got {0}")]
    InvalidDistance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeConfig {
    pub frames_per_burst: usize,
    /// Picoseconds per clock tick.
    pub clock_resolution_ps: u64,
    /// Mean responder turnaround `t3 - t2`, nanoseconds.
    pub processing_delay_mean_ns: f64,
    pub processing_delay_jitter_ns: f64,
    pub bandwidth: Bandwidth,
    pub rng_seed: u64,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        ExchangeConfig {
            frames_per_burst: 8,
            clock_resolution_ps: 1,
            processing_delay_mean_ns: 10_000.0,
            processing_delay_jitter_ns: 50.0,
            bandwidth: Bandwidth::Mhz40,
            rng_seed: 0,
        }
    }
}

impl ExchangeConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.frames_per_burst == 0 {
            return Err(ProtocolError::InvalidConfig("frames_per_burst must be >= 1"));
        }
        if self.clock_resolution_ps == 0 {
            return Err(ProtocolError::InvalidConfig("clock_resolution_ps must be >= 1"));
        }
        if !(self.processing_delay_mean_ns >= 0.0 && self.processing_delay_jitter_ns >= 0.0) {
            return Err(ProtocolError::InvalidConfig("delays must be >= 0"));
        }
        Ok(())
    }
}

/// Perturbations applied to one burst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Independent Gaussian RTT error per frame, ns.
    pub frame_rtt_sigma_ns: f64,
    /// Extra delay shared by every frame of the burst (hardware bias, NLOS
    /// excess path), ns.
    pub excess_delay_ns: f64,
    /// Mean received power for the burst, dBm.
    pub rssi_dbm: f64,
    /// Per-frame RSSI fluctuation around `rssi_dbm`, dB.
    pub rssi_frame_sigma_db: f64,
}

impl NoiseModel {
    pub fn zero(rssi_dbm: f64) -> Self {
        NoiseModel {
            frame_rtt_sigma_ns: 0.0,
            excess_delay_ns: 0.0,
            rssi_dbm,
            rssi_frame_sigma_db: 0.0,
        }
    }
}

/// Standard FTM relation over one timestamp quadruple, in nanoseconds.
pub fn rtt_from_timestamps(t1: u64, t2: u64, t3: u64, t4: u64) -> Result<f64, ProtocolError> {
    Timestamps { t1, t2, t3, t4 }
        .rtt_ns()
        .ok_or(ProtocolError::InvalidOrdering)
}

fn gaussian<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(mean, sigma).expect("finite sigma").sample(rng)
    } else {
        mean
    }
}

fn round_to_tick(ps: f64, tick: u64) -> i64 {
    (ps / tick as f64).round() as i64 * tick as i64
}

/// Simulates one burst between a tag and an anchor `true_distance` meters
/// apart.
///
/// Departure times sit on tick boundaries and arrivals are rounded to the
/// nearest tick, so in the absence of noise each frame's RTT is off by at
/// most one tick. RSSI is reported in whole dBm, as chips do, and `rtt_raw`
/// is the frame mean rounded to the picosecond.
pub fn simulate_exchange(
    true_distance: f64,
    cfg: &ExchangeConfig,
    noise: &NoiseModel,
) -> Result<FtmMeasurement, ProtocolError> {
    if !(true_distance >= 0.0 && true_distance.is_finite()) {
        return Err(ProtocolError::InvalidDistance(true_distance));
    }
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let tick = cfg.clock_resolution_ps;
    let offset_ticks = MAX_CLOCK_OFFSET_PS / tick;
    let initiator_offset = MAX_CLOCK_OFFSET_PS + rng.random_range(0..offset_ticks) * tick;
    let responder_offset = MAX_CLOCK_OFFSET_PS + rng.random_range(0..offset_ticks) * tick;
    let spacing = (FRAME_SPACING_PS / tick).max(1) * tick;
    let tof_ps = true_distance / SPEED_OF_LIGHT * 1e12;

    let mut frames = Vec::with_capacity(cfg.frames_per_burst);
    for k in 0..cfg.frames_per_burst as u64 {
        let jitter_ns = gaussian(&mut rng, 0.0, noise.frame_rtt_sigma_ns);
        let delay_ps = (noise.excess_delay_ns + jitter_ns) * 1000.0;
        let forward_ps = tof_ps + delay_ps / 2.0;
        let backward_ps = tof_ps + delay_ps / 2.0;

        let turnaround_ns = gaussian(
            &mut rng,
            cfg.processing_delay_mean_ns,
            cfg.processing_delay_jitter_ns,
        )
        .max(0.0);
        let turnaround = round_to_tick(turnaround_ns * 1000.0, tick).max(0);

        let depart = k * spacing;
        let t1 = initiator_offset + depart;
        // responder clock reading of the arrival, then departure after turnaround
        let t2 = (responder_offset + depart) as i64 + round_to_tick(forward_ps, tick);
        let t3 = t2 + turnaround;
        // initiator clock reading of the ACK arrival
        let t4 = t3 + initiator_offset as i64 - responder_offset as i64
            + round_to_tick(backward_ps, tick);
        let ts = Timestamps {
            t1,
            t2: t2 as u64,
            t3: t3 as u64,
            t4: t4 as u64,
        };
        let rtt = ts.rtt_ns().ok_or(ProtocolError::InvalidOrdering)?;
        let rssi = gaussian(&mut rng, noise.rssi_dbm, noise.rssi_frame_sigma_db).round();
        frames.push(FtmFrame {
            rssi,
            rtt,
            timestamps: Some(ts),
        });
    }

    let sum_ps: i128 = frames
        .iter()
        .map(|f| (f.rtt * 1000.0).round() as i128)
        .sum();
    let rtt_raw = (sum_ps as f64 / frames.len() as f64).round() / 1000.0;

    Ok(FtmMeasurement {
        anchor_id: "A0".into(),
        rtt_raw,
        rtt_est: None,
        dist_est: None,
        own_est: None,
        num_frames: frames.len(),
        frames,
        bandwidth: cfg.bandwidth,
        true_distance: Some(true_distance),
    })
}
