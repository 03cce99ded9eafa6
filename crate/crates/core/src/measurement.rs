//! Measurement records as logged by an FTM initiator.
//!
//! A burst ([`FtmMeasurement`]) holds the frames exchanged with one responder
//! plus the burst-level values reported by the firmware. Everything here is a
//! plain value type; validation reports problems as data instead of failing.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Tolerance used when comparing a stored RTT with the value recomputed from
/// timestamps or frames.
pub const RTT_TOLERANCE_NS: f64 = 0.5;

/// Channel bandwidth the exchange ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Bandwidth {
    Mhz20,
    Mhz40,
}

impl TryFrom<u32> for Bandwidth {
    type Error = String;

    fn try_from(mhz: u32) -> Result<Self, Self::Error> {
        Bandwidth::from_mhz(mhz).ok_or_else(|| format!("unsupported bandwidth {mhz} MHz"))
    }
}

impl From<Bandwidth> for u32 {
    fn from(b: Bandwidth) -> u32 {
        b.mhz()
    }
}

impl Bandwidth {
    pub fn mhz(self) -> u32 {
        match self {
            Bandwidth::Mhz20 => 20,
            Bandwidth::Mhz40 => 40,
        }
    }

    pub fn from_mhz(mhz: u32) -> Option<Self> {
        match mhz {
            20 => Some(Bandwidth::Mhz20),
            40 => Some(Bandwidth::Mhz40),
            _ => None,
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mhz())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Indoor,
    Outdoor,
    Test,
    Synthetic,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Indoor => "indoor",
            Scenario::Outdoor => "outdoor",
            Scenario::Test => "test",
            Scenario::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indoor" => Ok(Scenario::Indoor),
            "outdoor" => Ok(Scenario::Outdoor),
            "test" => Ok(Scenario::Test),
            "synthetic" => Ok(Scenario::Synthetic),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Timestamp quadruple of one frame, in picoseconds.
///
/// `t1`/`t4` come from the initiator clock, `t2`/`t3` from the responder
/// clock, so only within-device ordering is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
    pub t4: u64,
}

impl Timestamps {
    /// `((t4 - t1) - (t3 - t2))` converted to nanoseconds. `None` when either
    /// per-device interval is negative.
    pub fn rtt_ns(&self) -> Option<f64> {
        let round = self.t4.checked_sub(self.t1)?;
        let turnaround = self.t3.checked_sub(self.t2)?;
        Some((round as i128 - turnaround as i128) as f64 / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtmFrame {
    pub rssi: f64,
    pub rtt: f64,
    pub timestamps: Option<Timestamps>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtmMeasurement {
    pub anchor_id: String,
    pub rtt_raw: f64,
    pub rtt_est: Option<f64>,
    pub dist_est: Option<f64>,
    pub own_est: Option<f64>,
    pub num_frames: usize,
    pub frames: Vec<FtmFrame>,
    pub bandwidth: Bandwidth,
    pub true_distance: Option<f64>,
}

impl FtmMeasurement {
    pub fn mean_rssi(&self) -> Option<f64> {
        mean(self.frames.iter().map(|f| f.rssi))
    }

    pub fn mean_frame_rtt(&self) -> Option<f64> {
        mean(self.frames.iter().map(|f| f.rtt))
    }
}

/// Feature pair plus label: the unit every estimator is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub rtt_raw: f64,
    pub mean_rssi: f64,
    pub true_distance: f64,
}

impl LabeledSample {
    pub fn features(&self) -> [f64; 2] {
        [self.rtt_raw, self.mean_rssi]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub scenario: Scenario,
    pub measurements: Vec<FtmMeasurement>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, scenario: Scenario) -> Self {
        Dataset {
            name: name.into(),
            scenario,
            measurements: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Labeled samples for every measurement that has frames and ground truth.
    pub fn labeled_samples(&self) -> Vec<LabeledSample> {
        self.measurements
            .iter()
            .filter_map(|m| to_labeled_sample(m).ok())
            .collect()
    }
}

/// Structured invariant violations reported by [`validate_measurement`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Violation {
    FrameCountMismatch,
    RttRawNotMean,
    NegativeDistEst,
    NegativeOwnEst,
    NegativeTrueDistance,
    NonFiniteValue,
    /// Frame index carried along.
    TimestampOrdering(usize),
    FrameRttMismatch(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FrameCountMismatch => f.write_str("FrameCountMismatch"),
            Violation::RttRawNotMean => f.write_str("RttRawNotMean"),
            Violation::NegativeDistEst => f.write_str("NegativeDistEst"),
            Violation::NegativeOwnEst => f.write_str("NegativeOwnEst"),
            Violation::NegativeTrueDistance => f.write_str("NegativeTrueDistance"),
            Violation::NonFiniteValue => f.write_str("NonFiniteValue"),
            Violation::TimestampOrdering(i) => write!(f, "TimestampOrdering(frame {i})"),
            Violation::FrameRttMismatch(i) => write!(f, "FrameRttMismatch(frame {i})"),
        }
    }
}

pub fn validate_measurement(m: &FtmMeasurement) -> Vec<Violation> {
    let mut out = Vec::new();

    let finite = m.rtt_raw.is_finite()
        && [m.rtt_est, m.dist_est, m.own_est, m.true_distance]
            .iter()
            .flatten()
            .all(|v| v.is_finite())
        && m.frames.iter().all(|f| f.rssi.is_finite() && f.rtt.is_finite());
    if !finite {
        out.push(Violation::NonFiniteValue);
    }

    if m.num_frames != m.frames.len() {
        out.push(Violation::FrameCountMismatch);
    }
    if let Some(avg) = m.mean_frame_rtt() {
        if (avg - m.rtt_raw).abs() > RTT_TOLERANCE_NS {
            out.push(Violation::RttRawNotMean);
        }
    }
    if m.dist_est.is_some_and(|d| d < 0.0) {
        out.push(Violation::NegativeDistEst);
    }
    if m.own_est.is_some_and(|d| d < 0.0) {
        out.push(Violation::NegativeOwnEst);
    }
    if m.true_distance.is_some_and(|d| d < 0.0) {
        out.push(Violation::NegativeTrueDistance);
    }

    for (i, frame) in m.frames.iter().enumerate() {
        let Some(ts) = frame.timestamps else { continue };
        match ts.rtt_ns() {
            None => out.push(Violation::TimestampOrdering(i)),
            Some(rtt) if (rtt - frame.rtt).abs() > RTT_TOLERANCE_NS => {
                out.push(Violation::FrameRttMismatch(i))
            }
            Some(_) => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("measurement has no frames")]
    NoFrames,
    #[error("measurement has no ground-truth distance")]
    NoGroundTruth,
}

pub fn to_labeled_sample(m: &FtmMeasurement) -> Result<LabeledSample, SampleError> {
    let mean_rssi = m.mean_rssi().ok_or(SampleError::NoFrames)?;
    let true_distance = m.true_distance.ok_or(SampleError::NoGroundTruth)?;
    Ok(LabeledSample {
        rtt_raw: m.rtt_raw,
        mean_rssi,
        true_distance,
    })
}

/// Order-independent mean: values are summed in sorted order so the result
/// does not depend on frame order.
pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn consistent_record_is_valid() {
        let m = measurement(
            vec![frame(-50.0, 10.0), frame(-52.0, 20.0), frame(-54.0, 30.0)],
            20.0,
            Some(3.0),
        );
        assert!(validate_measurement(&m).is_empty());
    }

    #[test]
    fn frame_count_mismatch() {
        let mut m = measurement(
            vec![frame(-50.0, 10.0), frame(-50.0, 10.0), frame(-50.0, 10.0)],
            10.0,
            None,
        );
        m.num_frames = 5;
        assert_eq!(validate_measurement(&m), vec![Violation::FrameCountMismatch]);
    }

    #[test]
    fn rtt_raw_must_be_frame_mean() {
        let m = measurement(vec![frame(-50.0, 10.0), frame(-50.0, 20.0)], 12.0, None);
        assert_eq!(validate_measurement(&m), vec![Violation::RttRawNotMean]);
        let ok = measurement(vec![frame(-50.0, 10.0), frame(-50.0, 20.0)], 15.4, None);
        assert!(validate_measurement(&ok).is_empty());
    }

    #[test]
    fn negative_distances_flagged() {
        let mut m = measurement(vec![frame(-50.0, 10.0)], 10.0, Some(-1.0));
        m.dist_est = Some(-0.5);
        let v = validate_measurement(&m);
        assert!(v.contains(&Violation::NegativeDistEst));
        assert!(v.contains(&Violation::NegativeTrueDistance));
    }

    #[test]
    fn timestamps_checked_against_frame_rtt() {
        let mut f = frame(-40.0, 80.0);
        f.timestamps = Some(Timestamps {
            t1: 0,
            t2: 40_000,
            t3: 60_000,
            t4: 100_000,
        });
        let m = measurement(vec![f.clone()], 80.0, None);
        assert!(validate_measurement(&m).is_empty());

        f.rtt = 81.0;
        let m = measurement(vec![f.clone()], 81.0, None);
        assert_eq!(validate_measurement(&m), vec![Violation::FrameRttMismatch(0)]);

        f.timestamps = Some(Timestamps {
            t1: 10,
            t2: 40_000,
            t3: 60_000,
            t4: 5,
        });
        let m = measurement(vec![f], 81.0, None);
        assert_eq!(validate_measurement(&m), vec![Violation::TimestampOrdering(0)]);
    }

    #[test]
    fn labeled_sample_examples() {
        let m = measurement(vec![frame(-40.0, 50.0), frame(-60.0, 50.0)], 50.0, Some(5.0));
        assert_eq!(
            to_labeled_sample(&m).unwrap(),
            LabeledSample {
                rtt_raw: 50.0,
                mean_rssi: -50.0,
                true_distance: 5.0
            }
        );

        let m = measurement(vec![frame(-70.0, 5.0)], 5.0, Some(1.0));
        assert_eq!(to_labeled_sample(&m).unwrap().mean_rssi, -70.0);

        let m = measurement(
            vec![
                frame(-45.0, 33.0),
                frame(-50.0, 33.0),
                frame(-55.0, 33.0),
                frame(-50.0, 33.0),
            ],
            33.0,
            Some(3.0),
        );
        let s = to_labeled_sample(&m).unwrap();
        assert_eq!((s.rtt_raw, s.mean_rssi, s.true_distance), (33.0, -50.0, 3.0));
    }

    #[test]
    fn labeled_sample_errors() {
        let m = measurement(vec![], 50.0, Some(5.0));
        assert_eq!(to_labeled_sample(&m), Err(SampleError::NoFrames));
        let m = measurement(vec![frame(-40.0, 50.0)], 50.0, None);
        assert_eq!(to_labeled_sample(&m), Err(SampleError::NoGroundTruth));
    }

    proptest! {
        #[test]
        fn labeled_sample_is_permutation_invariant(
            rssi in prop::collection::vec(-100.0f64..0.0, 1..16),
            rot in 0usize..16,
        ) {
            let frames: Vec<_> = rssi.iter().map(|&r| frame(r, 10.0)).collect();
            let mut rotated = frames.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let a = to_labeled_sample(&measurement(frames, 10.0, Some(1.0))).unwrap();
            let b = to_labeled_sample(&measurement(rotated, 10.0, Some(1.0))).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn valid_with_truth_converts(
            rtts in prop::collection::vec(0.0f64..200.0, 1..10),
            truth in 0.0f64..50.0,
        ) {
            let frames: Vec<_> = rtts.iter().map(|&r| frame(-60.0, r)).collect();
            let avg = rtts.iter().sum::<f64>() / rtts.len() as f64;
            let m = measurement(frames, avg, Some(truth));
            prop_assert!(validate_measurement(&m).is_empty());
            prop_assert!(to_labeled_sample(&m).is_ok());
        }
    }
}
