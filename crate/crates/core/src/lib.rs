//! Wi-Fi Fine Time Measurement (802.11mc) ranging toolkit.
//!
//! The crate covers the whole offline pipeline around FTM ranging with
//! low-cost chips:
//!
//! - [`protocol`]: the four-timestamp exchange and its RTT relation.
//! - [`channel`]: synthetic indoor/outdoor radio environments and presets.
//! - [`correction`]: RTT to distance conversion and the piecewise-linear
//!   firmware correction, including recovering its breakpoints from logs.
//! - [`ml`]: regression tree, SVR, GP and shallow network estimators over
//!   `(rtt_raw, mean RSSI)`, with cross-validated search and a compact
//!   portable model format.
//! - [`eval`]: ECDFs, error summaries and RSSI profiles.
//! - [`energy`]: duty-cycle current and battery lifetime model.
//! - [`io`]: dataset files, external log import and experiment configs.
//! - [`cli`]: the batch command-line frontend.
//!
//! ```
//! use ftmkit::correction::distance_from_rtt;
//! let d = distance_from_rtt(66.713);
//! assert!((d - 10.0).abs() < 1e-3);
//! ```

pub mod channel;
pub mod cli;
pub mod correction;
pub mod energy;
pub mod eval;
pub mod io;
pub mod measurement;
pub mod ml;
pub mod protocol;

pub use measurement::{
    to_labeled_sample, validate_measurement, Bandwidth, Dataset, FtmFrame, FtmMeasurement,
    LabeledSample, Scenario, Timestamps, Violation,
};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
