//! Duty-cycle current model of a device that wakes up periodically to run
//! one FTM exchange and sleeps otherwise.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("period {period} s must be longer than the FTM operation ({t_ftm} s)")]
    PeriodTooShort { period: f64, t_ftm: f64 },
    #[error("invalid energy profile: {0}")]
    InvalidProfile(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyProfile {
    /// Deep-sleep current, mA.
    pub i_sleep: f64,
    /// Average current while an FTM operation runs, mA.
    pub i_ftm_avg: f64,
    /// Duration of one FTM operation, s.
    pub t_ftm: f64,
    /// mAh.
    pub battery_capacity: f64,
}

impl Default for EnergyProfile {
    fn default() -> Self {
        EnergyProfile {
            i_sleep: 0.5606,
            i_ftm_avg: 75.6,
            t_ftm: 0.636,
            battery_capacity: 2000.0,
        }
    }
}

impl EnergyProfile {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.i_sleep) {
            return Err(EnergyError::InvalidProfile("i_sleep must be > 0"));
        }
        if !ok(self.i_ftm_avg) {
            return Err(EnergyError::InvalidProfile("i_ftm_avg must be > 0"));
        }
        if !ok(self.t_ftm) {
            return Err(EnergyError::InvalidProfile("t_ftm must be > 0"));
        }
        if !ok(self.battery_capacity) {
            return Err(EnergyError::InvalidProfile("battery_capacity must be > 0"));
        }
        Ok(())
    }

    fn check(&self, period: f64) -> Result<(), EnergyError> {
        self.validate()?;
        if !(period > self.t_ftm) {
            return Err(EnergyError::PeriodTooShort {
                period,
                t_ftm: self.t_ftm,
            });
        }
        Ok(())
    }
}

/// Time-weighted mean current over one period, mA.
pub fn average_current(p: &EnergyProfile, period: f64) -> Result<f64, EnergyError> {
    p.check(period)?;
    Ok((p.t_ftm * p.i_ftm_avg + (period - p.t_ftm) * p.i_sleep) / period)
}

/// Whole days of operation on one battery charge.
pub fn battery_lifetime(p: &EnergyProfile, period: f64) -> Result<u32, EnergyError> {
    let hours = p.battery_capacity / average_current(p, period)?;
    Ok((hours / 24.0).floor() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyBudget {
    /// Charge drawn while sleeping during one day, mAh.
    pub e_idle: f64,
    /// Charge drawn by FTM operations during one day, mAh.
    pub e_ftm: f64,
    pub idle_time_fraction: f64,
}

impl DailyBudget {
    pub fn total(&self) -> f64 {
        self.e_idle + self.e_ftm
    }
}

pub fn daily_budget(p: &EnergyProfile, period: f64) -> Result<DailyBudget, EnergyError> {
    let avg = average_current(p, period)?;
    let ftm_fraction = p.t_ftm / period;
    let e_ftm = p.t_ftm * p.i_ftm_avg / period * 24.0;
    Ok(DailyBudget {
        // derived by subtraction so the two parts add up to the daily total
        e_idle: avg * 24.0 - e_ftm,
        e_ftm,
        idle_time_fraction: 1.0 - ftm_fraction,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeRow {
    pub algorithm: String,
    pub period_s: f64,
    pub average_current_ma: f64,
    pub lifetime_days: u32,
}

/// Current and lifetime per algorithm and period. Each algorithm may carry
/// its own FTM current; `None` uses the profile's value.
pub fn lifetime_table(
    p: &EnergyProfile,
    algorithms: &[(&str, Option<f64>)],
    periods: &[f64],
) -> Result<Vec<LifetimeRow>, EnergyError> {
    let mut rows = Vec::new();
    for (name, i_ftm) in algorithms {
        let prof = EnergyProfile {
            i_ftm_avg: i_ftm.unwrap_or(p.i_ftm_avg),
            ..*p
        };
        for &period in periods {
            rows.push(LifetimeRow {
                algorithm: name.to_string(),
                period_s: period,
                average_current_ma: average_current(&prof, period)?,
                lifetime_days: battery_lifetime(&prof, period)?,
            });
        }
    }
    Ok(rows)
}

pub fn lifetime_table_tsv(rows: &[LifetimeRow]) -> String {
    let mut out = String::from("algorithm\tperiod_s\taverage_current_ma\tlifetime_days\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.4}\t{}",
            r.algorithm, r.period_s, r.average_current_ma, r.lifetime_days
        );
    }
    out
}

/// Periods of the reference lifetime table: 10 s, 1 min, 10 min, 30 min, 1 h.
pub const REFERENCE_PERIODS_S: [f64; 5] = [10.0, 60.0, 600.0, 1800.0, 3600.0];
