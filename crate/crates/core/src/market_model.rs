//! Contract windows, market resolutions and conversion between the day-ahead
//! and the balancing (imbalance settlement) time grid.
//!
//! Units used across the crate: energy in MWh, power in MW, prices in
//! EUR/MWh, installed capacity in MW. Timestamps are UTC; DST handling is the
//! ingestion layer's problem, so a local 23- or 25-hour day is simply 23 or 25
//! consecutive windows here.

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolutions of the day-ahead contracts and the imbalance settlement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketResolution {
    day_ahead_minutes: u32,
    balancing_minutes: u32,
}

impl MarketResolution {
    pub fn new(day_ahead_minutes: u32, balancing_minutes: u32) -> Result<Self> {
        if day_ahead_minutes == 0 || balancing_minutes == 0 {
            return Err(Error::Resolution("resolutions must be positive".into()));
        }
        if !day_ahead_minutes.is_multiple_of(balancing_minutes) {
            return Err(Error::Resolution(format!(
                "day-ahead resolution {day_ahead_minutes} min is not a multiple of balancing resolution {balancing_minutes} min"
            )));
        }
        if 60 % balancing_minutes != 0 {
            return Err(Error::Resolution(format!(
                "balancing resolution {balancing_minutes} min must divide 60"
            )));
        }
        Ok(Self {
            day_ahead_minutes,
            balancing_minutes,
        })
    }

    /// Hourly day-ahead contracts settled on quarter-hours.
    pub fn hourly_quarter() -> Self {
        Self {
            day_ahead_minutes: 60,
            balancing_minutes: 15,
        }
    }

    pub fn day_ahead_minutes(&self) -> u32 {
        self.day_ahead_minutes
    }

    pub fn balancing_minutes(&self) -> u32 {
        self.balancing_minutes
    }

    /// Number of balancing periods per day-ahead contract.
    pub fn periods_per_contract(&self) -> usize {
        (self.day_ahead_minutes / self.balancing_minutes) as usize
    }

    /// Day-ahead window length in hours, converting MW capacity to MWh per contract.
    pub fn day_ahead_hours(&self) -> f64 {
        f64::from(self.day_ahead_minutes) / 60.0
    }

    pub fn balancing_hours(&self) -> f64 {
        f64::from(self.balancing_minutes) / 60.0
    }

    /// Energy the installed capacity can deliver in one day-ahead window.
    pub fn contract_capacity_mwh(&self, beta_mw: f64) -> f64 {
        beta_mw * self.day_ahead_hours()
    }

    /// Energy the installed capacity can deliver in one balancing period.
    pub fn period_capacity_mwh(&self, beta_mw: f64) -> f64 {
        beta_mw * self.balancing_hours()
    }
}

/// A half-open delivery window `[start, start + resolution)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContractWindow {
    start: DateTime<Utc>,
    resolution_minutes: u32,
}

impl ContractWindow {
    pub fn new(start: DateTime<Utc>, resolution_minutes: u32) -> Result<Self> {
        if resolution_minutes == 0 {
            return Err(Error::Resolution("window resolution must be positive".into()));
        }
        if !is_aligned(start, resolution_minutes) {
            return Err(Error::Alignment {
                start,
                resolution_minutes,
            });
        }
        Ok(Self {
            start,
            resolution_minutes,
        })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::minutes(i64::from(self.resolution_minutes))
    }

    pub fn resolution_minutes(&self) -> u32 {
        self.resolution_minutes
    }

    pub fn contains(&self, other: &ContractWindow) -> bool {
        other.start >= self.start && other.end() <= self.end()
    }

    pub fn next(&self) -> ContractWindow {
        ContractWindow {
            start: self.end(),
            resolution_minutes: self.resolution_minutes,
        }
    }
}

/// Whether `t` sits on a `resolution_minutes` boundary counted from midnight UTC.
pub fn is_aligned(t: DateTime<Utc>, resolution_minutes: u32) -> bool {
    if resolution_minutes == 0 || t.second() != 0 || t.nanosecond() != 0 {
        return false;
    }
    let minute_of_day = t.hour() * 60 + t.minute();
    if resolution_minutes <= 24 * 60 {
        minute_of_day.is_multiple_of(resolution_minutes)
    } else {
        t.timestamp().rem_euclid(i64::from(resolution_minutes) * 60) == 0
    }
}

/// Splits a day-ahead window into its consecutive balancing windows.
pub fn sub_windows(w: &ContractWindow, res: &MarketResolution) -> Result<Vec<ContractWindow>> {
    if w.resolution_minutes != res.day_ahead_minutes {
        return Err(Error::Resolution(format!(
            "window has {}-minute resolution, expected day-ahead resolution {}",
            w.resolution_minutes, res.day_ahead_minutes
        )));
    }
    if !is_aligned(w.start, w.resolution_minutes) {
        return Err(Error::Alignment {
            start: w.start,
            resolution_minutes: w.resolution_minutes,
        });
    }
    let step = Duration::minutes(i64::from(res.balancing_minutes));
    Ok((0..res.periods_per_contract())
        .map(|i| ContractWindow {
            start: w.start + step * i as i32,
            resolution_minutes: res.balancing_minutes,
        })
        .collect())
}

/// Mean of the balancing-period prices inside one day-ahead window.
pub fn resample_mean(quarter_values: &[f64], n: usize) -> Result<f64> {
    if n == 0 || quarter_values.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: quarter_values.len(),
        });
    }
    if let Some(v) = quarter_values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite price {v} in resampling input")));
    }
    let first = quarter_values[0];
    if quarter_values.iter().all(|v| *v == first) {
        // summing n copies can round; the mean of a constant is the constant
        return Ok(first);
    }
    Ok(quarter_values.iter().sum::<f64>() / n as f64)
}
