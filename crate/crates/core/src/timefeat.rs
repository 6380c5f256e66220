//! Time features derived from event timestamps.
//!
//! The transferable encoding is *duration since start* divided by a
//! per-domain statistic (a quantile, the mean or the maximum of the
//! training values), so that a scaled value of 1.0 means the same thing in
//! every process. Min-max scaling, cyclic sine encodings and an
//! autoencoder latent are available for comparison.

use std::f64::consts::PI;

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{days_between, EventLog, Trace};
use crate::nn::TimeAutoencoder;
use crate::stats;

/// Days elapsed between the first event of `trace` and event `index`.
pub fn duration_since_start(trace: &Trace, index: usize) -> Result<f64> {
    let event = trace.events.get(index).ok_or(Error::IndexOutOfRange {
        index,
        len: trace.len(),
    })?;
    Ok(days_between(trace.first_timestamp(), event.timestamp))
}

/// Every per-event duration-since-start value of a log, in days.
pub fn durations_since_start(log: &EventLog) -> Vec<f64> {
    log.traces()
        .iter()
        .flat_map(|t| {
            let start = t.first_timestamp();
            t.events.iter().map(move |e| days_between(start, e.timestamp))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalingStrategy {
    RelativeQuantile { q: f64 },
    RelativeMean,
    RelativeMax,
    MinMax,
}

impl Default for ScalingStrategy {
    fn default() -> Self {
        ScalingStrategy::RelativeQuantile { q: 0.70 }
    }
}

impl ScalingStrategy {
    pub fn is_relative(&self) -> bool {
        !matches!(self, ScalingStrategy::MinMax)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalerParams {
    Divisor { divisor: f64 },
    Range { min: f64, max: f64 },
}

/// Fitted duration scaler. Statistics are in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeScaler {
    pub strategy: ScalingStrategy,
    pub params: ScalerParams,
    pub fitted_on: String,
}

pub fn fit_time_scaler(train: &EventLog, strategy: ScalingStrategy) -> Result<TimeScaler> {
    if train.is_empty() {
        return Err(Error::EmptyLog);
    }
    fit_scaler_on_values(&durations_since_start(train), strategy, &train.name)
}

pub fn fit_scaler_on_values(values: &[f64], strategy: ScalingStrategy, fitted_on: &str) -> Result<TimeScaler> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return Err(Error::DegenerateScaler("all durations are zero".into()));
    }
    let params = match strategy {
        ScalingStrategy::MinMax => {
            if max <= min {
                return Err(Error::DegenerateScaler("min equals max".into()));
            }
            ScalerParams::Range { min, max }
        }
        ScalingStrategy::RelativeMax => ScalerParams::Divisor { divisor: max },
        ScalingStrategy::RelativeMean => ScalerParams::Divisor {
            divisor: stats::mean(values),
        },
        ScalingStrategy::RelativeQuantile { q } => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::InvalidArgument(format!("quantile {q} not in (0, 1]")));
            }
            ScalerParams::Divisor {
                divisor: stats::quantile(values, q).expect("non-empty"),
            }
        }
    };
    if let ScalerParams::Divisor { divisor } = params {
        if divisor <= 0.0 {
            return Err(Error::DegenerateScaler(format!("{strategy:?} statistic is {divisor}")));
        }
    }
    Ok(TimeScaler {
        strategy,
        params,
        fitted_on: fitted_on.to_string(),
    })
}

impl TimeScaler {
    /// Relative strategies divide without clipping; min-max is clipped to
    /// `[0, 1]`.
    pub fn apply(&self, value: f64) -> f64 {
        match self.params {
            ScalerParams::Divisor { divisor } => value / divisor,
            ScalerParams::Range { min, max } => ((value - min) / (max - min)).clamp(0.0, 1.0),
        }
    }

    /// The fitted statistic that maps to 1.0 (divisor, or the range max).
    pub fn reference(&self) -> f64 {
        match self.params {
            ScalerParams::Divisor { divisor } => divisor,
            ScalerParams::Range { max, .. } => max,
        }
    }
}

pub fn apply_time_scaler(scaler: &TimeScaler, value: f64) -> f64 {
    scaler.apply(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclicPart {
    Hour,
    Weekday,
    Month,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicConfig {
    parts: Vec<CyclicPart>,
}

impl CyclicConfig {
    /// Parts are deduplicated and kept in hour, weekday, month order.
    pub fn new(parts: impl IntoIterator<Item = CyclicPart>) -> Result<Self> {
        let mut parts: Vec<_> = parts.into_iter().collect();
        parts.sort();
        parts.dedup();
        if parts.is_empty() {
            return Err(Error::InvalidArgument("cyclic encoding needs at least one part".into()));
        }
        Ok(Self { parts })
    }

    pub fn all() -> Self {
        Self {
            parts: vec![CyclicPart::Hour, CyclicPart::Weekday, CyclicPart::Month],
        }
    }

    pub fn parts(&self) -> &[CyclicPart] {
        &self.parts
    }
}

/// `sin(2π·k/period)` for each configured calendar part, with hours 0-23,
/// weekdays 0 (Monday)-6 and months 0 (January)-11.
pub fn encode_cyclic(timestamp: DateTime<Utc>, config: &CyclicConfig) -> Vec<f64> {
    config
        .parts
        .iter()
        .map(|part| {
            let (k, period) = match part {
                CyclicPart::Hour => (timestamp.hour(), 24.0),
                CyclicPart::Weekday => (timestamp.weekday().num_days_from_monday(), 7.0),
                CyclicPart::Month => (timestamp.month0(), 12.0),
            };
            (2.0 * PI * f64::from(k) / period).sin()
        })
        .collect()
}

pub fn encode_autoencoded(ae: &TimeAutoencoder, value_days: f64) -> Result<Vec<f64>> {
    ae.encode_value(value_days)
}

/// The time half of the per-event feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeEncoder {
    /// Duration since start through a fitted scaler.
    Scaled { scaler: TimeScaler },
    /// Duration since start in days, unscaled (tree baselines).
    RawDays,
    Cyclic { config: CyclicConfig },
    Autoencoded { autoencoder: TimeAutoencoder },
}

impl TimeEncoder {
    pub fn width(&self) -> usize {
        match self {
            TimeEncoder::Scaled { .. } | TimeEncoder::RawDays => 1,
            TimeEncoder::Cyclic { config } => config.parts().len(),
            TimeEncoder::Autoencoded { autoencoder } => autoencoder.latent_dim(),
        }
    }

    /// Appends the time features of an event at `timestamp` in a trace
    /// that started at `start`.
    pub fn encode_into(&self, start: DateTime<Utc>, timestamp: DateTime<Utc>, out: &mut Vec<f64>) {
        let elapsed = days_between(start, timestamp);
        match self {
            TimeEncoder::Scaled { scaler } => out.push(scaler.apply(elapsed)),
            TimeEncoder::RawDays => out.push(elapsed),
            TimeEncoder::Cyclic { config } => out.extend(encode_cyclic(timestamp, config)),
            TimeEncoder::Autoencoded { autoencoder } => out.extend(autoencoder.encode_normalized(elapsed / autoencoder.input_scale())),
        }
    }

    /// Relative scaler, if this encoder uses one.
    pub fn relative_scaler(&self) -> Option<&TimeScaler> {
        match self {
            TimeEncoder::Scaled { scaler } if scaler.strategy.is_relative() => Some(scaler),
            _ => None,
        }
    }
}
