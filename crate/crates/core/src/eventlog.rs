//! Event logs: CSV parsing, trace ordering, length filtering, in-time
//! labeling and temporal train/validation/test splits.

use std::collections::BTreeSet;
use std::io::Read;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: DateTime<Utc>,
}

impl Event {
    pub fn new(case_id: impl Into<String>, activity: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Self {
            case_id: case_id.into(),
            activity: activity.into(),
            timestamp,
        }
    }
}

/// The time-ordered events of one process instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
    /// `Some(true)` when the instance finished in time.
    pub label: Option<bool>,
    pub duration_days: f64,
}

impl Trace {
    /// Builds a trace, sorting events by timestamp (stable on ties).
    ///
    /// Panics if `events` is empty.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>) -> Self {
        assert!(!events.is_empty(), "a trace needs at least one event");
        events.sort_by_key(|e| e.timestamp);
        let duration_days = days_between(events[0].timestamp, events[events.len() - 1].timestamp);
        Self {
            case_id: case_id.into(),
            events,
            label: None,
            duration_days,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_timestamp(&self) -> DateTime<Utc> {
        self.events[0].timestamp
    }

    pub fn with_label(mut self, label: bool) -> Self {
        self.label = Some(label);
        self
    }
}

pub fn days_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_seconds() as f64 / SECONDS_PER_DAY
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub name: String,
    traces: Vec<Trace>,
    vocabulary: BTreeSet<String>,
}

impl EventLog {
    /// Builds a log, ordering traces by their first timestamp. Ties keep
    /// the given order.
    pub fn new(name: impl Into<String>, mut traces: Vec<Trace>) -> Self {
        traces.sort_by_key(Trace::first_timestamp);
        let vocabulary = traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.activity.clone()))
            .collect();
        Self {
            name: name.into(),
            traces,
            vocabulary,
        }
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn activity_vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    /// The temporally first `n` traces.
    pub fn head(&self, n: usize, name: impl Into<String>) -> EventLog {
        EventLog::new(name, self.traces.iter().take(n).cloned().collect())
    }

    pub fn is_labeled(&self) -> bool {
        self.traces.iter().all(|t| t.label.is_some())
    }
}

/// How timestamps are written in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    /// ISO-8601 (`YYYY-MM-DDTHH:MM:SS`, a space separator, fractional
    /// seconds and RFC 3339 offsets are accepted).
    #[default]
    Iso,
    /// A chrono `strftime` pattern. Patterns with `%z` are offset-aware;
    /// date-only patterns resolve to midnight.
    Pattern(String),
}

impl TimestampFormat {
    pub fn parse(&self, raw: &str) -> Option<DateTime<Utc>> {
        let raw = raw.trim();
        let parsed = match self {
            TimestampFormat::Iso => parse_iso(raw),
            TimestampFormat::Pattern(p) => parse_pattern(raw, p),
        }?;
        parsed.with_nanosecond(0)
    }
}

fn parse_iso(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    const NAIVE: [&str; 3] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"];
    for fmt in NAIVE {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
}

fn parse_pattern(raw: &str, pattern: &str) -> Option<DateTime<Utc>> {
    if pattern.contains("%z") || pattern.contains("%:z") || pattern.contains("%#z") {
        return DateTime::parse_from_str(raw, pattern)
            .ok()
            .map(|dt| dt.with_timezone(&Utc));
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(raw, pattern) {
        return Some(dt.and_utc());
    }
    NaiveDate::parse_from_str(raw, pattern)
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
}

/// Column mapping for CSV event logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSchema {
    pub case_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    pub timestamp_format: TimestampFormat,
    pub delimiter: u8,
}

impl Default for LogSchema {
    fn default() -> Self {
        Self {
            case_column: "case_id".into(),
            activity_column: "activity".into(),
            timestamp_column: "timestamp".into(),
            timestamp_format: TimestampFormat::Iso,
            delimiter: b',',
        }
    }
}

/// Parses a CSV event log. Events are grouped by case id, each trace is
/// sorted by timestamp and the log is ordered by first-event timestamp.
pub fn parse_event_log<R: Read>(source: R, schema: &LogSchema, name: &str) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let case_idx = column(&schema.case_column)?;
    let act_idx = column(&schema.activity_column)?;
    let ts_idx = column(&schema.timestamp_column)?;

    let mut cases: IndexMap<String, Vec<Event>> = IndexMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize, what: &str| {
            record.get(idx).ok_or_else(|| Error::Row {
                line,
                message: format!("missing {what} field"),
            })
        };
        let case_id = field(case_idx, "case id")?.trim();
        let activity = field(act_idx, "activity")?.trim();
        let raw_ts = field(ts_idx, "timestamp")?;
        if case_id.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty case id".into(),
            });
        }
        if activity.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty activity".into(),
            });
        }
        let timestamp = schema.timestamp_format.parse(raw_ts).ok_or_else(|| Error::Row {
            line,
            message: format!("unparseable timestamp `{raw_ts}`"),
        })?;
        cases
            .entry(case_id.to_string())
            .or_default()
            .push(Event::new(case_id, activity, timestamp));
    }

    if cases.is_empty() {
        return Err(Error::EmptyLog);
    }
    let traces = cases
        .into_iter()
        .map(|(case_id, events)| Trace::new(case_id, events))
        .collect();
    Ok(EventLog::new(name, traces))
}

/// Keeps traces with `min_len <= N <= max_len`, preserving order.
pub fn filter_by_length(log: EventLog, max_len: usize, min_len: usize) -> Result<EventLog> {
    if min_len < 1 || max_len < min_len {
        return Err(Error::InvalidArgument(format!(
            "length bounds must satisfy 1 <= min ({min_len}) <= max ({max_len})"
        )));
    }
    let name = log.name.clone();
    let kept = log
        .into_traces()
        .into_iter()
        .filter(|t| (min_len..=max_len).contains(&t.len()))
        .collect();
    Ok(EventLog::new(name, kept))
}

/// Labels every trace in-time iff its duration is at or below the
/// `quantile` of all trace durations. Returns the threshold in days.
pub fn label_in_time(log: EventLog, quantile: f64) -> Result<(EventLog, f64)> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile {quantile} not in (0, 1)")));
    }
    let durations: Vec<f64> = log.traces.iter().map(|t| t.duration_days).collect();
    let threshold = stats::quantile(&durations, quantile).expect("non-empty");
    let name = log.name.clone();
    let traces = log
        .into_traces()
        .into_iter()
        .map(|t| {
            let in_time = t.duration_days <= threshold;
            t.with_label(in_time)
        })
        .collect();
    Ok((EventLog::new(name, traces), threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.64,
            val_frac: 0.16,
            test_frac: 0.20,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self> {
        let spec = Self {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train_frac),
            ("validation", self.val_frac),
            ("test", self.test_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} fraction {f} not in (0, 1)")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Trace counts `(train, val, test)` for a log of `n` traces.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps exact products such as 0.64 * 25 from flooring down.
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train_frac).min(n);
        let val = floor(self.val_frac).min(n - train);
        (train, val, n - train - val)
    }
}

/// Splits a first-timestamp-ordered log into contiguous temporal slices.
pub fn temporal_split(log: &EventLog, spec: &SplitSpec) -> Result<(EventLog, EventLog, EventLog)> {
    spec.validate()?;
    let (n_train, n_val, n_test) = spec.sizes(log.len());
    for (name, n) in [("train", n_train), ("validation", n_val), ("test", n_test)] {
        if n == 0 {
            return Err(Error::EmptySplit(name));
        }
    }
    let traces = log.traces();
    let part = |range: std::ops::Range<usize>, suffix: &str| {
        EventLog::new(format!("{}/{suffix}", log.name), traces[range].to_vec())
    };
    Ok((
        part(0..n_train, "train"),
        part(n_train..n_train + n_val, "val"),
        part(n_train + n_val..traces.len(), "test"),
    ))
}
