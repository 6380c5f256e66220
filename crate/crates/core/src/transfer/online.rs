//! Streaming predictions for ongoing cases over NDJSON.
//!
//! Each input line is either a full prefix,
//! `{"case_id": "c1", "events": [{"activity": "...", "timestamp": "..."}]}`,
//! which replaces what is known about the case, or a single event,
//! `{"case_id": "c1", "activity": "...", "timestamp": "..."}`, appended to
//! the case. Every accepted line yields one prediction for the case's
//! current prefix. Bad lines yield an error object and are otherwise
//! ignored.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::bundle::TransferBundle;
use crate::error::{Error, Result};
use crate::eventlog::{Event, TimestampFormat, Trace};
use crate::tensorize::{encode, FeatureEncoder, Prefix};
use crate::timefeat::TimeEncoder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub case_id: String,
    pub prefix_length: usize,
    pub score: f64,
    pub predicted_label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordErrorKind {
    Json,
    CaseId,
    Activity,
    Timestamp,
    Events,
    Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    pub error: RecordErrorKind,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OnlineOutput {
    Prediction(Prediction),
    Error(RecordError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OnlineSummary {
    pub records: usize,
    pub predictions: usize,
    pub errors: usize,
}

/// Per-stream state: the known events of every open case.
pub struct OnlinePredictor<'a> {
    bundle: &'a TransferBundle,
    features: FeatureEncoder,
    timestamps: TimestampFormat,
    cases: HashMap<String, Vec<Event>>,
    line: usize,
}

type RecordResult<T> = std::result::Result<T, (RecordErrorKind, String)>;

impl<'a> OnlinePredictor<'a> {
    /// Uses the bundle's source-fitted encoders.
    pub fn new(bundle: &'a TransferBundle) -> Self {
        Self {
            bundle,
            features: bundle.features.clone(),
            timestamps: TimestampFormat::default(),
            cases: HashMap::new(),
            line: 0,
        }
    }

    /// Replaces the time encoder, e.g. with a target-fitted scaler.
    pub fn with_time_encoder(mut self, time: TimeEncoder) -> Result<Self> {
        if time.width() != self.features.time.width() {
            return Err(Error::Config(format!(
                "time encoder width {} differs from the bundle's {}",
                time.width(),
                self.features.time.width()
            )));
        }
        self.features.time = time;
        Ok(self)
    }

    pub fn with_timestamp_format(mut self, format: TimestampFormat) -> Self {
        self.timestamps = format;
        self
    }

    /// Prediction for a case whose known events are `events`.
    pub fn predict_events(&self, case_id: &str, events: Vec<Event>) -> Result<Prediction> {
        let trace = Trace::new(case_id, events);
        let prefix = Prefix {
            trace: &trace,
            length: trace.len(),
        };
        let ds = encode(&[prefix], &self.features, self.bundle.manifest.pipeline.encoding)?;
        let score = self.bundle.model.predict_dataset(&ds)?[0];
        Ok(Prediction {
            case_id: case_id.to_string(),
            prefix_length: trace.len(),
            score,
            predicted_label: (score >= self.bundle.manifest.pipeline.threshold) as u8,
        })
    }

    fn field_str<'v>(record: &'v Value, key: &str, kind: RecordErrorKind) -> RecordResult<&'v str> {
        match record.get(key).and_then(Value::as_str).map(str::trim) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err((kind, format!("missing or empty {key:?}"))),
        }
    }

    fn parse_event(&self, case_id: &str, record: &Value) -> RecordResult<Event> {
        let activity = Self::field_str(record, "activity", RecordErrorKind::Activity)?;
        let raw = Self::field_str(record, "timestamp", RecordErrorKind::Timestamp)?;
        let timestamp = self
            .timestamps
            .parse(raw)
            .ok_or_else(|| (RecordErrorKind::Timestamp, format!("cannot parse timestamp {raw:?}")))?;
        Ok(Event::new(case_id, activity, timestamp))
    }

    fn handle(&mut self, text: &str) -> RecordResult<Prediction> {
        let record: Value = serde_json::from_str(text).map_err(|e| (RecordErrorKind::Json, e.to_string()))?;
        if !record.is_object() {
            return Err((RecordErrorKind::Json, "record is not a JSON object".into()));
        }
        let case_id = match record.get("case_id") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err((RecordErrorKind::CaseId, "missing or empty \"case_id\"".into())),
        };

        let events = match record.get("events") {
            Some(Value::Array(items)) => {
                if items.is_empty() {
                    return Err((RecordErrorKind::Events, "\"events\" is empty".into()));
                }
                items
                    .iter()
                    .map(|item| self.parse_event(&case_id, item))
                    .collect::<RecordResult<Vec<_>>>()?
            }
            Some(_) => return Err((RecordErrorKind::Events, "\"events\" is not an array".into())),
            None => {
                let event = self.parse_event(&case_id, &record)?;
                let mut known = self.cases.get(&case_id).cloned().unwrap_or_default();
                known.push(event);
                known
            }
        };

        let prediction = self.predict_events(&case_id, events.clone()).map_err(|e| match e {
            Error::PrefixTooLong { .. } => (RecordErrorKind::Length, e.to_string()),
            other => (RecordErrorKind::Events, other.to_string()),
        })?;
        self.cases.insert(case_id, events);
        Ok(prediction)
    }

    /// Handles one input line; blank lines produce nothing.
    pub fn process_line(&mut self, text: &str) -> Option<OnlineOutput> {
        self.line += 1;
        if text.trim().is_empty() {
            return None;
        }
        Some(match self.handle(text) {
            Ok(p) => OnlineOutput::Prediction(p),
            Err((error, message)) => OnlineOutput::Error(RecordError {
                error,
                line: self.line,
                message,
            }),
        })
    }

    /// Marks a line that could not be decoded as text.
    fn undecodable_line(&mut self) -> OnlineOutput {
        self.line += 1;
        OnlineOutput::Error(RecordError {
            error: RecordErrorKind::Json,
            line: self.line,
            message: "line is not valid UTF-8".into(),
        })
    }
}

/// Reads NDJSON records until EOF, writing one output line per record.
pub fn predict_online<R: BufRead, W: Write>(
    predictor: &mut OnlinePredictor<'_>,
    mut input: R,
    mut output: W,
) -> Result<OnlineSummary> {
    let mut summary = OnlineSummary::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let out = match std::str::from_utf8(&buf) {
            Ok(text) => predictor.process_line(text),
            Err(_) => Some(predictor.undecodable_line()),
        };
        let Some(out) = out else { continue };
        summary.records += 1;
        match &out {
            OnlineOutput::Prediction(_) => summary.predictions += 1,
            OnlineOutput::Error(_) => summary.errors += 1,
        }
        serde_json::to_writer(&mut output, &out)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(summary)
}
