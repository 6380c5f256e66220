//! Prefix generation and prefix encoding into fixed-shape datasets.
//!
//! A dataset is logically the right-padded tensor `X[s][T][v]`. It is
//! stored compactly: the feature rows of each trace are computed once and
//! every sample is a window into them. Rows past a sample's length are
//! implicit zeros.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::ActivityEncoder;
use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Trace};
use crate::timefeat::TimeEncoder;

/// Index-encoding length cap; equals the trace length filter's maximum.
pub const DEFAULT_MAX_STEPS: usize = 50;

/// The first `length` events of a trace.
#[derive(Debug, Clone, Copy)]
pub struct Prefix<'a> {
    pub trace: &'a Trace,
    pub length: usize,
}

impl<'a> Prefix<'a> {
    pub fn case_id(&self) -> &'a str {
        &self.trace.case_id
    }

    pub fn events(&self) -> &'a [crate::eventlog::Event] {
        &self.trace.events[..self.length]
    }

    pub fn label(&self) -> Option<bool> {
        self.trace.label
    }
}

/// All prefixes of lengths `min_len..=N` for every trace, in log order.
pub fn generate_prefixes(log: &EventLog, min_len: usize) -> Result<Vec<Prefix<'_>>> {
    let min_len = min_len.max(1);
    let mut out = Vec::with_capacity(log.event_count());
    for trace in log.traces() {
        if trace.label.is_none() {
            return Err(Error::Unlabeled(trace.case_id.clone()));
        }
        out.extend((min_len..=trace.len()).map(|length| Prefix { trace, length }));
    }
    Ok(out)
}

/// Concatenated activity and time features for each event.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    pub activity: ActivityEncoder,
    pub time: TimeEncoder,
}

impl FeatureEncoder {
    pub fn new(activity: ActivityEncoder, time: TimeEncoder) -> Self {
        Self { activity, time }
    }

    pub fn width(&self) -> usize {
        self.activity.dim() + self.time.width()
    }

    /// Row-major `[N][v]` feature rows for the first `len` events.
    pub fn encode_events(&self, trace: &Trace, len: usize) -> Vec<f64> {
        let start = trace.first_timestamp();
        let mut rows = Vec::with_capacity(len * self.width());
        let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
        for event in &trace.events[..len] {
            let act = cache
                .entry(event.activity.as_str())
                .or_insert_with(|| self.activity.encode(&event.activity));
            rows.extend_from_slice(act);
            self.time.encode_into(start, event.timestamp, &mut rows);
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrefixEncoding {
    Index { max_steps: usize },
    LastK { k: usize },
    Aggregate,
}

impl PrefixEncoding {
    pub fn steps(&self) -> usize {
        match *self {
            PrefixEncoding::Index { max_steps } => max_steps,
            PrefixEncoding::LastK { k } => k,
            PrefixEncoding::Aggregate => 1,
        }
    }
}

impl Default for PrefixEncoding {
    fn default() -> Self {
        PrefixEncoding::Index {
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    seq: usize,
    start: usize,
    rows: usize,
}

/// Encoded prefixes with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixDataset {
    encoding: PrefixEncoding,
    steps: usize,
    width: usize,
    sequences: Arc<Vec<Vec<f64>>>,
    windows: Vec<Window>,
    labels: Vec<f64>,
    prefix_lengths: Vec<usize>,
    case_ids: Vec<String>,
}

impl PrefixDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn encoding(&self) -> PrefixEncoding {
        self.encoding
    }

    /// `T`, the padded number of time steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `v`, the per-step feature width.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Number of non-padding rows of sample `i`.
    pub fn rows(&self, i: usize) -> usize {
        self.windows[i].rows
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.rows).collect()
    }

    /// Number of events in the prefix behind sample `i`.
    pub fn prefix_length(&self, i: usize) -> usize {
        self.prefix_lengths[i]
    }

    pub fn case_id(&self, i: usize) -> &str {
        &self.case_ids[i]
    }

    /// The real rows of sample `i`, row-major `[rows][v]`.
    pub fn sequence(&self, i: usize) -> &[f64] {
        let w = self.windows[i];
        &self.sequences[w.seq][w.start * self.width..(w.start + w.rows) * self.width]
    }

    /// Row `t` of sample `i`; `None` for padding rows.
    pub fn row(&self, i: usize, t: usize) -> Option<&[f64]> {
        (t < self.rows(i)).then(|| &self.sequence(i)[t * self.width..(t + 1) * self.width])
    }

    /// Sample `i` as a zero-padded `[T][v]` block.
    pub fn padded(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.steps * self.width];
        let seq = self.sequence(i);
        out[..seq.len()].copy_from_slice(seq);
        out
    }

    /// The full `[s][T][v]` tensor as 32-bit floats.
    pub fn to_dense_f32(&self) -> Vec<f32> {
        let block = self.steps * self.width;
        let mut out = vec![0.0f32; self.len() * block];
        for i in 0..self.len() {
            for (o, &x) in out[i * block..].iter_mut().zip(self.sequence(i)) {
                *o = x as f32;
            }
        }
        out
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PrefixDataset {
        PrefixDataset {
            encoding: self.encoding,
            steps: self.steps,
            width: self.width,
            sequences: Arc::clone(&self.sequences),
            windows: indices.iter().map(|&i| self.windows[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            prefix_lengths: indices.iter().map(|&i| self.prefix_lengths[i]).collect(),
            case_ids: indices.iter().map(|&i| self.case_ids[i].clone()).collect(),
        }
    }

    /// Writes `dataset.json`, `x.f32` (little-endian `[s][T][v]`),
    /// `labels.u8` and `lengths.u32` into `dir`.
    pub fn save_cache(&self, dir: &Path, fingerprints: &[String]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let manifest = CacheManifest {
            samples: self.len(),
            steps: self.steps,
            width: self.width,
            encoding: self.encoding,
            fingerprints: fingerprints.to_vec(),
            case_ids: self.case_ids.clone(),
            prefix_lengths: self.prefix_lengths.clone(),
        };
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
            f.write_all(bytes).map_err(|e| Error::file(&path, e))
        };
        write("dataset.json", &serde_json::to_vec_pretty(&manifest)?)?;
        let x: Vec<u8> = self.to_dense_f32().iter().flat_map(|v| v.to_le_bytes()).collect();
        write("x.f32", &x)?;
        let y: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        write("labels.u8", &y)?;
        let lens: Vec<u8> = self.windows.iter().flat_map(|w| (w.rows as u32).to_le_bytes()).collect();
        write("lengths.u32", &lens)
    }

    pub fn load_cache(dir: &Path) -> Result<(PrefixDataset, Vec<String>)> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|e| Error::file(&path, e))
        };
        let manifest: CacheManifest = serde_json::from_slice(&read("dataset.json")?)?;
        let (s, t, v) = (manifest.samples, manifest.steps, manifest.width);
        let x = read("x.f32")?;
        let y = read("labels.u8")?;
        let lens = read("lengths.u32")?;
        if x.len() != s * t * v * 4 || y.len() != s || lens.len() != s * 4 || manifest.case_ids.len() != s {
            return Err(Error::Integrity("dataset cache arrays do not match the manifest shape".into()));
        }
        let mut sequences = Vec::with_capacity(s);
        let mut windows = Vec::with_capacity(s);
        for i in 0..s {
            let rows = u32::from_le_bytes(lens[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
            if rows > t {
                return Err(Error::Integrity(format!("sample {i} has {rows} rows, more than {t}")));
            }
            let base = i * t * v * 4;
            let seq: Vec<f64> = x[base..base + rows * v * 4]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            windows.push(Window { seq: i, start: 0, rows });
            sequences.push(seq);
        }
        Ok((
            PrefixDataset {
                encoding: manifest.encoding,
                steps: t,
                width: v,
                sequences: Arc::new(sequences),
                windows,
                labels: y.iter().map(|&b| f64::from(b)).collect(),
                prefix_lengths: manifest.prefix_lengths,
                case_ids: manifest.case_ids,
            },
            manifest.fingerprints,
        ))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheManifest {
    samples: usize,
    steps: usize,
    width: usize,
    encoding: PrefixEncoding,
    fingerprints: Vec<String>,
    case_ids: Vec<String>,
    prefix_lengths: Vec<usize>,
}

fn label_of(prefix: &Prefix<'_>) -> f64 {
    match prefix.label() {
        Some(true) => 1.0,
        _ => 0.0,
    }
}

/// Encodes the feature rows of every distinct trace once and returns, per
/// prefix, the index of its trace's rows.
fn encode_traces(prefixes: &[Prefix<'_>], encoder: &FeatureEncoder) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut slot_of: HashMap<*const Trace, usize> = HashMap::new();
    let mut traces: Vec<(&Trace, usize)> = Vec::new();
    let mut seq_index = Vec::with_capacity(prefixes.len());
    for p in prefixes {
        let key = p.trace as *const Trace;
        let slot = *slot_of.entry(key).or_insert_with(|| {
            traces.push((p.trace, 0));
            traces.len() - 1
        });
        traces[slot].1 = traces[slot].1.max(p.length);
        seq_index.push(slot);
    }
    let sequences = traces
        .par_iter()
        .map(|&(trace, len)| encoder.encode_events(trace, len))
        .collect();
    (sequences, seq_index)
}

fn finish(
    prefixes: &[Prefix<'_>],
    encoding: PrefixEncoding,
    width: usize,
    sequences: Vec<Vec<f64>>,
    windows: Vec<Window>,
) -> PrefixDataset {
    PrefixDataset {
        encoding,
        steps: encoding.steps(),
        width,
        sequences: Arc::new(sequences),
        windows,
        labels: prefixes.iter().map(label_of).collect(),
        prefix_lengths: prefixes.iter().map(|p| p.length).collect(),
        case_ids: prefixes.iter().map(|p| p.case_id().to_string()).collect(),
    }
}

/// Index-based encoding: one feature row per event, right-padded to
/// `max_steps` rows.
pub fn encode_index(prefixes: &[Prefix<'_>], encoder: &FeatureEncoder, max_steps: usize) -> Result<PrefixDataset> {
    if let Some(p) = prefixes.iter().find(|p| p.length > max_steps) {
        return Err(Error::PrefixTooLong {
            length: p.length,
            max: max_steps,
        });
    }
    let (sequences, seq_index) = encode_traces(prefixes, encoder);
    let windows = prefixes
        .iter()
        .zip(&seq_index)
        .map(|(p, &seq)| Window {
            seq,
            start: 0,
            rows: p.length,
        })
        .collect();
    Ok(finish(prefixes, PrefixEncoding::Index { max_steps }, encoder.width(), sequences, windows))
}

/// Encodes only the final `min(k, length)` events of each prefix.
pub fn encode_last_k(prefixes: &[Prefix<'_>], encoder: &FeatureEncoder, k: usize) -> Result<PrefixDataset> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let (sequences, seq_index) = encode_traces(prefixes, encoder);
    let windows = prefixes
        .iter()
        .zip(&seq_index)
        .map(|(p, &seq)| {
            let rows = p.length.min(k);
            Window {
                seq,
                start: p.length - rows,
                rows,
            }
        })
        .collect();
    Ok(finish(prefixes, PrefixEncoding::LastK { k }, encoder.width(), sequences, windows))
}

/// One row per prefix: the per-dimension mean of its event features.
pub fn encode_aggregate(prefixes: &[Prefix<'_>], encoder: &FeatureEncoder) -> Result<PrefixDataset> {
    let width = encoder.width();
    let (rows_by_trace, seq_index) = encode_traces(prefixes, encoder);
    let sequences: Vec<Vec<f64>> = prefixes
        .par_iter()
        .zip(seq_index.par_iter())
        .map(|(p, &seq)| {
            let rows = &rows_by_trace[seq][..p.length * width];
            let mut mean = vec![0.0; width];
            for row in rows.chunks_exact(width) {
                for (m, &x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            let n = p.length as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            mean
        })
        .collect();
    let windows = (0..prefixes.len())
        .map(|i| Window {
            seq: i,
            start: 0,
            rows: 1,
        })
        .collect();
    Ok(finish(prefixes, PrefixEncoding::Aggregate, width, sequences, windows))
}

/// Dispatches on `encoding`.
pub fn encode(prefixes: &[Prefix<'_>], encoder: &FeatureEncoder, encoding: PrefixEncoding) -> Result<PrefixDataset> {
    match encoding {
        PrefixEncoding::Index { max_steps } => encode_index(prefixes, encoder, max_steps),
        PrefixEncoding::LastK { k } => encode_last_k(prefixes, encoder, k),
        PrefixEncoding::Aggregate => encode_aggregate(prefixes, encoder),
    }
}
