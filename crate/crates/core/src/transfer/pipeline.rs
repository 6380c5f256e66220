use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ScalerMode;
use crate::embeddings::{fit_one_hot, ActivityEncoder, EmbeddingStore};
use crate::error::{Error, Result};
use crate::eventlog::{filter_by_length, label_in_time, temporal_split, EventLog, SplitSpec};
use crate::metrics::{evaluate, EvalReport, DEFAULT_THRESHOLD};
use crate::nn::{init_model, train, AutoencoderConfig, History, InitScheme, LstmModel, TrainConfig};
use crate::timefeat::{durations_since_start, fit_time_scaler, CyclicConfig, ScalingStrategy, TimeEncoder};
use crate::nn::train_time_autoencoder;
use crate::tensorize::{encode, generate_prefixes, FeatureEncoder, PrefixDataset, PrefixEncoding};

/// Which time feature accompanies the activity features, before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFeature {
    Scaled { strategy: ScalingStrategy },
    RawDays,
    Cyclic { config: CyclicConfig },
    Autoencoded { config: AutoencoderConfig },
}

impl Default for TimeFeature {
    fn default() -> Self {
        TimeFeature::Scaled {
            strategy: ScalingStrategy::default(),
        }
    }
}

/// Fits the time encoder on the traces of `log`.
pub fn fit_time_encoder(feature: &TimeFeature, log: &EventLog) -> Result<TimeEncoder> {
    Ok(match feature {
        TimeFeature::Scaled { strategy } => TimeEncoder::Scaled {
            scaler: fit_time_scaler(log, *strategy)?,
        },
        TimeFeature::RawDays => TimeEncoder::RawDays,
        TimeFeature::Cyclic { config } => TimeEncoder::Cyclic { config: config.clone() },
        TimeFeature::Autoencoded { config } => TimeEncoder::Autoencoded {
            autoencoder: train_time_autoencoder(&durations_since_start(log), config)?,
        },
    })
}

/// The time encoder used on a target domain. In per-domain mode a relative
/// scaler is refitted with the same strategy on `target`; everything else,
/// and source mode, reuses the source encoder.
pub fn target_time_encoder(source: &TimeEncoder, mode: ScalerMode, target: Option<&EventLog>) -> Result<TimeEncoder> {
    match (mode, source.relative_scaler(), target) {
        (ScalerMode::PerDomain, Some(scaler), Some(log)) if !log.is_empty() => Ok(TimeEncoder::Scaled {
            scaler: fit_time_scaler(log, scaler.strategy)?,
        }),
        _ => Ok(source.clone()),
    }
}

/// Every knob of phase 1 that shapes the data or the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub max_trace_len: usize,
    pub min_trace_len: usize,
    pub label_quantile: f64,
    pub split: SplitSpec,
    pub min_prefix_len: usize,
    pub encoding: PrefixEncoding,
    pub time: TimeFeature,
    pub scaler_mode: ScalerMode,
    pub hidden: usize,
    pub layers: usize,
    pub init: InitScheme,
    pub train: TrainConfig,
    pub threshold: f64,
    /// Keep only the temporally first traces of the source training split.
    pub source_train_limit: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_trace_len: 50,
            min_trace_len: 1,
            label_quantile: 0.70,
            split: SplitSpec::default(),
            min_prefix_len: 1,
            encoding: PrefixEncoding::default(),
            time: TimeFeature::default(),
            scaler_mode: ScalerMode::default(),
            hidden: 128,
            layers: 2,
            init: InitScheme::Dedicated,
            train: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            source_train_limit: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_trace_len == 0 || self.max_trace_len < self.min_trace_len {
            return Err(Error::Config(format!(
                "trace length bounds {}..={} are empty",
                self.min_trace_len, self.max_trace_len
            )));
        }
        if !(self.label_quantile > 0.0 && self.label_quantile < 1.0) {
            return Err(Error::Config(format!("label quantile {} not in (0, 1)", self.label_quantile)));
        }
        if let PrefixEncoding::Index { max_steps } = self.encoding {
            if max_steps < self.max_trace_len {
                return Err(Error::Config(format!(
                    "index encoding with {max_steps} steps cannot hold traces of {} events",
                    self.max_trace_len
                )));
            }
        }
        if self.hidden == 0 || !(1..=2).contains(&self.layers) {
            return Err(Error::Config("hidden size must be positive and layers 1 or 2".into()));
        }
        if self.source_train_limit == Some(0) {
            return Err(Error::Config("source training limit must be at least 1".into()));
        }
        self.split.validate()?;
        self.train.validate()
    }
}

/// A filtered, labeled log and its temporal split.
#[derive(Debug, Clone)]
pub struct PreparedLog {
    pub log: EventLog,
    pub threshold_days: f64,
    pub train: EventLog,
    pub val: EventLog,
    pub test: EventLog,
}

/// Length filter, in-time labeling on the filtered log, then the split.
pub fn prepare_log(raw: EventLog, cfg: &PipelineConfig) -> Result<PreparedLog> {
    let filtered = filter_by_length(raw, cfg.max_trace_len, cfg.min_trace_len)?;
    let (log, threshold_days) = label_in_time(filtered, cfg.label_quantile)?;
    let (train, val, test) = temporal_split(&log, &cfg.split)?;
    Ok(PreparedLog {
        log,
        threshold_days,
        train,
        val,
        test,
    })
}

/// All prefixes of `log` encoded with `features`.
pub fn encode_log(log: &EventLog, features: &FeatureEncoder, cfg: &PipelineConfig) -> Result<PrefixDataset> {
    let prefixes = generate_prefixes(log, cfg.min_prefix_len)?;
    encode(&prefixes, features, cfg.encoding)
}

/// Initializes and trains a model with `seed` driving both the
/// initialization and the minibatch order. The result is rounded to the
/// 32-bit precision it is stored with.
pub fn train_lstm(
    train_ds: &PrefixDataset,
    val_ds: &PrefixDataset,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(LstmModel, History)> {
    let model = init_model(cfg.hidden, train_ds.width(), cfg.layers, cfg.init, seed)?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let (mut model, history) = train(model, train_ds, val_ds, &train_cfg)?;
    model.quantize_f32();
    Ok((model, history))
}

/// Binary labels of a dataset.
pub fn binary_labels(ds: &PrefixDataset) -> Vec<bool> {
    ds.labels().iter().map(|&y| y >= 0.5).collect()
}

/// Scores a model on a dataset and assembles the report.
pub fn score_dataset(model: &LstmModel, ds: &PrefixDataset, threshold: f64) -> Result<(Vec<f64>, EvalReport)> {
    let scores = model.predict_dataset(ds)?;
    let report = evaluate(&scores, &binary_labels(ds), threshold)?;
    Ok((scores, report))
}

/// How activities become vectors.
#[derive(Debug, Clone)]
pub enum ActivitySpec {
    Embedding(Arc<EmbeddingStore>),
    /// One position per activity of the (filtered) log being trained on.
    OneHot,
}

impl ActivitySpec {
    pub fn resolve(&self, log: &EventLog) -> Result<ActivityEncoder> {
        Ok(match self {
            ActivitySpec::Embedding(store) => ActivityEncoder::Embedding(Arc::clone(store)),
            ActivitySpec::OneHot => ActivityEncoder::OneHot(fit_one_hot(log.activity_vocabulary())?),
        })
    }
}

/// Outcome of phase 1 on the source log.
#[derive(Debug, Clone)]
pub struct SourceRun {
    pub config: PipelineConfig,
    pub seed: u64,
    pub prepared: PreparedLog,
    pub features: FeatureEncoder,
    pub model: LstmModel,
    pub history: History,
    pub test_scores: Vec<f64>,
    pub test_report: EvalReport,
}

/// Phase 1: prepare the source log, fit encoders on its training split,
/// train, and evaluate on its test split.
pub fn run_source(raw: EventLog, activity: &ActivitySpec, cfg: &PipelineConfig, seed: u64) -> Result<SourceRun> {
    cfg.validate()?;
    let mut prepared = prepare_log(raw, cfg)?;
    if let Some(limit) = cfg.source_train_limit {
        let name = prepared.train.name.clone();
        prepared.train = prepared.train.head(limit, name);
    }
    let features = FeatureEncoder::new(
        activity.resolve(&prepared.log)?,
        fit_time_encoder(&cfg.time, &prepared.train)?,
    );
    log::info!(
        "{}: {} traces, threshold {:.3} days, split {}/{}/{}",
        prepared.log.name,
        prepared.log.len(),
        prepared.threshold_days,
        prepared.train.len(),
        prepared.val.len(),
        prepared.test.len()
    );
    let train_ds = encode_log(&prepared.train, &features, cfg)?;
    let val_ds = encode_log(&prepared.val, &features, cfg)?;
    let test_ds = encode_log(&prepared.test, &features, cfg)?;
    let (model, history) = train_lstm(&train_ds, &val_ds, cfg, seed)?;
    let (test_scores, test_report) = score_dataset(&model, &test_ds, cfg.threshold)?;
    Ok(SourceRun {
        config: cfg.clone(),
        seed,
        prepared,
        features,
        model,
        history,
        test_scores,
        test_report,
    })
}
