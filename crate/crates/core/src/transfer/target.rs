use serde::{Deserialize, Serialize};

use super::bundle::TransferBundle;
use super::pipeline::{encode_log, fit_time_encoder, score_dataset, target_time_encoder, train_lstm, ActivitySpec};
use super::ScalerMode;
use crate::embeddings::ActivityEncoder;
use crate::error::{Error, Result};
use crate::eventlog::{filter_by_length, label_in_time, temporal_split, EventLog, SplitSpec};
use crate::metrics::{EvalReport, MeanStd, ReportSummary};
use crate::tensorize::{FeatureEncoder, PrefixDataset};
use crate::timefeat::TimeEncoder;

/// Which part of the target log is scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetEval {
    Split { spec: SplitSpec },
    /// Every trace of the target log is test data.
    WholeLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetOptions {
    pub eval: TargetEval,
    pub scaler_mode: ScalerMode,
}

impl TargetOptions {
    /// The split and scaler mode recorded in the bundle.
    pub fn from_bundle(bundle: &TransferBundle) -> Self {
        Self {
            eval: TargetEval::Split {
                spec: bundle.manifest.pipeline.split,
            },
            scaler_mode: bundle.manifest.pipeline.scaler_mode,
        }
    }
}

/// The target log filtered and labeled with the bundle's settings; the
/// label threshold is the target's own quantile.
#[derive(Debug, Clone)]
pub struct PreparedTarget {
    pub log: EventLog,
    pub threshold_days: f64,
    pub train: Option<EventLog>,
    pub val: Option<EventLog>,
    pub test: EventLog,
}

impl PreparedTarget {
    /// The traces a per-domain scaler is fitted on.
    pub fn fit_log(&self) -> &EventLog {
        self.train.as_ref().unwrap_or(&self.log)
    }
}

pub fn prepare_target(bundle: &TransferBundle, raw: EventLog, eval: TargetEval) -> Result<PreparedTarget> {
    let p = &bundle.manifest.pipeline;
    let filtered = filter_by_length(raw, p.max_trace_len, p.min_trace_len)?;
    let (log, threshold_days) = label_in_time(filtered, p.label_quantile)?;
    Ok(match eval {
        TargetEval::Split { spec } => {
            let (train, val, test) = temporal_split(&log, &spec)?;
            PreparedTarget {
                log,
                threshold_days,
                train: Some(train),
                val: Some(val),
                test,
            }
        }
        TargetEval::WholeLog => PreparedTarget {
            test: log.clone(),
            log,
            threshold_days,
            train: None,
            val: None,
        },
    })
}

/// Encoders for target data: the transferred activity encoder and the
/// time encoder chosen by `mode`.
pub fn transferred_features(bundle: &TransferBundle, fit_log: Option<&EventLog>, mode: ScalerMode) -> Result<FeatureEncoder> {
    let time = target_time_encoder(&bundle.features.time, mode, fit_log)?;
    let features = FeatureEncoder::new(bundle.features.activity.clone(), time);
    if features.width() != bundle.model.input_dim() {
        return Err(Error::Config(format!(
            "target features have width {}, model expects {}",
            features.width(),
            bundle.model.input_dim()
        )));
    }
    Ok(features)
}

/// `(case id, prefix length)` of every sample, in order.
pub fn sample_keys(ds: &PrefixDataset) -> Vec<(String, usize)> {
    (0..ds.len()).map(|i| (ds.case_id(i).to_string(), ds.prefix_length(i))).collect()
}

#[derive(Debug, Clone)]
pub struct TargetEvaluation {
    pub report: EvalReport,
    pub threshold_days: f64,
    pub time: TimeEncoder,
    pub scores: Vec<f64>,
    pub samples: Vec<(String, usize)>,
}

fn evaluate_prepared(bundle: &TransferBundle, prepared: &PreparedTarget, mode: ScalerMode) -> Result<TargetEvaluation> {
    let features = transferred_features(bundle, Some(prepared.fit_log()), mode)?;
    let test = encode_log(&prepared.test, &features, &bundle.manifest.pipeline)?;
    let (scores, report) = score_dataset(&bundle.model, &test, bundle.manifest.pipeline.threshold)?;
    Ok(TargetEvaluation {
        report,
        threshold_days: prepared.threshold_days,
        time: features.time,
        scores,
        samples: sample_keys(&test),
    })
}

/// Scores the frozen model on the target test split (or the whole log).
pub fn evaluate_on_target(bundle: &TransferBundle, raw_target: EventLog, opts: &TargetOptions) -> Result<TargetEvaluation> {
    let prepared = prepare_target(bundle, raw_target, opts.eval)?;
    evaluate_prepared(bundle, &prepared, opts.scaler_mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub report: EvalReport,
}

/// A model trained on target data alone, with the bundle's settings.
fn train_scratch(
    bundle: &TransferBundle,
    prepared: &PreparedTarget,
    train_log: &EventLog,
    seed: u64,
) -> Result<(EvalReport, Vec<(String, usize)>)> {
    let cfg = &bundle.manifest.pipeline;
    let (Some(_), Some(val_log)) = (&prepared.train, &prepared.val) else {
        return Err(Error::InvalidArgument("training from scratch needs a target split".into()));
    };
    let activity = match &bundle.features.activity {
        ActivityEncoder::Embedding(store) => ActivitySpec::Embedding(store.clone()),
        ActivityEncoder::OneHot(_) => ActivitySpec::OneHot,
    };
    let features = FeatureEncoder::new(activity.resolve(&prepared.log)?, fit_time_encoder(&cfg.time, train_log)?);
    let train_ds = encode_log(train_log, &features, cfg)?;
    let val_ds = encode_log(val_log, &features, cfg)?;
    let test_ds = encode_log(&prepared.test, &features, cfg)?;
    let (model, _) = train_lstm(&train_ds, &val_ds, cfg, seed)?;
    let (_, report) = score_dataset(&model, &test_ds, cfg.threshold)?;
    Ok((report, sample_keys(&test_ds)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub transferred: EvalReport,
    pub scratch: Vec<SeedReport>,
    pub test_samples: usize,
}

impl Comparison {
    pub fn scratch_summary(&self) -> ReportSummary {
        ReportSummary::of(&self.scratch.iter().map(|s| s.report.clone()).collect::<Vec<_>>())
    }
}

/// Transferred model versus models trained from scratch on the target
/// training split, one per seed, on the same test prefixes.
pub fn compare_from_scratch(
    bundle: &TransferBundle,
    raw_target: EventLog,
    seeds: &[u64],
    opts: &TargetOptions,
) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seeds given".into()));
    }
    let prepared = prepare_target(bundle, raw_target, opts.eval)?;
    let Some(train_log) = prepared.train.clone() else {
        return Err(Error::InvalidArgument("training from scratch needs a target split".into()));
    };
    let transferred = evaluate_prepared(bundle, &prepared, opts.scaler_mode)?;
    let mut scratch = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (report, samples) = train_scratch(bundle, &prepared, &train_log, seed)?;
        if samples != transferred.samples {
            return Err(Error::InvalidArgument("the two arms scored different test prefixes".into()));
        }
        scratch.push(SeedReport { seed, report });
    }
    Ok(Comparison {
        transferred: transferred.report,
        scratch,
        test_samples: transferred.samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    /// Percent of the target training traces.
    pub fraction: f64,
    pub traces: usize,
    pub auc: Vec<f64>,
    pub summary: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStudy {
    pub reference_auc: f64,
    pub rows: Vec<ScaleRow>,
    pub skipped: Vec<f64>,
}

impl ScaleStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction_percent,traces,seed_index,auc_roc\n");
        for row in &self.rows {
            for (k, auc) in row.auc.iter().enumerate() {
                out.push_str(&format!("{},{},{k},{auc}\n", row.fraction, row.traces));
            }
        }
        out.push_str(&format!("transferred,,,{}\n", self.reference_auc));
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:>8}  {:>7}  AUC_ROC\n", "cases %", "traces");
        for row in &self.rows {
            out.push_str(&format!("{:>8}  {:>7}  {}\n", row.fraction, row.traces, row.summary));
        }
        out.push_str(&format!("transferred model AUC_ROC {:.3}\n", self.reference_auc));
        out
    }
}

pub const DEFAULT_FRACTIONS: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

/// Number of traces in the first `fraction` percent of `n`.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    (fraction / 100.0 * n as f64 + 1e-9).floor() as usize
}

/// From-scratch models on the temporally first `fraction` percent of the
/// target training traces, next to the transferred model's AUC.
pub fn scale_study(
    bundle: &TransferBundle,
    raw_target: EventLog,
    fractions: &[f64],
    seeds: &[u64],
    opts: &TargetOptions,
) -> Result<ScaleStudy> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seeds given".into()));
    }
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 100.0)) {
        return Err(Error::InvalidArgument(format!("fraction {f} not in (0, 100]")));
    }
    let mut fractions = fractions.to_vec();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();

    let prepared = prepare_target(bundle, raw_target, opts.eval)?;
    let Some(train_log) = prepared.train.clone() else {
        return Err(Error::InvalidArgument("a scale study needs a target split".into()));
    };
    let reference_auc = evaluate_prepared(bundle, &prepared, opts.scaler_mode)?.report.auc_roc;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for fraction in fractions {
        let traces = fraction_count(fraction, train_log.len());
        if traces < 2 {
            log::warn!("{fraction}% of {} training traces is {traces}; skipped", train_log.len());
            skipped.push(fraction);
            continue;
        }
        let subset = train_log.head(traces, format!("{}[{fraction}%]", train_log.name));
        let mut auc = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            auc.push(train_scratch(bundle, &prepared, &subset, seed)?.0.auc_roc);
        }
        rows.push(ScaleRow {
            fraction,
            traces,
            summary: MeanStd::of(&auc),
            auc,
        });
    }
    Ok(ScaleStudy {
        reference_auc,
        rows,
        skipped,
    })
}
