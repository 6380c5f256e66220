use std::fs::{self, File};
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use procxfer::embeddings::load_embedding_store;
use procxfer::eventlog::{parse_event_log, EventLog, LogSchema, TimestampFormat};
use procxfer::metrics::{format_table, EvalReport, ReportSummary, TableSection};
use procxfer::timefeat::{ScalerParams, TimeEncoder, TimeScaler};
use procxfer::transfer::{
    compare_from_scratch, embedding_distance_matrix, evaluate_on_target, load_bundle, predict_online,
    run_source, save_bundle, scale_study, ActivitySpec, OnlinePredictor, ScalerMode, SeedReport, TargetEval,
    TargetOptions, TransferBundle, MANIFEST_FILE,
};

use crate::args::{EncoderKind, PredictArgs, TrainArgs, TransferArgs};
use crate::output::{write_file, write_json, CliError, Staged};

pub const SOURCE_TITLE: &str = "Train and test on source";
pub const TARGET_TITLE: &str = "Train and test on target";
pub const TRANSFER_TITLE: &str = "Train on source, test on target";

fn open(path: &Path, stage: &'static str) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Stage {
        stage,
        source: procxfer::Error::File {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Parses a CSV log named after its file stem.
pub fn load_log(path: &Path, schema: &LogSchema) -> Result<EventLog, CliError> {
    let name = path.file_stem().map_or_else(|| "log".into(), |s| s.to_string_lossy().into_owned());
    let log = parse_event_log(open(path, "log")?, schema, &name).stage("log")?;
    log::info!("{name}: {} traces, {} events", log.len(), log.event_count());
    Ok(log)
}

/// Seeds in the given order, duplicates dropped.
pub fn unique_seeds(seeds: &[u64]) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(seeds.len());
    for &s in seeds {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

#[derive(Serialize)]
struct SeedRun {
    seed: u64,
    best_epoch: usize,
    report: EvalReport,
}

#[derive(Serialize)]
struct SourceReport {
    source_log: String,
    threshold_days: f64,
    encoder: &'static str,
    runs: Vec<SeedRun>,
    summary: ReportSummary,
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = a.pipeline.config().map_err(CliError::Usage)?;
    let schema = a.schema.schema().map_err(CliError::Usage)?;
    let vectors = match (a.encoder.encoder, &a.encoder.vectors) {
        (EncoderKind::Embedding, None) => {
            return Err(CliError::Usage("--encoder embedding requires --vectors".into()));
        }
        (EncoderKind::Embedding, Some(p)) => Some(p.clone()),
        (EncoderKind::OneHot, Some(_)) => {
            log::warn!("--vectors is ignored with --encoder one-hot");
            None
        }
        (EncoderKind::OneHot, None) => None,
    };
    let seeds = unique_seeds(&a.seeds);

    let (spec, origin, row) = match &vectors {
        Some(path) => {
            let store = load_embedding_store(open(path, "vectors")?, a.encoder.casing(), a.encoder.store_kind())
                .stage("vectors")?;
            log::info!("{}: {} vectors of dimension {}", path.display(), store.len(), store.dim());
            let origin = path.file_name().map(|s| s.to_string_lossy().into_owned());
            (ActivitySpec::Embedding(Arc::new(store)), origin, "LSTM (embedding)")
        }
        None => (ActivitySpec::OneHot, None, "LSTM (one-hot)"),
    };
    let log = load_log(&a.log, &schema)?;
    if let ActivitySpec::Embedding(store) = &spec {
        let oov = store.oov_report(log.activity_vocabulary());
        log::info!(
            "activity OOV rate {:.3}, token OOV rate {:.3}",
            oov.activity_oov_rate(),
            oov.token_oov_rate()
        );
    }

    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let run = run_source(log.clone(), &spec, &cfg, seed).stage("train")?;
            let bundle = TransferBundle::from_source_run(&run, origin.clone()).stage("save")?;
            let dir = a.out.join(format!("seed-{seed}"));
            save_bundle(&dir.join("bundle"), &bundle).stage("save")?;
            write_file(&dir.join("history.csv"), run.history.to_csv())?;
            let seed_run = SeedRun {
                seed,
                best_epoch: run.history.best_epoch,
                report: run.test_report.clone(),
            };
            write_json(&dir.join("report.json"), &seed_run)?;
            log::info!("seed {seed}: test AUC_ROC {:.4}", run.test_report.auc_roc);
            Ok((seed_run, run.prepared.log.name.clone(), run.prepared.threshold_days))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let (source_log, threshold_days) = runs
        .first()
        .map(|(_, name, t)| (name.clone(), *t))
        .unwrap_or_default();
    let runs: Vec<SeedRun> = runs.into_iter().map(|(r, _, _)| r).collect();
    let summary = ReportSummary::of(&runs.iter().map(|r| r.report.clone()).collect::<Vec<_>>());
    let table = format_table(&[TableSection {
        title: SOURCE_TITLE.into(),
        rows: vec![(row.into(), summary.clone())],
    }]);
    write_file(&a.out.join("source_report.txt"), &table)?;
    write_json(
        &a.out.join("source_report.json"),
        &SourceReport {
            source_log,
            threshold_days,
            encoder: if vectors.is_some() { "embedding" } else { "one-hot" },
            runs,
            summary,
        },
    )?;
    print!("{table}");
    Ok(())
}

/// Bundle directories named directly, or found as `seed-*/bundle` below a
/// training output directory.
pub fn resolve_bundle_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let missing = |p: &Path| CliError::Stage {
        stage: "bundle",
        source: procxfer::Error::Integrity(format!("no bundle found at {}", p.display())),
    };
    let mut out = Vec::new();
    for p in paths {
        if p.join(MANIFEST_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        let entries = fs::read_dir(p).map_err(|_| missing(p))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with("seed-"))
            .map(|e| e.path().join("bundle"))
            .filter(|b| b.join(MANIFEST_FILE).is_file())
            .collect();
        if found.is_empty() {
            return Err(missing(p));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TransferRun {
    bundle: PathBuf,
    seed: u64,
    threshold_days: f64,
    report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    scratch: Option<Vec<SeedReport>>,
}

#[derive(Serialize)]
struct TransferReport {
    target_log: String,
    eval: &'static str,
    scaler_mode: Vec<ScalerMode>,
    runs: Vec<TransferRun>,
    summary: ReportSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    scratch_summary: Option<ReportSummary>,
}

pub fn transfer(a: TransferArgs) -> Result<(), CliError> {
    let schema = a.schema.schema().map_err(CliError::Usage)?;
    if a.whole_log && (a.compare_scratch || a.scale_study) {
        return Err(CliError::Usage(
            "--compare-scratch and --scale-study train on a target split and cannot be combined with --whole-log".into(),
        ));
    }
    if let Some(f) = a.fractions.iter().find(|&&f| !(f > 0.0 && f <= 100.0)) {
        return Err(CliError::Usage(format!("--fractions: {f} is not in (0, 100]")));
    }
    let dirs = resolve_bundle_dirs(&a.bundles)?;
    let mut bundles = dirs
        .iter()
        .map(|d| load_bundle(d).map(|b| (d.clone(), b)))
        .collect::<procxfer::Result<Vec<_>>>()
        .stage("bundle")?;
    bundles.sort_by_key(|(_, b)| b.manifest.seed);
    let log = load_log(&a.log, &schema)?;

    let options = |b: &TransferBundle| TargetOptions {
        eval: if a.whole_log {
            TargetEval::WholeLog
        } else {
            TargetEval::Split {
                spec: b.manifest.pipeline.split,
            }
        },
        scaler_mode: a.scaler_mode.map_or(b.manifest.pipeline.scaler_mode, Into::into),
    };

    let runs = bundles
        .par_iter()
        .map(|(dir, b)| {
            let opts = options(b);
            let eval = evaluate_on_target(b, log.clone(), &opts).stage("evaluate")?;
            let scratch = if a.compare_scratch {
                let seeds = a.seeds.clone().unwrap_or_else(|| vec![b.manifest.seed]);
                let cmp = compare_from_scratch(b, log.clone(), &unique_seeds(&seeds), &opts).stage("compare")?;
                Some(cmp.scratch)
            } else {
                None
            };
            log::info!("bundle seed {}: target AUC_ROC {:.4}", b.manifest.seed, eval.report.auc_roc);
            Ok(TransferRun {
                bundle: dir.clone(),
                seed: b.manifest.seed,
                threshold_days: eval.threshold_days,
                report: eval.report,
                scratch,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let summary = ReportSummary::of(&runs.iter().map(|r| r.report.clone()).collect::<Vec<_>>());
    let scratch_reports: Vec<EvalReport> = runs
        .iter()
        .flat_map(|r| r.scratch.iter().flatten().map(|s| s.report.clone()))
        .collect();
    let scratch_summary = a.compare_scratch.then(|| ReportSummary::of(&scratch_reports));

    let mut sections = vec![TableSection {
        title: TRANSFER_TITLE.into(),
        rows: vec![("LSTM (transferred)".into(), summary.clone())],
    }];
    if let Some(s) = &scratch_summary {
        sections.push(TableSection {
            title: TARGET_TITLE.into(),
            rows: vec![("LSTM (from scratch)".into(), s.clone())],
        });
    }
    let table = format_table(&sections);
    write_file(&a.out.join("transfer_report.txt"), &table)?;
    let mut modes: Vec<ScalerMode> = bundles.iter().map(|(_, b)| options(b).scaler_mode).collect();
    modes.dedup();
    write_json(
        &a.out.join("transfer_report.json"),
        &TransferReport {
            target_log: log.name.clone(),
            eval: if a.whole_log { "whole_log" } else { "test_split" },
            scaler_mode: modes,
            runs,
            summary: summary.clone(),
            scratch_summary,
        },
    )?;
    print!("{table}");

    let (_, first) = &bundles[0];
    if a.scale_study {
        let seeds = a
            .seeds
            .clone()
            .unwrap_or_else(|| bundles.iter().map(|(_, b)| b.manifest.seed).collect());
        let mut study =
            scale_study(first, log.clone(), &a.fractions, &unique_seeds(&seeds), &options(first)).stage("scale-study")?;
        // Compare against the transferred models of every bundle.
        study.reference_auc = summary.auc_roc.mean;
        write_file(&a.out.join("scale_study.csv"), study.to_csv())?;
        write_file(&a.out.join("scale_study.txt"), study.to_text())?;
        print!("{}", study.to_text());
    }
    if a.analyze_embeddings {
        let d = embedding_distance_matrix(
            &first.features.activity,
            &first.manifest.source_vocabulary,
            log.activity_vocabulary(),
        );
        write_file(&a.out.join("distances.csv"), d.to_csv().stage("analyze")?)?;
        write_file(&a.out.join("distances.svg"), d.to_svg())?;
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    if let Some(d) = a.target_divisor {
        if !(d.is_finite() && d > 0.0) {
            return Err(CliError::Usage(format!("--target-divisor {d} must be positive")));
        }
    }
    let bundle = load_bundle(&a.bundle).stage("bundle")?;
    let mut predictor = OnlinePredictor::new(&bundle);
    if let Some(divisor) = a.target_divisor {
        let Some(source) = bundle.features.time.relative_scaler() else {
            return Err(CliError::Usage("--target-divisor needs a bundle with a relative time scaler".into()));
        };
        let time = TimeEncoder::Scaled {
            scaler: TimeScaler {
                strategy: source.strategy,
                params: ScalerParams::Divisor { divisor },
                fitted_on: "target-divisor".into(),
            },
        };
        predictor = predictor.with_time_encoder(time).stage("predict")?;
    }
    if let Some(fmt) = a.ts_format {
        predictor = predictor.with_timestamp_format(TimestampFormat::Pattern(fmt));
    }
    let summary = predict_online(&mut predictor, io::stdin().lock(), io::stdout().lock()).stage("predict")?;
    log::info!(
        "{} records, {} predictions, {} errors",
        summary.records,
        summary.predictions,
        summary.errors
    );
    Ok(())
}
