//! The comparison models: logistic regression, a decision tree, a random
//! forest and an LSTM, all fed one-hot activities and min-max scaled time.

use rayon::prelude::*;
use serde::Serialize;

use procxfer::baselines::{
    train_forest, train_logreg, train_tree, Classifier, FlatDataset, ForestConfig, LogRegConfig, TreeConfig,
};
use procxfer::embeddings::{fit_one_hot, ActivityEncoder};
use procxfer::metrics::{evaluate, format_table, EvalReport, ReportSummary, TableSection};
use procxfer::tensorize::{FeatureEncoder, PrefixDataset};
use procxfer::timefeat::ScalingStrategy;
use procxfer::transfer::{
    binary_labels, encode_log, fit_time_encoder, prepare_log, score_dataset, train_lstm, PipelineConfig,
    PreparedLog, TimeFeature,
};

use crate::args::{BaselineArgs, ModelArg, RegimeArg};
use crate::commands::{load_log, unique_seeds, SOURCE_TITLE, TARGET_TITLE, TRANSFER_TITLE};
use crate::output::{write_file, write_json, CliError, Staged};

fn model_name(m: ModelArg) -> &'static str {
    match m {
        ModelArg::Logreg => "Logistic regression",
        ModelArg::Tree => "Decision tree",
        ModelArg::Forest => "Random forest",
        ModelArg::LstmOneHot => "LSTM (one-hot)",
    }
}

fn regime_title(r: RegimeArg) -> &'static str {
    match r {
        RegimeArg::Source => SOURCE_TITLE,
        RegimeArg::Target => TARGET_TITLE,
        RegimeArg::Transfer => TRANSFER_TITLE,
    }
}

/// Encoded splits of one training domain plus the test sets it is scored on.
struct Domain {
    train: PrefixDataset,
    val: PrefixDataset,
    /// `(regime, test set)` pairs scored with models trained here.
    tests: Vec<(RegimeArg, PrefixDataset)>,
}

fn encode_domain(
    prepared: &PreparedLog,
    cfg: &PipelineConfig,
    tests: Vec<(RegimeArg, &PreparedLog)>,
) -> Result<Domain, CliError> {
    let features = FeatureEncoder::new(
        ActivityEncoder::OneHot(fit_one_hot(prepared.log.activity_vocabulary()).stage("encode")?),
        fit_time_encoder(&cfg.time, &prepared.train).stage("encode")?,
    );
    let tests = tests
        .into_iter()
        .map(|(r, p)| Ok((r, encode_log(&p.test, &features, cfg).stage("encode")?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Domain {
        train: encode_log(&prepared.train, &features, cfg).stage("encode")?,
        val: encode_log(&prepared.val, &features, cfg).stage("encode")?,
        tests,
    })
}

#[derive(Debug, Clone, Serialize)]
struct ModelRun {
    seed: Option<u64>,
    report: EvalReport,
}

#[derive(Serialize)]
struct ModelRows {
    model: &'static str,
    runs: Vec<ModelRun>,
    summary: ReportSummary,
}

#[derive(Serialize)]
struct RegimeSection {
    regime: &'static str,
    rows: Vec<ModelRows>,
}

#[derive(Serialize)]
struct BaselineReport {
    source_log: String,
    target_log: String,
    source_threshold_days: f64,
    target_threshold_days: f64,
    sections: Vec<RegimeSection>,
}

struct Settings {
    cfg: PipelineConfig,
    logreg: LogRegConfig,
    forest: ForestConfig,
    seeds: Vec<u64>,
}

/// Trains `model` on the domain and scores every test set. Deterministic
/// models are trained once; seeded ones once per seed.
fn run_model(model: ModelArg, d: &Domain, s: &Settings) -> Result<Vec<Vec<ModelRun>>, CliError> {
    let threshold = s.cfg.threshold;
    let per_test = |runs: Vec<Vec<ModelRun>>| -> Vec<Vec<ModelRun>> {
        // runs[seed][test] -> out[test][seed]
        (0..d.tests.len()).map(|t| runs.iter().map(|r| r[t].clone()).collect()).collect()
    };
    let classic = |clf: &dyn Classifier, seed: Option<u64>| -> Result<Vec<ModelRun>, CliError> {
        d.tests
            .iter()
            .map(|(_, test)| {
                let scores = clf.predict(&FlatDataset::from_prefixes(test));
                let report = evaluate(&scores, &binary_labels(test), threshold).stage("evaluate")?;
                Ok(ModelRun { seed, report })
            })
            .collect()
    };
    let runs = match model {
        ModelArg::Logreg => {
            let m = train_logreg(&FlatDataset::from_prefixes(&d.train), &s.logreg).stage("train")?;
            vec![classic(&m, None)?]
        }
        ModelArg::Tree => {
            let m = train_tree(&FlatDataset::from_prefixes(&d.train), &s.forest.tree).stage("train")?;
            vec![classic(&m, None)?]
        }
        ModelArg::Forest => {
            let flat = FlatDataset::from_prefixes(&d.train);
            s.seeds
                .par_iter()
                .map(|&seed| {
                    let m = train_forest(&flat, &ForestConfig { seed, ..s.forest }).stage("train")?;
                    classic(&m, Some(seed))
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
        ModelArg::LstmOneHot => s
            .seeds
            .par_iter()
            .map(|&seed| {
                let (m, _) = train_lstm(&d.train, &d.val, &s.cfg, seed).stage("train")?;
                d.tests
                    .iter()
                    .map(|(_, test)| {
                        let (_, report) = score_dataset(&m, test, threshold).stage("evaluate")?;
                        Ok(ModelRun {
                            seed: Some(seed),
                            report,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .collect::<Result<Vec<_>, CliError>>()?,
    };
    Ok(per_test(runs))
}

pub fn run(a: BaselineArgs) -> Result<(), CliError> {
    let mut cfg = a.pipeline.config().map_err(CliError::Usage)?;
    cfg.time = TimeFeature::Scaled {
        strategy: ScalingStrategy::MinMax,
    };
    let schema = a.schema.schema().map_err(CliError::Usage)?;
    if a.min_leaf == 0 || a.max_depth == 0 || a.trees == 0 {
        return Err(CliError::Usage("--min-leaf, --max-depth and --trees must be positive".into()));
    }
    if !(a.logreg_lr > 0.0 && a.logreg_l2 >= 0.0) {
        return Err(CliError::Usage("--logreg-lr must be positive and --logreg-l2 non-negative".into()));
    }
    let mut models = a.models.clone();
    models.sort();
    models.dedup();
    let mut regimes = a.regime.clone();
    regimes.sort();
    regimes.dedup();
    let tree = TreeConfig {
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
    };
    let settings = Settings {
        cfg,
        logreg: LogRegConfig {
            lr: a.logreg_lr,
            epochs: a.logreg_epochs,
            l2: a.logreg_l2,
        },
        forest: ForestConfig {
            n_trees: a.trees,
            tree,
            ..ForestConfig::default()
        },
        seeds: unique_seeds(&a.seeds),
    };
    let cfg = &settings.cfg;

    let mut source = prepare_log(load_log(&a.source_log, &schema)?, cfg).stage("prepare")?;
    if let Some(limit) = cfg.source_train_limit {
        let name = source.train.name.clone();
        source.train = source.train.head(limit, name);
    }
    let target = prepare_log(load_log(&a.target_log, &schema)?, cfg).stage("prepare")?;

    // Models trained on the source serve both the source and transfer regimes.
    let mut domains = Vec::new();
    let source_tests: Vec<(RegimeArg, &PreparedLog)> = regimes
        .iter()
        .filter_map(|r| match r {
            RegimeArg::Source => Some((*r, &source)),
            RegimeArg::Transfer => Some((*r, &target)),
            RegimeArg::Target => None,
        })
        .collect();
    if !source_tests.is_empty() {
        domains.push(encode_domain(&source, cfg, source_tests)?);
    }
    if regimes.contains(&RegimeArg::Target) {
        domains.push(encode_domain(&target, cfg, vec![(RegimeArg::Target, &target)])?);
    }

    let mut by_regime: Vec<(RegimeArg, Vec<ModelRows>)> = regimes.iter().map(|&r| (r, Vec::new())).collect();
    for &model in &models {
        for d in &domains {
            let runs = run_model(model, d, &settings)?;
            for ((regime, _), runs) in d.tests.iter().zip(runs) {
                let summary = ReportSummary::of(&runs.iter().map(|r| r.report.clone()).collect::<Vec<_>>());
                log::info!("{} / {}: AUC_ROC {}", regime_title(*regime), model_name(model), summary.auc_roc);
                let slot = by_regime.iter_mut().find(|(r, _)| r == regime).expect("regime listed");
                slot.1.push(ModelRows {
                    model: model_name(model),
                    runs,
                    summary,
                });
            }
        }
    }

    let sections: Vec<TableSection> = by_regime
        .iter()
        .map(|(r, rows)| TableSection {
            title: regime_title(*r).into(),
            rows: rows.iter().map(|m| (m.model.to_string(), m.summary.clone())).collect(),
        })
        .collect();
    let mut table = format_table(&sections);
    table.push_str("Gradient-boosted trees are not included.\n");
    write_file(&a.out.join("baselines_report.txt"), &table)?;
    write_json(
        &a.out.join("baselines_report.json"),
        &BaselineReport {
            source_log: source.log.name.clone(),
            target_log: target.log.name.clone(),
            source_threshold_days: source.threshold_days,
            target_threshold_days: target.threshold_days,
            sections: by_regime
                .into_iter()
                .map(|(r, rows)| RegimeSection {
                    regime: match r {
                        RegimeArg::Source => "source",
                        RegimeArg::Target => "target",
                        RegimeArg::Transfer => "transfer",
                    },
                    rows,
                })
                .collect(),
        },
    )?;
    print!("{table}");
    Ok(())
}
