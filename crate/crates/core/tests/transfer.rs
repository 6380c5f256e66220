mod common;

use std::fs;

use common::*;
use procxfer::embeddings::ActivityEncoder;
use procxfer::error::Error;
use procxfer::tensorize::PrefixEncoding;
use procxfer::timefeat::ScalingStrategy;
use procxfer::transfer::*;

fn source_bundle(activity: ActivitySpec) -> (SourceRun, TransferBundle) {
    let log = synthetic_log("source", &SOURCE_ACTIVITIES, 80, 1);
    let run = run_source(log, &activity, &small_config(), 3).unwrap();
    let bundle = TransferBundle::from_source_run(&run, Some("fixture.txt".into())).unwrap();
    (run, bundle)
}

fn target_log() -> procxfer::eventlog::EventLog {
    synthetic_log("target", &TARGET_ACTIVITIES, 70, 2)
}

#[test]
fn manifest_records_default_encoding_and_scaler() {
    let (_, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let p = &bundle.manifest.pipeline;
    assert_eq!(p.encoding, PrefixEncoding::Index { max_steps: 50 });
    assert_eq!(
        p.time,
        TimeFeature::Scaled {
            strategy: ScalingStrategy::RelativeQuantile { q: 0.70 }
        }
    );
    assert_eq!(bundle.manifest.format_version, FORMAT_VERSION);
    assert_eq!(bundle.manifest.metrics, METRICS);
}

#[test]
fn save_and_load_round_trip() {
    let (_, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let dir = tempfile::tempdir().unwrap();
    save_bundle(dir.path(), &bundle).unwrap();
    let loaded = load_bundle(dir.path()).unwrap();
    assert_eq!(loaded, bundle);

    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, [VECTORS_FILE, CHECKSUMS_FILE, MANIFEST_FILE, WEIGHTS_FILE]);
}

#[test]
fn one_hot_bundle_carries_its_vocabulary() {
    let (_, bundle) = source_bundle(ActivitySpec::OneHot);
    let dir = tempfile::tempdir().unwrap();
    save_bundle(dir.path(), &bundle).unwrap();
    assert!(!dir.path().join(VECTORS_FILE).exists());
    let loaded = load_bundle(dir.path()).unwrap();
    assert_eq!(loaded, bundle);
    match &loaded.manifest.activity {
        ActivityManifest::OneHot { vocabulary } => assert_eq!(vocabulary.len(), 5),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn tampering_and_versions_are_rejected() {
    let (_, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let dir = tempfile::tempdir().unwrap();
    save_bundle(dir.path(), &bundle).unwrap();

    let weights = dir.path().join(WEIGHTS_FILE);
    let original = fs::read(&weights).unwrap();
    let mut flipped = original.clone();
    flipped[5] ^= 0x01;
    fs::write(&weights, &flipped).unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(Error::Integrity(_))));
    fs::write(&weights, &original).unwrap();

    // A bundle written by a future format, with consistent checksums.
    let mut b2 = bundle.clone();
    b2.manifest.format_version = FORMAT_VERSION + 1;
    let other = tempfile::tempdir().unwrap();
    save_bundle(other.path(), &b2).unwrap();
    assert!(matches!(load_bundle(other.path()), Err(Error::Version(_))));

    fs::remove_file(dir.path().join(CHECKSUMS_FILE)).unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(Error::Integrity(_))));
}

#[test]
fn identity_transfer_reproduces_the_source_report() {
    let (run, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let log = synthetic_log("source", &SOURCE_ACTIVITIES, 80, 1);
    let eval = evaluate_on_target(&bundle, log, &TargetOptions::from_bundle(&bundle)).unwrap();
    assert_eq!(eval.report, run.test_report);
    assert_eq!(eval.scores, run.test_scores);
}

#[test]
fn target_evaluation_leaves_weights_untouched() {
    let (_, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let before = bundle.weights_bytes();
    let opts = TargetOptions::from_bundle(&bundle);
    let eval = evaluate_on_target(&bundle, target_log(), &opts).unwrap();
    assert!((0.0..=1.0).contains(&eval.report.auc_roc));
    assert_eq!(bundle.weights_bytes(), before);

    // Every target activity is encodable even though none is in the source.
    let whole = TargetOptions {
        eval: TargetEval::WholeLog,
        ..opts
    };
    let all = evaluate_on_target(&bundle, target_log(), &whole).unwrap();
    assert_eq!(all.report.n, target_log().event_count());
    assert_eq!(bundle.weights_bytes(), before);
}

#[test]
fn scaler_modes_choose_the_divisor() {
    let (run, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let source_divisor = run.features.time.relative_scaler().unwrap().reference();
    let opts = TargetOptions::from_bundle(&bundle);
    let per_domain = evaluate_on_target(&bundle, target_log(), &opts).unwrap();
    let source = evaluate_on_target(
        &bundle,
        target_log(),
        &TargetOptions {
            scaler_mode: ScalerMode::Source,
            ..opts
        },
    )
    .unwrap();
    assert_eq!(source.time.relative_scaler().unwrap().reference(), source_divisor);
    let target_divisor = per_domain.time.relative_scaler().unwrap();
    assert_eq!(target_divisor.fitted_on, "target/train");
    // Both scalers map their own statistic to 1.
    assert_eq!(target_divisor.apply(target_divisor.reference()), 1.0);
}

#[test]
fn width_mismatch_is_a_configuration_error() {
    let (_, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let mut broken = bundle.clone();
    broken.features.time = procxfer::timefeat::TimeEncoder::Cyclic {
        config: procxfer::timefeat::CyclicConfig::all(),
    };
    let err = evaluate_on_target(&broken, target_log(), &TargetOptions::from_bundle(&bundle)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err:?}");
}

#[test]
fn comparison_and_scale_study() {
    let (_, bundle) = source_bundle(ActivitySpec::Embedding(token_store()));
    let opts = TargetOptions::from_bundle(&bundle);
    assert!(compare_from_scratch(&bundle, target_log(), &[], &opts).is_err());

    let cmp = compare_from_scratch(&bundle, target_log(), &[11], &opts).unwrap();
    assert_eq!(cmp.scratch.len(), 1);
    assert_eq!(cmp.transferred.n, cmp.scratch[0].report.n);

    let study = scale_study(&bundle, target_log(), &[100.0, 1.0, 50.0], &[11], &opts).unwrap();
    // 1% of the 44 training traces is not enough to train on.
    assert_eq!(study.skipped, vec![1.0]);
    let fractions: Vec<f64> = study.rows.iter().map(|r| r.fraction).collect();
    assert_eq!(fractions, vec![50.0, 100.0]);
    assert_eq!(study.rows[1].auc[0], cmp.scratch[0].report.auc_roc);
    assert_eq!(study.reference_auc, cmp.transferred.auc_roc);
    assert!(study.to_csv().starts_with("fraction_percent,"));
}

#[test]
fn one_hot_transfer_sees_only_unknown_activities() {
    let (_, bundle) = source_bundle(ActivitySpec::OneHot);
    let ActivityEncoder::OneHot(one_hot) = &bundle.features.activity else {
        panic!("one-hot expected")
    };
    for a in TARGET_ACTIVITIES {
        assert!(one_hot.encode(a).iter().all(|&x| x == 0.0));
    }
    let eval = evaluate_on_target(&bundle, target_log(), &TargetOptions::from_bundle(&bundle)).unwrap();
    assert!(eval.report.n > 0);
}

#[test]
fn distance_matrix_properties() {
    let encoder = ActivityEncoder::Embedding(token_store());
    let source: Vec<String> = SOURCE_ACTIVITIES.iter().map(|s| s.to_string()).collect();
    let mut target: Vec<String> = TARGET_ACTIVITIES.iter().map(|s| s.to_string()).collect();
    target.push("Resolve issue".into());
    let d = embedding_distance_matrix(&encoder, &source, &target);
    assert_eq!(d.get(5, 3), 0.0);
    assert!(d.values.iter().all(|&x| x >= 0.0));

    // Equal vocabularies in different orders: D and the reordered Dᵀ agree.
    let reversed: Vec<String> = source.iter().rev().cloned().collect();
    let a = embedding_distance_matrix(&encoder, &source, &reversed);
    let n = source.len();
    for i in 0..n {
        for j in 0..n {
            assert_eq!(a.get(i, j), a.get(n - 1 - j, n - 1 - i));
        }
    }
    let csv = d.to_csv().unwrap();
    assert_eq!(csv.lines().count(), target.len() + 1);
    let svg = d.to_svg();
    assert!(svg.starts_with("<svg") && svg.contains("Escalate case"));
}
