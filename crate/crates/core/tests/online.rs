mod common;

use common::*;
use procxfer::transfer::*;
use serde_json::{json, Value};

fn bundle() -> TransferBundle {
    let log = synthetic_log("source", &SOURCE_ACTIVITIES, 60, 5);
    let run = run_source(log, &ActivitySpec::Embedding(token_store()), &small_config(), 1).unwrap();
    TransferBundle::from_source_run(&run, None).unwrap()
}

fn run_stream(bundle: &TransferBundle, input: &str) -> (Vec<Value>, OnlineSummary) {
    let mut predictor = OnlinePredictor::new(bundle);
    let mut out = Vec::new();
    let summary = predict_online(&mut predictor, input.as_bytes(), &mut out).unwrap();
    let lines = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (lines, summary)
}

#[test]
fn single_event_instance_gives_prefix_length_one() {
    let b = bundle();
    let input = json!({"case_id": "x", "events": [{"activity": "Open ticket", "timestamp": "2021-03-01T09:00:00"}]});
    let (lines, summary) = run_stream(&b, &format!("{input}\n"));
    assert_eq!(summary.predictions, 1);
    assert_eq!(lines[0]["case_id"], "x");
    assert_eq!(lines[0]["prefix_length"], 1);
    let score = lines[0]["score"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&score));
    assert_eq!(lines[0]["predicted_label"], u8::from(score >= 0.5));
}

#[test]
fn incremental_events_grow_the_prefix() {
    let b = bundle();
    let input = [
        json!({"case_id": "c", "activity": "Open ticket", "timestamp": "2021-03-01T09:00:00"}),
        json!({"case_id": "c", "activity": "Escalate issue", "timestamp": "2021-03-03T09:00:00"}),
        json!({"case_id": "c", "activity": "Close ticket", "timestamp": "2021-03-04T10:30:00"}),
    ]
    .map(|v| v.to_string())
    .join("\n");
    let (lines, _) = run_stream(&b, &input);
    let lengths: Vec<u64> = lines.iter().map(|l| l["prefix_length"].as_u64().unwrap()).collect();
    assert_eq!(lengths, [1, 2, 3]);
}

#[test]
fn malformed_records_do_not_stop_the_stream() {
    let b = bundle();
    let input = [
        r#"{"case_id": "a", "activity": "Open ticket"}"#.to_string(),
        "not json".to_string(),
        r#"{"activity": "Open ticket", "timestamp": "2021-03-01T09:00:00"}"#.to_string(),
        r#"{"case_id": "a", "activity": " ", "timestamp": "2021-03-01T09:00:00"}"#.to_string(),
        r#"{"case_id": "a", "activity": "Open ticket", "timestamp": "yesterday"}"#.to_string(),
        String::new(),
        r#"{"case_id": "a", "activity": "Open ticket", "timestamp": "2021-03-01T09:00:00"}"#.to_string(),
    ]
    .join("\n");
    let (lines, summary) = run_stream(&b, &input);
    let kinds: Vec<&str> = lines.iter().filter_map(|l| l["error"].as_str()).collect();
    assert_eq!(kinds, ["timestamp", "json", "case_id", "activity", "timestamp"]);
    let numbers: Vec<u64> = lines.iter().filter_map(|l| l["line"].as_u64()).collect();
    assert_eq!(numbers, [1, 2, 3, 4, 5]);
    // The failed appends left case "a" empty, so the last record starts it.
    assert_eq!(lines[5]["prefix_length"], 1);
    assert_eq!(summary.errors, 5);
    assert_eq!(summary.predictions, 1);
}

#[test]
fn prefixes_beyond_the_step_limit_are_rejected() {
    let b = bundle();
    let events: Vec<Value> = (0..51)
        .map(|i| json!({"activity": "Resolve issue", "timestamp": format!("2021-03-01T{:02}:{:02}:00", i / 60, i % 60)}))
        .collect();
    let (lines, _) = run_stream(&b, &json!({"case_id": "long", "events": events}).to_string());
    assert_eq!(lines[0]["error"], "length");
}

#[test]
fn empty_input_writes_nothing() {
    let b = bundle();
    let (lines, summary) = run_stream(&b, "");
    assert!(lines.is_empty());
    assert_eq!(summary, OnlineSummary::default());
}

#[test]
fn streamed_prefixes_match_batch_scores() {
    let b = bundle();
    let log = synthetic_log("replay", &TARGET_ACTIVITIES, 12, 9);
    let opts = TargetOptions {
        eval: TargetEval::WholeLog,
        scaler_mode: ScalerMode::Source,
    };
    let batch = evaluate_on_target(&b, log.clone(), &opts).unwrap();

    let mut input = String::new();
    for trace in log.traces() {
        for e in &trace.events {
            let rec = json!({"case_id": e.case_id, "activity": e.activity, "timestamp": e.timestamp.to_rfc3339()});
            input.push_str(&rec.to_string());
            input.push('\n');
        }
    }
    let (lines, _) = run_stream(&b, &input);
    let streamed: Vec<(String, usize, f64)> = lines
        .iter()
        .map(|l| {
            (
                l["case_id"].as_str().unwrap().to_string(),
                l["prefix_length"].as_u64().unwrap() as usize,
                l["score"].as_f64().unwrap(),
            )
        })
        .collect();
    let expected: Vec<(String, usize, f64)> = batch
        .samples
        .iter()
        .zip(&batch.scores)
        .map(|((c, k), &s)| (c.clone(), *k, s))
        .collect();
    assert_eq!(streamed, expected);
}
