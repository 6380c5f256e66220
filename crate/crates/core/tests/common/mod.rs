#![allow(dead_code)]

use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use procxfer::embeddings::{Casing, EmbeddingStore, StoreKind};
use procxfer::eventlog::{Event, EventLog, Trace};
use procxfer::nn::TrainConfig;
use procxfer::transfer::PipelineConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SOURCE_ACTIVITIES: [&str; 5] = [
    "Open ticket",
    "Assign engineer",
    "Escalate issue",
    "Resolve issue",
    "Close ticket",
];

pub const TARGET_ACTIVITIES: [&str; 5] = [
    "Create case",
    "Assign analyst",
    "Escalate case",
    "Resolve case",
    "Close case",
];

/// Traces open with activity 0 and close with activity 4; escalations
/// (activity 2) add days, so the outcome is learnable from the prefix.
pub fn synthetic_log(name: &str, activities: &[&str; 5], traces: usize, seed: u64) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Utc.with_ymd_and_hms(2020, 1, 6, 8, 0, 0).unwrap();
    let out = (0..traces)
        .map(|i| {
            let case = format!("{name}-{i}");
            let mut t = base + Duration::hours(5 * i as i64) + Duration::minutes(rng.random_range(0..120));
            let mut events = vec![Event::new(&case, activities[0], t)];
            let middle = rng.random_range(0..5);
            for _ in 0..middle {
                let k = rng.random_range(1..4);
                let hours = if k == 2 { rng.random_range(48..120) } else { rng.random_range(1..12) };
                t += Duration::hours(hours);
                events.push(Event::new(&case, activities[k], t));
            }
            t += Duration::hours(rng.random_range(1..24));
            events.push(Event::new(&case, activities[4], t));
            Trace::new(case, events)
        })
        .collect();
    EventLog::new(name, out)
}

/// Token-level store covering both vocabularies; shared words get the
/// same vector.
pub fn token_store() -> Arc<EmbeddingStore> {
    let words = [
        "open", "ticket", "assign", "engineer", "escalate", "issue", "resolve", "close", "create", "case", "analyst",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let entries: Vec<(&str, Vec<f32>)> = words
        .iter()
        .map(|w| (*w, (0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect()))
        .collect();
    Arc::new(EmbeddingStore::from_entries(6, Casing::Uncased, StoreKind::TokenLevel, entries).unwrap())
}

pub fn small_config() -> PipelineConfig {
    PipelineConfig {
        hidden: 6,
        train: TrainConfig {
            max_epochs: 4,
            patience: 2,
            batch_size: 16,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    }
}

/// The log as CSV with the default column names.
pub fn to_csv(log: &EventLog) -> String {
    let mut out = String::from("case_id,activity,timestamp\n");
    for trace in log.traces() {
        for e in &trace.events {
            out.push_str(&format!(
                "{},{},{}\n",
                e.case_id,
                e.activity,
                e.timestamp.format("%Y-%m-%dT%H:%M:%S")
            ));
        }
    }
    out
}
