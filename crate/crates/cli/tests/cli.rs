use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_procxfer");

const SOURCE: [&str; 5] = ["Open ticket", "Assign engineer", "Escalate issue", "Resolve issue", "Close ticket"];
const TARGET: [&str; 5] = ["Create case", "Assign analyst", "Escalate case", "Resolve case", "Close case"];

/// Deterministic log: escalations stretch a case by days, so the outcome
/// depends on the prefix.
fn write_log(path: &Path, acts: &[&str; 5], traces: usize, seed: u64) {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = |n: u64| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) % n
    };
    let mut out = String::from("case_id,activity,timestamp\n");
    let base = 1_600_000_000i64;
    for i in 0..traces {
        let mut t = base + i as i64 * 5 * 3600 + next(7200) as i64;
        let mut push = |a: &str, t: i64| {
            let ts = chrono_like(t);
            out.push_str(&format!("c{i},{a},{ts}\n"));
        };
        push(acts[0], t);
        for _ in 0..next(5) {
            let k = 1 + next(3) as usize;
            t += if k == 2 { 3600 * (48 + next(72) as i64) } else { 3600 * (1 + next(11) as i64) };
            push(acts[k], t);
        }
        t += 3600 * (1 + next(23) as i64);
        push(acts[4], t);
    }
    fs::write(path, out).unwrap();
}

/// Seconds since the epoch as `YYYY-MM-DDTHH:MM:SS` (UTC).
fn chrono_like(secs: i64) -> String {
    let days = secs.div_euclid(86_400);
    let rem = secs.rem_euclid(86_400);
    // Civil-from-days conversion.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}", rem / 3600, rem % 3600 / 60, rem % 60)
}

fn write_vectors(path: &Path) {
    let words = [
        "open", "ticket", "assign", "engineer", "escalate", "issue", "resolve", "close", "create", "case", "analyst",
    ];
    let mut out = format!("{} 4\n", words.len());
    for (i, w) in words.iter().enumerate() {
        let v: Vec<String> = (0..4).map(|j| format!("{:.3}", ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0)).collect();
        out.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    fs::write(path, out).unwrap();
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_log(&dir.path().join("source.csv"), &SOURCE, 60, 1);
        write_log(&dir.path().join("target.csv"), &TARGET, 50, 2);
        write_vectors(&dir.path().join("vectors.txt"));
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "train".to_string(),
            "--log".into(),
            self.arg("source.csv"),
            "--out".into(),
            self.arg(out),
            "--hidden".into(),
            "4".into(),
            "--epochs".into(),
            "2".into(),
            "--batch-size".into(),
            "16".into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        if !extra.contains(&"one-hot") {
            args.extend(["--vectors".into(), self.arg("vectors.txt")]);
        }
        run(&args, None)
    }
}

fn run(args: &[String], stdin: Option<&str>) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut input = child.stdin.take().unwrap();
        if let Some(text) = stdin {
            input.write_all(text.as_bytes()).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_bundles_and_reports() {
    let f = Fixture::new();
    ok(&f.train("out", &["--seeds", "3,4"]));
    for seed in [3, 4] {
        let dir = f.path("out").join(format!("seed-{seed}"));
        for file in ["bundle/manifest.json", "bundle/weights.bin", "history.csv", "report.json"] {
            assert!(dir.join(file).is_file(), "{file}");
        }
    }
    let report = json(&f.path("out/source_report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    let table = fs::read_to_string(f.path("out/source_report.txt")).unwrap();
    assert!(table.starts_with("PPM technique"));
    assert!(table.contains("Precision") && table.contains("AUC_ROC"));
}

#[test]
fn fixed_seed_runs_are_bit_reproducible() {
    let f = Fixture::new();
    ok(&f.train("a", &["--seed", "7"]));
    ok(&f.train("b", &["--seed", "7"]));
    for file in ["bundle/weights.bin", "bundle/manifest.json", "report.json"] {
        let a = fs::read(f.path("a/seed-7").join(file)).unwrap();
        let b = fs::read(f.path("b/seed-7").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn embedding_without_vectors_is_a_usage_error() {
    let f = Fixture::new();
    let out = run(
        &["train", "--log", "/nonexistent.csv", "--out", &f.arg("never")].map(String::from),
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--vectors"));
    assert!(!f.path("never").exists());
}

#[test]
fn module_errors_carry_a_stage_tag() {
    let f = Fixture::new();
    let out = f.train("out", &["--encoder", "one-hot", "--case-column", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [log]"));

    let out = run(
        &["transfer", "--bundles", &f.arg("missing"), "--log", &f.arg("target.csv"), "--out", &f.arg("t")]
            .map(String::from),
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [bundle]"));
}

#[test]
fn transfer_with_comparison_scale_study_and_distances() {
    let f = Fixture::new();
    ok(&f.train("src", &["--seeds", "1,2"]));
    let args = [
        "transfer",
        "--bundles",
        &f.arg("src"),
        "--log",
        &f.arg("target.csv"),
        "--out",
        &f.arg("t"),
        "--compare-scratch",
        "--scale-study",
        "--fractions",
        "50,100",
        "--seeds",
        "5",
        "--analyze-embeddings",
    ]
    .map(String::from);
    ok(&run(&args, None));
    let report = json(&f.path("t/transfer_report.json"));
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["seed"], 1);
    assert_eq!(runs[0]["scratch"][0]["seed"], 5);
    assert_eq!(report["summary"]["runs"], 2);
    let table = fs::read_to_string(f.path("t/transfer_report.txt")).unwrap();
    assert!(table.contains("Train on source, test on target") && table.contains("Train and test on target"));
    let study = fs::read_to_string(f.path("t/scale_study.csv")).unwrap();
    assert!(study.starts_with("fraction_percent,") && study.contains("\n100,"));
    let csv = fs::read_to_string(f.path("t/distances.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + TARGET.len());
    assert!(f.path("t/distances.svg").is_file());
}

#[test]
fn whole_log_transfer_scores_every_event() {
    let f = Fixture::new();
    ok(&f.train("src", &["--encoder", "one-hot"]));
    let bundle = f.arg("src/seed-0/bundle");
    let args = ["transfer", "--bundles", &bundle, "--log", &f.arg("target.csv"), "--out", &f.arg("t"), "--whole-log"]
        .map(String::from);
    ok(&run(&args, None));
    let report = json(&f.path("t/transfer_report.json"));
    let events = fs::read_to_string(f.path("target.csv")).unwrap().lines().count() - 1;
    assert_eq!(report["runs"][0]["report"]["n"], events);

    let mut bad = args.to_vec();
    bad.push("--compare-scratch".into());
    assert_eq!(run(&bad, None).status.code(), Some(2));
}

#[test]
fn predict_streams_ndjson() {
    let f = Fixture::new();
    ok(&f.train("src", &[]));
    let bundle = f.arg("src/seed-0/bundle");
    let args = ["predict".to_string(), "--bundle".into(), bundle];

    let one = r#"{"case_id":"x","events":[{"activity":"Create case","timestamp":"2021-03-01T09:00:00"}]}"#;
    let out = run(&args, Some(&format!("{one}\n")));
    ok(&out);
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["prefix_length"], 1);

    let events = [
        r#"{"case_id":"c","activity":"Create case","timestamp":"2021-03-01T09:00:00"}"#,
        r#"{"case_id":"c","activity":"Escalate case","timestamp":"2021-03-03T09:00:00"}"#,
        r#"{"case_id":"c","activity":"Close case","timestamp":"2021-03-04T10:00:00"}"#,
    ]
    .join("\n");
    let out = run(&args, Some(&events));
    ok(&out);
    let lengths: Vec<u64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["prefix_length"].as_u64().unwrap())
        .collect();
    assert_eq!(lengths, [1, 2, 3]);

    let out = run(&args, Some(""));
    ok(&out);
    assert!(out.stdout.is_empty());

    let mut scaled = args.to_vec();
    scaled.extend(["--target-divisor".into(), "3.5".into()]);
    ok(&run(&scaled, Some(one)));
}

#[test]
fn baselines_print_one_section_per_regime() {
    let f = Fixture::new();
    let args = [
        "baselines",
        "--source-log",
        &f.arg("source.csv"),
        "--target-log",
        &f.arg("target.csv"),
        "--out",
        &f.arg("b"),
        "--models",
        "tree,logreg",
        "--logreg-epochs",
        "20",
    ]
    .map(String::from);
    ok(&run(&args, None));
    let table = fs::read_to_string(f.path("b/baselines_report.txt")).unwrap();
    for title in ["Train and test on source", "Train and test on target", "Train on source, test on target"] {
        assert!(table.contains(title), "{title}");
    }
    assert_eq!(table.matches("Decision tree").count(), 3);
    assert_eq!(table.matches("Logistic regression").count(), 3);
    assert!(!table.contains("Random forest"));
    let report = json(&f.path("b/baselines_report.json"));
    assert_eq!(report["sections"].as_array().unwrap().len(), 3);
    assert_eq!(report["sections"][0]["rows"][0]["model"], "Logistic regression");
}

#[test]
fn config_file_supplies_flags_and_the_command_line_wins() {
    let f = Fixture::new();
    fs::write(
        f.path("cfg.json"),
        serde_json::json!({"encoder": "one-hot", "hidden": 3, "epochs": 1, "seeds": [9]}).to_string(),
    )
    .unwrap();
    let args = [
        "--config",
        &f.arg("cfg.json"),
        "train",
        "--log",
        &f.arg("source.csv"),
        "--out",
        &f.arg("c"),
        "--hidden",
        "5",
    ]
    .map(String::from);
    ok(&run(&args, None));
    let manifest = json(&f.path("c/seed-9/bundle/manifest.json"));
    assert_eq!(manifest["model"]["hidden"], 5);
    assert_eq!(manifest["activity"]["kind"], "one_hot");
}
