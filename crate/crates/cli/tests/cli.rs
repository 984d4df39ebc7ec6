//! End-to-end runs of the `claim-match` binary on small generated fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use claim_match::embedding::HashedNGramEncoder;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_claim-match"));
    c.env_remove("CLAIM_MATCH_PROVIDER").env_remove("CLAIM_MATCH_PROVIDER_URL").env_remove("CLAIM_MATCH_TOKEN");
    c.env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const TOPICS: [&str; 6] = [
    "the minister said the dam will be opened tomorrow",
    "vaccine doses are being given free at the district hospital",
    "photo shows flooding in the main market after heavy rain",
    "bank accounts will be frozen unless you share the code",
    "election results were changed by hacking the machines",
    "drinking hot water with lemon cures the virus",
];

/// Raw messages: three phrasings per topic, one with a phone number.
fn write_raw(dir: &Path) -> PathBuf {
    let mut lines = Vec::new();
    for (t, text) in TOPICS.iter().enumerate() {
        for v in 0..3 {
            let body = match v {
                0 => text.to_string(),
                1 => format!("forwarded: {text}"),
                _ => format!("{text} call +91 98765 43210"),
            };
            let lang = if t % 2 == 0 { "en" } else { "hi" };
            lines.push(serde_json::json!({ "id": format!("m{t}{v}"), "text": body, "language": lang }).to_string());
        }
    }
    lines.push(serde_json::json!({ "id": "empty", "text": "+91 98765 43210" }).to_string());
    let path = dir.join("raw.jsonl");
    fs::write(&path, lines.join("\n")).unwrap();
    path
}

fn toy_snapshot(dir: &Path) -> PathBuf {
    let path = dir.join("toy.snap");
    HashedNGramEncoder::<f32>::new(&[3, 4, 5], 2048, 24, 5).randomize(1.0, 3).save(&path).unwrap();
    path
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_raw(dir.path());
        toy_snapshot(dir.path());
        let f = Fixture { dir };
        f.ok(&["ingest", "--input", "raw.jsonl", "--output", "corpus.jsonl"]);
        f
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn ok(&self, args: &[&str]) -> String {
        ok(self.path(), args)
    }
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "{text}");
    assert!(text.contains("eval-threshold"));
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["kappa", "--labels", "x.jsonl", "--collapse", "task9"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["index", "--corpus", "c.jsonl"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["embed", "--corpus", "c.jsonl", "--output", "e.vec"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["embed", "--corpus", "c.jsonl", "--provider", "bert:x", "--output", "e"]).status.code(), Some(1));
    let missing = run(dir.path(), &["kappa", "--labels", "missing.jsonl", "--collapse", "task2"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.jsonl"));
    fs::write(dir.path().join("bad.jsonl"), "{not json}\n").unwrap();
    assert_eq!(run(dir.path(), &["kappa", "--labels", "bad.jsonl", "--collapse", "task2"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn kappa_collapses_labels() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = [
        r#"{"id_a":"a","id_b":"b","labels":["very_similar","very_similar","somewhat_similar"]}"#,
        r#"{"id_a":"c","id_b":"d","labels":["very_similar","very_dissimilar","na"]}"#,
    ];
    fs::write(dir.path().join("t2.jsonl"), pairs.join("\n")).unwrap();
    assert_eq!(ok(dir.path(), &["kappa", "--labels", "t2.jsonl", "--collapse", "task2"]).trim(), "-0.2500");

    let claims = [
        r#"{"message_id":"a","labels":["yes","probably"]}"#,
        r#"{"message_id":"b","labels":["no","no"]}"#,
    ];
    fs::write(dir.path().join("t1.jsonl"), claims.join("\n")).unwrap();
    assert_eq!(ok(dir.path(), &["kappa", "--labels", "t1.jsonl", "--collapse", "task1"]).trim(), "1.0000");
}

#[test]
fn ingest_index_embed_query() {
    let f = Fixture::new();
    let corpus = fs::read_to_string(f.path().join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 18, "the phone-only record is dropped");
    assert!(!corpus.contains("98765"), "phone numbers are scrubbed");

    assert!(f.ok(&["index", "--corpus", "corpus.jsonl", "--output", "idx.bin", "--k1", "1.5", "--b", "0.5"]).contains("18 documents"));
    f.ok(&["embed", "--corpus", "corpus.jsonl", "--provider", "toy:toy.snap", "--output", "emb.vec"]);
    let emb = fs::read_to_string(f.path().join("emb.vec")).unwrap();
    assert!(emb.starts_with("dim=24\n"));
    assert_eq!(emb.lines().count(), 19);

    let out = f.ok(&[
        "query",
        "--text",
        "the minister said the dam will be opened tomorrow",
        "--corpus",
        "corpus.jsonl",
        "--index",
        "idx.bin",
        "--provider",
        "toy:toy.snap",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["decision"], "auto_matched");
    assert_eq!(v["candidates"][0]["doc_id"], "m00");
    assert!((v["candidates"][0]["cosine"].as_f64().unwrap() - 1.0).abs() < 1e-5);

    let far = f.ok(&["query", "--text", "completely unrelated words", "--corpus", "corpus.jsonl", "--provider", "toy:toy.snap"]);
    let v: serde_json::Value = serde_json::from_str(&far).unwrap();
    assert_eq!(v["decision"], "new_claim");
}

#[test]
fn provider_comes_from_the_environment() {
    let f = Fixture::new();
    let out = bin()
        .current_dir(f.path())
        .env("CLAIM_MATCH_PROVIDER", "toy:toy.snap")
        .args(["embed", "--corpus", "corpus.jsonl", "--output", "emb.vec"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(f.path().join("emb.vec").exists());
}

#[test]
fn resolved_configuration_is_logged() {
    let f = Fixture::new();
    let out = bin()
        .current_dir(f.path())
        .env("RUST_LOG", "info")
        .args(["cluster", "--corpus", "corpus.jsonl", "--provider", "toy:toy.snap", "--seed", "9"])
        .output()
        .unwrap();
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("resolved configuration"), "{log}");
    assert!(log.contains("threshold: 0.9") && log.contains("seed: 9"), "{log}");
}

#[test]
fn eval_ir_writes_records_that_report_renders() {
    let f = Fixture::new();
    let queries = [
        r#"{"id":"q1","text":"minister says dam opens tomorrow","relevant":["m00","m01"],"language":"en"}"#,
        r#"{"id":"q2","text":"free vaccine doses at the district hospital","relevant":["m12"],"language":"hi"}"#,
        r#"{"id":"q3","text":"lemon water cures the virus","relevant":["nowhere"],"language":"hi"}"#,
    ];
    fs::write(f.path().join("q.jsonl"), queries.join("\n")).unwrap();
    let args = ["eval-ir", "--queries", "q.jsonl", "--corpus", "corpus.jsonl", "--provider", "toy:toy.snap"];
    let out = f.ok(&[&args[..], &["--label", "toy", "--mfr-cap", "51", "--records", "rec.jsonl"]].concat());
    assert!(out.contains("All"), "{out}");
    assert!(out.contains("BM25") && out.contains("toy"));

    let records = fs::read_to_string(f.path().join("rec.jsonl")).unwrap();
    // languages en, hi and All for each of two rankers
    assert_eq!(records.lines().count(), 6);
    let table = f.ok(&["report", "rec.jsonl"]);
    assert!(table.contains("Retrieval (MRR)"), "{table}");
    assert!(table.lines().any(|l| l.starts_with("All")), "{table}");
}

/// Pair file and matching embedding file: positives are near-identical
/// vectors, negatives orthogonal-ish ones.
fn write_pairs(dir: &Path) {
    let mut pairs = Vec::new();
    let mut emb = vec!["dim=8".to_string()];
    let mut corpus = Vec::new();
    for i in 0..40 {
        let lang = if i % 2 == 0 { "en" } else { "hi" };
        let positive = i % 4 < 2;
        let (a, b) = (format!("a{i}"), format!("b{i}"));
        let base: Vec<f64> = (0..8).map(|k| ((i * 7 + k * 3) % 11) as f64 - 5.0 + 0.5).collect();
        let other: Vec<f64> = if positive {
            base.iter().enumerate().map(|(k, x)| x + 0.01 * k as f64).collect()
        } else {
            base.iter().rev().enumerate().map(|(k, x)| if k % 2 == 0 { -x } else { *x }).collect()
        };
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        emb.push(format!("{a} {}", fmt(&base)));
        emb.push(format!("{b} {}", fmt(&other)));
        let label = if positive { "very_similar" } else { "very_dissimilar" };
        pairs.push(format!(r#"{{"id_a":"{a}","id_b":"{b}","labels":["{label}","{label}"],"language":"{lang}"}}"#));
        for (id, text) in [(&a, format!("claim number {i}")), (&b, format!("claim number {i} again"))] {
            corpus.push(serde_json::json!({"id": id, "text": text, "source": "tipline", "language": lang}).to_string());
        }
    }
    fs::write(dir.join("pairs.jsonl"), pairs.join("\n")).unwrap();
    fs::write(dir.join("pairs.vec"), emb.join("\n")).unwrap();
    fs::write(dir.join("pairs_corpus.jsonl"), corpus.join("\n")).unwrap();
}

#[test]
fn threshold_and_classifier_evaluations() {
    let dir = tempfile::tempdir().unwrap();
    write_pairs(dir.path());
    let out = ok(
        dir.path(),
        &[
            "eval-threshold",
            "--pairs",
            "pairs.jsonl",
            "--provider",
            "file:pairs.vec",
            "--folds",
            "5",
            "--repeats",
            "2",
            "--tau",
            "0.9",
            "--label",
            "vec",
            "--records",
            "rec.jsonl",
        ],
    );
    assert!(out.contains("All: pairs 40, max mean F1 1.000"), "{out}");
    assert!(out.contains("at 0.90: precision 1.000, recall 1.000"), "{out}");

    let out = ok(
        dir.path(),
        &[
            "eval-classifier",
            "--pairs",
            "pairs.jsonl",
            "--corpus",
            "pairs_corpus.jsonl",
            "--provider",
            "file:pairs.vec",
            "--folds",
            "5",
            "--repeats",
            "2",
            "--rounds",
            "20",
            "--label",
            "vec",
            "--model",
            "model.txt",
            "--records",
            "rec.jsonl",
        ],
    );
    assert!(out.contains("pairs 40, accuracy 1.000"), "{out}");
    assert!(fs::read_to_string(dir.path().join("model.txt")).unwrap().starts_with("adaboost rounds=20"));
    let table = ok(dir.path(), &["report", "rec.jsonl"]);
    assert!(table.contains("Cosine threshold classifier"), "{table}");
    assert!(table.contains("(0."), "{table}");
    assert!(table.contains("AdaBoost pair classifier"), "{table}");
}

#[test]
fn sample_cluster_and_distill() {
    let f = Fixture::new();
    f.ok(&[
        "sample-pairs",
        "--corpus",
        "corpus.jsonl",
        "--provider",
        "toy:toy.snap",
        "--per-provider",
        "20",
        "--random",
        "5",
        "--output",
        "sample.tsv",
    ]);
    let sample = fs::read_to_string(f.path().join("sample.tsv")).unwrap();
    assert_eq!(sample.lines().filter(|l| l.ends_with("random")).count(), 5);
    assert_eq!(sample.lines().filter(|l| l.ends_with("toy:toy.snap")).count(), 20);
    let again = f.path().join("sample2.tsv");
    f.ok(&[
        "sample-pairs",
        "--corpus",
        "corpus.jsonl",
        "--provider",
        "toy:toy.snap",
        "--per-provider",
        "20",
        "--random",
        "5",
        "--output",
        again.to_str().unwrap(),
    ]);
    assert_eq!(fs::read_to_string(again).unwrap(), sample, "same seed, same sample");

    let out = f.ok(&["cluster", "--corpus", "corpus.jsonl", "--provider", "toy:toy.snap", "--threshold", "0.99", "--output", "a.tsv"]);
    let assignments = fs::read_to_string(f.path().join("a.tsv")).unwrap();
    assert_eq!(assignments.lines().count(), 18);
    for line in out.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["size"].as_u64().unwrap() >= 2);
        assert!(v["representatives"]["medoid"].is_string());
    }

    let bitext = "the dam opens\tबांध खुलता है\nfree vaccine\tमुफ्त टीका\nhot water cures\tगर्म पानी इलाज\n";
    fs::write(f.path().join("bitext.tsv"), bitext).unwrap();
    let out = f.ok(&[
        "distill",
        "--pairs",
        "bitext.tsv",
        "--teacher",
        "toy:toy.snap",
        "--buckets",
        "512",
        "--epochs",
        "20",
        "--learning-rate",
        "1.0",
        "--output",
        "student.snap",
    ]);
    let trace: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let losses = trace["epoch_losses"].as_array().unwrap();
    assert_eq!(losses.len(), 20);
    assert!(losses.last().unwrap().as_f64().unwrap() < trace["initial_loss"].as_f64().unwrap());
    let student = HashedNGramEncoder::<f32>::load(&f.path().join("student.snap")).unwrap();
    assert_eq!(student.dim(), 24);
}
