use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn genretag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genretag"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = genretag(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_close(a: &Value, b: &Value, what: &str) {
    let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
    assert!((x - y).abs() < 1e-12, "{what}: {x} vs {y}");
}

#[test]
fn stats_match_committed_reference() {
    let corpus = fixture("mini_corpus.jsonl");
    let got: Value = serde_json::from_str(&ok(&["stats", "--corpus", p(&corpus)])).unwrap();
    let want = read_json(&fixture("mini_corpus.stats.json"));
    for key in [
        "n_records",
        "unique_genre_sets",
        "set_size_hist",
        "token_hist",
    ] {
        assert_eq!(got[key], want[key], "{key}");
    }
    for key in ["mean_genres", "mean_tokens"] {
        assert_close(&got[key], &want[key], key);
    }
    for (g, f) in want["genre_freq"].as_object().unwrap() {
        assert_close(&got["genre_freq"][g], f, g);
    }
}

#[test]
fn top2_baseline_matches_committed_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("mini_corpus.jsonl");
    let preds = dir.path().join("base.jsonl");
    let report = dir.path().join("report.json");
    ok(&[
        "baseline",
        "--top-k",
        "2",
        "--train",
        p(&corpus),
        "--corpus",
        p(&corpus),
        "--out",
        p(&preds),
    ]);
    let table = ok(&[
        "evaluate",
        "--truth",
        p(&corpus),
        "--predictions",
        p(&preds),
        "--report",
        p(&report),
    ]);
    let header: Vec<&str> = table
        .lines()
        .next()
        .unwrap()
        .split("  ")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    assert_eq!(
        header,
        [
            "model",
            "hit rate",
            "Jaccard",
            "F-score",
            "precision",
            "recall"
        ]
    );

    let want = read_json(&fixture("top2_baseline.report.json"));
    let got = read_json(&report);
    for (k, v) in want["aggregate"].as_object().unwrap() {
        if k == "n_examples" {
            assert_eq!(&got["aggregate"][k], v);
        } else {
            assert_close(&got["aggregate"][k], v, k);
        }
    }
    let first = std::fs::read_to_string(&preds).unwrap();
    let line: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(line["genres"], want["genres"]);
}

#[test]
fn evaluating_the_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("mini_corpus.jsonl");
    let preds = dir.path().join("truth.jsonl");
    let lines: String = std::fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            format!(
                "{}\n",
                serde_json::json!({"id": v["id"], "genres": v["genres"]})
            )
        })
        .collect();
    std::fs::write(&preds, lines).unwrap();
    let report = dir.path().join("r.json");
    ok(&[
        "evaluate",
        "--truth",
        p(&corpus),
        "--predictions",
        p(&preds),
        "--report",
        p(&report),
    ]);
    let r = read_json(&report);
    assert_eq!(r["aggregate"]["mean_jaccard"], 1.0);
    assert_eq!(r["aggregate"]["hit_rate"], 1.0);
    assert_eq!(r["aggregate"]["fscore"], 1.0);
}

#[test]
fn mnb_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("mini_corpus.jsonl");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for m in [&a, &b] {
        ok(&[
            "train",
            "--kind",
            "mnb",
            "--train",
            p(&corpus),
            "--model",
            p(m),
            "--seed",
            "3",
        ]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn split_writes_a_partition() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("mini_corpus.jsonl");
    ok(&[
        "split",
        "--corpus",
        p(&corpus),
        "--out-dir",
        p(dir.path()),
        "--seed",
        "7",
    ]);
    let count = |n: &str| {
        std::fs::read_to_string(dir.path().join(n))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(
        (
            count("train.jsonl"),
            count("validation.jsonl"),
            count("test.jsonl")
        ),
        (140, 20, 40)
    );
}

#[test]
fn exit_codes() {
    let corpus = fixture("mini_corpus.jsonl");
    assert_eq!(
        genretag(&["stats", "--corpus", p(&corpus), "--bogus"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        genretag(&["stats", "--corpus", "/nonexistent/corpus.jsonl"])
            .status
            .code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let bad_k = genretag(&[
        "baseline",
        "--top-k",
        "5",
        "--train",
        p(&corpus),
        "--corpus",
        p(&corpus),
        "--out",
        p(&out),
    ]);
    assert_eq!(bad_k.status.code(), Some(1));
    assert_eq!(genretag(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_sits_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("mini_corpus.jsonl");
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "# split settings\ntrain = 0.5\nvalidation = 0.25\ntest = 0.25\n",
    )
    .unwrap();
    let out_dir = dir.path().join("parts");
    ok(&[
        "split",
        "--config",
        p(&conf),
        "--corpus",
        p(&corpus),
        "--out-dir",
        p(&out_dir),
        "--test",
        "0.3",
        "--validation",
        "0.2",
    ]);
    let count = |n: &str| {
        std::fs::read_to_string(out_dir.join(n))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(
        (
            count("train.jsonl"),
            count("validation.jsonl"),
            count("test.jsonl")
        ),
        (100, 40, 60)
    );
}

#[test]
fn grid_dry_run_lists_270_settings() {
    let table = ok(&["grid-search", "--dry-run"]);
    assert_eq!(table.lines().count(), 1 + 270);
    assert_eq!(table.lines().nth(1).unwrap(), "1,128,0.5,0.0002,NaN");
}

#[test]
fn nearest_words_from_text_embeddings() {
    let out = ok(&[
        "nearest-words",
        "--embeddings",
        p(&fixture("mini_embeddings.txt")),
        "--word",
        "war",
        "-k",
        "1",
    ]);
    let fields: Vec<&str> = out.trim().split('\t').collect();
    assert_eq!(&fields[..2], ["war", "warish"]);
}

#[test]
fn gbt_pipeline_with_learned_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("mini_corpus.jsonl");
    let emb = fixture("mini_embeddings.txt");
    let model = dir.path().join("gbt.json");
    let thr = dir.path().join("thr.json");
    let dump = dir.path().join("dump.csv");
    let preds = dir.path().join("p.jsonl");
    let small = ["--rounds", "5", "--max-depth", "2"];
    let mut args = vec![
        "train",
        "--kind",
        "gbt",
        "--train",
        p(&corpus),
        "--model",
        p(&model),
        "--embeddings",
        p(&emb),
    ];
    args.extend(small);
    ok(&args);
    // No strategy given: the probability model cannot choose a set by itself.
    let bare = genretag(&[
        "predict",
        "--model",
        p(&model),
        "--corpus",
        p(&corpus),
        "--out",
        p(&preds),
    ]);
    assert_eq!(bare.status.code(), Some(1));

    let mut args = vec![
        "fit-threshold",
        "--model",
        p(&model),
        "--corpus",
        p(&corpus),
        "--out",
        p(&thr),
        "--dump",
        p(&dump),
    ];
    args.extend(small);
    ok(&args);
    let csv = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 41);
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--threshold",
        p(&thr),
        "--corpus",
        p(&corpus),
        "--out",
        p(&preds),
    ]);
    assert_eq!(
        std::fs::read_to_string(&preds).unwrap().lines().count(),
        200
    );
}

#[test]
fn bnb_cannot_fit_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture("mini_corpus.jsonl");
    let model = dir.path().join("bnb.json");
    ok(&[
        "train",
        "--kind",
        "bnb",
        "--train",
        p(&corpus),
        "--model",
        p(&model),
    ]);
    let out = genretag(&[
        "fit-threshold",
        "--model",
        p(&model),
        "--corpus",
        p(&corpus),
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
