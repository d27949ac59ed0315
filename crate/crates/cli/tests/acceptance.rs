//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! show up in `cargo test` output.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use genretag::gbt::{fit_tree, GbtConfig, GbtEnsemble, Node};
use genretag::gru::{
    self, backward, forward, head_scores, pairwise_exp_loss, Cell, GridAxes, GruConfig, GruParams,
    Head,
};
use genretag::metrics::{empirical_rank_loss, fscore, jaccard, misordered_fraction};
use genretag::multilabel::{
    decide, fit_threshold_regressor, threshold_error, threshold_target, DecisionStrategy,
    ThresholdSample,
};
use genretag::nb::NbModel;
use genretag::textproc::{bow_counts, TokenIds};
use genretag::{Genre, GenreSet, ScoreKind, ScoreVector, N_GENRES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn set(names: &[&str]) -> GenreSet {
    names
        .iter()
        .map(|n| Genre::from_name(n).expect("genre"))
        .collect()
}

fn metric_identities() -> Outcome {
    let f1 = fscore(0.610, 0.513);
    let f2 = fscore(0.607, 0.450);
    check!((f1 - 0.557).abs() <= 0.001, "fscore(0.610, 0.513) = {f1}");
    check!((f2 - 0.517).abs() <= 0.001, "fscore(0.607, 0.450) = {f2}");
    let j = jaccard(
        set(&["adventure", "thriller"]),
        set(&["adventure", "action"]),
    )
    .map_err(|e| e.to_string())?;
    check!(j == 1.0 / 3.0, "jaccard = {j}");
    Ok(format!("F = {f1:.4}, {f2:.4}; J = {j}"))
}

fn rank_scores(values: [f64; N_GENRES]) -> ScoreVector {
    ScoreVector::new(values, ScoreKind::Rank)
}

/// Brute force: a dense grid plus every gap midpoint and both rays.
fn oracle_min_error(values: &[f64; N_GENRES], truth: GenreSet) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let (lo, hi) = (sorted[0] - 1.0, sorted[sorted.len() - 1] + 1.0);
    let mut candidates: Vec<f64> = (0..10_000)
        .map(|i| lo + (hi - lo) * i as f64 / 9_999.0)
        .collect();
    candidates.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(lo);
    candidates.push(hi);
    candidates
        .iter()
        .map(|&t| threshold_error(values, truth, t))
        .min()
        .expect("candidates")
}

fn threshold_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000);
    for case in 0..1_000 {
        let coarse = rng.gen_bool(0.5);
        let values: [f64; N_GENRES] = std::array::from_fn(|_| {
            if coarse {
                f64::from(rng.gen_range(0..6u8)) / 5.0
            } else {
                rng.gen_range(-3.0..3.0)
            }
        });
        let full = (1u32 << N_GENRES) - 1;
        let truth = match case % 50 {
            0 => GenreSet::from_mask(full & !(1 << rng.gen_range(0..N_GENRES))).expect("mask"),
            _ => GenreSet::from_mask(rng.gen_range(1..full)).expect("mask"),
        };
        let t = threshold_target(&rank_scores(values), truth).map_err(|e| e.to_string())?;
        let best = oracle_min_error(&values, truth);
        check!(
            t.error == best,
            "case {case}: error {} vs oracle {best}",
            t.error
        );
        check!(
            threshold_error(&values, truth, t.threshold) == best,
            "case {case}: threshold {} does not attain the minimum",
            t.threshold
        );
        let (a, b) = t.segment;
        check!(
            a < t.threshold && t.threshold < b,
            "case {case}: {} outside ({a}, {b})",
            t.threshold
        );
        check!(
            values.iter().all(|v| *v <= a || *v >= b),
            "case {case}: segment ({a}, {b}) contains a score"
        );
    }
    let mut ex = [-10.0; N_GENRES];
    ex[..4].copy_from_slice(&[0.5, 0.3, 0.1, 0.1]);
    let first =
        threshold_target(&rank_scores(ex), set(&["drama", "comedy"])).map_err(|e| e.to_string())?;
    ex[..4].copy_from_slice(&[0.4, 0.1, 0.3, 0.2]);
    let second =
        threshold_target(&rank_scores(ex), set(&["drama", "comedy"])).map_err(|e| e.to_string())?;
    check!(
        first.threshold == 0.2,
        "worked example 1 gave {}",
        first.threshold
    );
    check!(
        second.threshold == 0.35,
        "worked example 2 gave {}",
        second.threshold
    );
    Ok("1000 random instances agree; worked examples 0.2 and 0.35".into())
}

fn gradient_check() -> Outcome {
    let ids = TokenIds {
        ids: vec![3, 7, 1, 7, 9],
    };
    let truth = set(&["comedy", "crime", "war"]);
    let mut worst: f64 = 0.0;
    for cell in [Cell::Gru, Cell::Sngru] {
        for head in [Head::Binary, Head::Rank, Head::Multinomial] {
            let cfg = GruConfig {
                n_layers: 2,
                hidden: 4,
                embed_dim: 4,
                vocab_size: 10,
                cell,
                head,
                dropout_keep: 1.0,
                seed: 21,
                ..GruConfig::default()
            };
            let mut p = GruParams::init(&cfg).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            p.data
                .iter_mut()
                .for_each(|v| *v += rng.gen_range(-0.3..0.3));
            let loss = |q: &GruParams| {
                let tr = forward(q, &ids, false, 0).expect("forward");
                backward(q, &tr, truth, head).expect("backward").0
            };
            let tr = forward(&p, &ids, false, 0).map_err(|e| e.to_string())?;
            let (_, grads) = backward(&p, &tr, truth, head).map_err(|e| e.to_string())?;
            for block in &p.blocks {
                for i in block.range() {
                    let h = 1e-5;
                    let mut plus = p.clone();
                    plus.data[i] += h;
                    let mut minus = p.clone();
                    minus.data[i] -= h;
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let analytic = grads.data[i];
                    let rel =
                        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
                    check!(
                        rel < 1e-4,
                        "{cell:?}/{head:?} {}[{}]: {analytic} vs {numeric}",
                        block.name,
                        i - block.offset
                    );
                    worst = worst.max(rel);
                }
            }
        }
    }
    Ok(format!(
        "max relative error {worst:.2e} over 6 cell/head pairs"
    ))
}

fn rank_loss_identities() -> Outcome {
    let truth = set(&["drama", "war"]);
    let all_equal = gru::loss(
        &head_scores(&[0.7; N_GENRES], Head::Rank),
        truth,
        Head::Rank,
    )
    .map_err(|e| e.to_string())?;
    check!(all_equal == 1.0, "all-equal loss {all_equal}");
    let two = pairwise_exp_loss(&[1.0], &[0.0]).map_err(|e| e.to_string())?;
    check!((two - (-1f64).exp()).abs() < 1e-12, "two-label loss {two}");
    let mut ordered = [0.0; N_GENRES];
    ordered[0] = 2.0;
    ordered[16] = 1.0;
    let perfect =
        empirical_rank_loss(&[(rank_scores(ordered), truth)]).map_err(|e| e.to_string())?;
    check!(perfect == 0.0, "ordered empirical loss {perfect}");
    let three = misordered_fraction(&[0.5], &[0.7, 0.1]).map_err(|e| e.to_string())?;
    check!(three == 0.5, "3-genre case {three}");
    Ok(format!("1.0, e^-1 = {two:.12}, 0, 0.5"))
}

fn cue_set(n: usize, seed: u64) -> Vec<(TokenIds, GenreSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let cue = i % 5;
            let len = rng.gen_range(3..6);
            let mut ids: Vec<u32> = (0..len).map(|_| rng.gen_range(5..15)).collect();
            ids.insert(rng.gen_range(0..=len), cue as u32);
            (
                TokenIds { ids },
                [Genre::from_index(cue * 3).expect("genre")]
                    .into_iter()
                    .collect(),
            )
        })
        .collect()
}

fn overfit_sanity() -> Outcome {
    let train_set = cue_set(20, 1);
    let copies = train_set.clone();
    let cfg = GruConfig {
        n_layers: 1,
        hidden: 16,
        embed_dim: 16,
        vocab_size: 15,
        cell: Cell::Sngru,
        head: Head::Multinomial,
        dropout_keep: 1.0,
        learning_rate: 0.01,
        seed: 4,
        max_epochs: 200,
        batch_size: 4,
    };
    let (params, log) = gru::train(&cfg, &train_set, &copies).map_err(|e| e.to_string())?;
    check!(
        log.best_val_loss < 0.05,
        "best validation loss {}",
        log.best_val_loss
    );
    let score = |ids: &TokenIds| {
        forward(&params, ids, false, 0).map(|t| head_scores(&t.y, Head::Multinomial))
    };
    let samples = train_set
        .iter()
        .map(|(ids, truth)| ThresholdSample::new(score(ids)?, *truth))
        .collect::<genretag::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let regressor =
        fit_threshold_regressor(&samples, &GbtConfig::default()).map_err(|e| e.to_string())?;
    let strategy = DecisionStrategy::LearnedThreshold { regressor };
    let mut total = 0.0;
    for (ids, truth) in &copies {
        let pred = decide(&score(ids).map_err(|e| e.to_string())?, &strategy)
            .map_err(|e| e.to_string())?;
        total += jaccard(pred, *truth).map_err(|e| e.to_string())?;
    }
    let mean = total / copies.len() as f64;
    check!(mean == 1.0, "mean Jaccard {mean}");
    Ok(format!(
        "validation loss {:.4} at epoch {}; Jaccard {mean}",
        log.best_val_loss, log.best_epoch
    ))
}

fn non_increasing(losses: &[f64]) -> bool {
    losses.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

fn gbt_correctness() -> Outcome {
    let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
    let cfg0 = GbtConfig {
        max_depth: 0,
        ..GbtConfig::default()
    };
    let leaf = fit_tree(&rows, &[-2.0; 3], &[1.0; 3], &cfg0).map_err(|e| e.to_string())?;
    check!(
        leaf.root == Node::Leaf { weight: 1.5 },
        "closed-form tree {:?}",
        leaf.root
    );

    let xs: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * i as f64 / 99.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    let cfg = GbtConfig {
        n_rounds: 50,
        max_depth: 3,
        ..GbtConfig::default()
    };
    let (model, fit) =
        GbtEnsemble::fit_regressor_logged(&rows, &ys, &cfg).map_err(|e| e.to_string())?;
    let mse = rows
        .iter()
        .zip(&ys)
        .map(|(r, y)| (model.predict_scalar(r).expect("predict") - y).powi(2))
        .sum::<f64>()
        / ys.len() as f64;
    let rmse = mse.sqrt();
    check!(rmse < 0.05 * 1.0, "x^2 RMSE {rmse}");
    check!(
        non_increasing(&fit.round_loss),
        "x^2 loss increased: {:?}",
        fit.round_loss
    );

    let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let labels: Vec<(usize, Genre)> = (0..30)
        .map(|i| {
            (
                i,
                Genre::from_index(usize::from(i >= 15) + 2 * usize::from(i % 7 == 3))
                    .expect("genre"),
            )
        })
        .collect();
    let (_, cls_fit) = GbtEnsemble::fit_classifier_logged(
        &pts,
        &labels,
        &GbtConfig {
            n_rounds: 20,
            max_depth: 2,
            ..GbtConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    check!(
        non_increasing(&cls_fit.round_loss),
        "classifier loss increased: {:?}",
        cls_fit.round_loss
    );
    Ok(format!(
        "leaf 1.5; x^2 RMSE {rmse:.4}; classifier loss {:.3} -> {:.3}",
        cls_fit.round_loss[0],
        cls_fit.round_loss.last().expect("rounds")
    ))
}

fn naive_bayes_oracle() -> Outcome {
    let train = vec![
        (bow_counts(&["gun", "chase", "gun"]), set(&["action"])),
        (
            bow_counts(&["love", "kiss", "chase"]),
            set(&["romance", "comedy"]),
        ),
        (bow_counts(&["joke", "love"]), set(&["comedy"])),
    ];
    let model = NbModel::train_multinomial(&train, 1.0).map_err(|e| e.to_string())?;
    // By hand, alpha 1 and 5 vocabulary words: for "love chase" the joint
    // scores are action 1/4·1/8·2/8, romance 1/4·2/8·2/8, comedy 1/2·3/10·2/10,
    // i.e. 25 : 50 : 96 out of 171.
    let post = model
        .posterior(&bow_counts(&["love", "chase"]))
        .map_err(|e| e.to_string())?;
    for (g, want) in [
        ("action", 25.0 / 171.0),
        ("romance", 50.0 / 171.0),
        ("comedy", 96.0 / 171.0),
    ] {
        let got = post.get(Genre::from_name(g).expect("genre"));
        check!((got - want).abs() < 1e-12, "{g}: {got} vs {want}");
    }
    let rest: f64 = Genre::all()
        .filter(|g| !set(&["action", "romance", "comedy"]).contains(*g))
        .map(|g| post.get(g))
        .sum();
    check!(rest == 0.0, "genres without training data got {rest}");
    let pred = model
        .predict_multinomial(&bow_counts(&["love", "chase"]))
        .map_err(|e| e.to_string())?;
    check!(pred == set(&["romance", "comedy"]), "prediction {pred}");
    let empty = model
        .predict_multinomial(&bow_counts::<&str>(&[]))
        .map_err(|e| e.to_string())?;
    check!(empty.is_empty(), "empty evidence predicted {empty}");
    Ok("posteriors 25/171, 50/171, 96/171; empty evidence -> {}".into())
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_genretag"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Settings for the recurrent model on the bundled corpus.
const GRU_BENCH: [&str; 18] = [
    "--layers",
    "1",
    "--hidden",
    "32",
    "--embed-dim",
    "16",
    "--lr",
    "0.01",
    "--keep",
    "1.0",
    "--epochs",
    "40",
    "--batch-size",
    "8",
    "--min-count",
    "1",
    "--seed",
    "1",
];
const THRESHOLD_GBT: [&str; 4] = ["--rounds", "30", "--max-depth", "3"];

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let (train, val, test) = (
        d.join("train.jsonl"),
        d.join("validation.jsonl"),
        d.join("test.jsonl"),
    );
    cli(&[
        "split",
        "--corpus",
        s(&fixture("mini_corpus.jsonl")),
        "--out-dir",
        s(d),
        "--seed",
        "7",
    ])?;

    let evaluate = |name: &str, preds: &Path| -> Result<(f64, String), String> {
        let report = d.join(format!("{name}.report.json"));
        let table = cli(&[
            "evaluate",
            "--truth",
            s(&test),
            "--predictions",
            s(preds),
            "--report",
            s(&report),
            "--name",
            name,
        ])?;
        let r: Value =
            serde_json::from_str(&std::fs::read_to_string(&report).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        Ok((
            r["aggregate"]["mean_jaccard"]
                .as_f64()
                .ok_or("missing Jaccard")?,
            table,
        ))
    };

    let base = d.join("top2.jsonl");
    cli(&[
        "baseline",
        "--top-k",
        "2",
        "--train",
        s(&train),
        "--corpus",
        s(&test),
        "--out",
        s(&base),
    ])?;
    let (j_base, table) = evaluate("top2", &base)?;
    let header: Vec<&str> = table
        .lines()
        .next()
        .unwrap_or("")
        .split("  ")
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .collect();
    check!(
        header
            == [
                "model",
                "hit rate",
                "Jaccard",
                "F-score",
                "precision",
                "recall"
            ],
        "table header {header:?}"
    );

    let mnb = d.join("mnb.json");
    let mnb_preds = d.join("mnb.jsonl");
    cli(&[
        "train",
        "--kind",
        "mnb",
        "--train",
        s(&train),
        "--model",
        s(&mnb),
    ])?;
    cli(&[
        "predict",
        "--model",
        s(&mnb),
        "--corpus",
        s(&test),
        "--out",
        s(&mnb_preds),
    ])?;
    let (j_mnb, _) = evaluate("mnb", &mnb_preds)?;

    let gru = d.join("gru.bin");
    let thr = d.join("gru.threshold.json");
    let gru_preds = d.join("gru.jsonl");
    let mut args = vec![
        "train",
        "--kind",
        "gru-multinomial",
        "--train",
        s(&train),
        "--validation",
        s(&val),
        "--model",
        s(&gru),
    ];
    args.extend(GRU_BENCH);
    cli(&args)?;
    let mut args = vec![
        "fit-threshold",
        "--model",
        s(&gru),
        "--corpus",
        s(&train),
        "--out",
        s(&thr),
    ];
    args.extend(THRESHOLD_GBT);
    cli(&args)?;
    cli(&[
        "predict",
        "--model",
        s(&gru),
        "--threshold",
        s(&thr),
        "--corpus",
        s(&test),
        "--out",
        s(&gru_preds),
    ])?;
    let (j_gru, _) = evaluate("gru", &gru_preds)?;

    let detail = format!("Jaccard top-2 {j_base:.4}, MNB {j_mnb:.4}, GRU {j_gru:.4}");
    check!(j_mnb >= j_base + 0.15, "MNB margin too small: {detail}");
    check!(j_gru >= j_base + 0.15, "GRU margin too small: {detail}");
    Ok(detail)
}

fn grid_enumeration() -> Outcome {
    let r = gru::grid_search(
        &GridAxes::published(),
        &GruConfig::default(),
        Head::Rank,
        &[],
        &[],
        true,
    )
    .map_err(|e| e.to_string())?;
    check!(
        r.table.len() == 270,
        "library dry run gave {}",
        r.table.len()
    );
    let rows = cli(&["grid-search", "--dry-run"])?.lines().count() - 1;
    check!(rows == 270, "CLI dry run gave {rows}");
    Ok("270 settings (library and CLI)".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = fixture("mini_corpus.jsonl");
    let emb = fixture("mini_embeddings.txt");
    let small_gru = [
        "--layers",
        "2",
        "--hidden",
        "8",
        "--embed-dim",
        "8",
        "--epochs",
        "2",
        "--keep",
        "0.7",
        "--seed",
        "5",
    ];
    let kinds = [
        "bnb",
        "mnb",
        "gbt",
        "gru-binary",
        "gru-rank",
        "gru-multinomial",
    ];
    for kind in kinds {
        let mut files = Vec::new();
        for run in 0..2 {
            let model = dir.path().join(format!("{kind}.{run}"));
            let mut args = vec![
                "train",
                "--kind",
                kind,
                "--train",
                s(&corpus),
                "--validation",
                s(&corpus),
                "--model",
                s(&model),
            ];
            match kind {
                "gbt" => args.extend([
                    "--embeddings",
                    s(&emb),
                    "--rounds",
                    "10",
                    "--max-depth",
                    "3",
                ]),
                k if k.starts_with("gru") => args.extend(small_gru),
                _ => {}
            }
            cli(&args)?;
            files.push(std::fs::read(&model).map_err(|e| e.to_string())?);
        }
        check!(files[0] == files[1], "{kind}: model files differ");
    }
    Ok(format!("byte-identical models for {}", kinds.join(", ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "metric identities",
            Duration::from_secs(1),
            metric_identities,
        ),
        (
            "threshold oracle equivalence",
            Duration::from_secs(5),
            threshold_oracle,
        ),
        (
            "gradient correctness",
            Duration::from_secs(30),
            gradient_check,
        ),
        (
            "rank-loss identities",
            Duration::from_secs(1),
            rank_loss_identities,
        ),
        ("overfit sanity", Duration::from_secs(60), overfit_sanity),
        ("GBT correctness", Duration::from_secs(30), gbt_correctness),
        (
            "naive Bayes oracle",
            Duration::from_secs(1),
            naive_bayes_oracle,
        ),
        (
            "end-to-end mini-benchmark",
            Duration::from_secs(300),
            end_to_end,
        ),
        ("grid enumeration", Duration::from_secs(1), grid_enumeration),
        ("determinism", Duration::from_secs(300), determinism),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > budget => Err(format!("took {took:.1?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({took:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({took:.2?})");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
