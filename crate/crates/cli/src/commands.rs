use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use genretag::corpus::{
    corpus_stats, filter_corpus, load_corpus, split_corpus, write_corpus, MovieRecord, SplitSpec,
};
use genretag::embed::EmbeddingTable;
use genretag::gbt::{GbtConfig, GbtEnsemble};
use genretag::gru::{self, GridAxes, GruConfig, Head};
use genretag::metrics::{format_table, genre_scores};
use genretag::multilabel::{
    decide, expand_k_pairs, fit_threshold_regressor, heuristic_baseline, write_threshold_samples,
    DecisionStrategy, ThresholdSample,
};
use genretag::nb::NbModel;
use genretag::textproc::{bow_counts, load_stopwords, TokenIds, Tokenizer, Vocabulary};
use genretag::{Error, GenreSet, Result, ScoreKind};
use serde::{Deserialize, Serialize};

use crate::model::{head_of, SavedModel, Scorer};
use crate::{
    BaselineArgs, Command, EvaluateArgs, FitThresholdArgs, GbtOpts, GridSearchArgs, GruOpts,
    HeadArg, ModelKind, NearestWordsArgs, PredictArgs, SplitArgs, StatsArgs, TokenizerOpts,
    TrainArgs,
};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Stats(a) => stats(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::FitThreshold(a) => fit_threshold(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Baseline(a) => baseline(a),
        Command::GridSearch(a) => grid_search(a),
        Command::NearestWords(a) => nearest_words(a),
    }
}

fn tokenizer(opts: &TokenizerOpts) -> Result<Tokenizer> {
    let t = Tokenizer::new(opts.tokenizer.into(), !opts.no_casefold);
    match &opts.stopwords {
        Some(p) => Ok(t.with_stopwords(load_stopwords(p)?)),
        None => Ok(t),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn maybe_filter(
    records: Vec<MovieRecord>,
    max_tokens: Option<usize>,
    tok: &Tokenizer,
) -> Result<Vec<MovieRecord>> {
    match max_tokens {
        Some(n) => {
            let kept = filter_corpus(&records, n, tok)?;
            log::info!(
                "kept {} of {} records with at most {n} tokens",
                kept.len(),
                records.len()
            );
            Ok(kept)
        }
        None => Ok(records),
    }
}

fn stats(a: StatsArgs) -> Result<()> {
    let tok = tokenizer(&a.tok)?;
    let records = maybe_filter(load_corpus(&a.corpus)?, a.max_tokens, &tok)?;
    let report = corpus_stats(&records, &tok);
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    emit(a.out.as_deref(), &text)
}

fn split(a: SplitArgs) -> Result<()> {
    let tok = tokenizer(&a.tok)?;
    let records = maybe_filter(load_corpus(&a.corpus)?, a.max_tokens, &tok)?;
    let spec = SplitSpec::new(a.train, a.validation, a.test, a.seed)?;
    let parts = split_corpus(&records, &spec)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (name, part) in [
        ("train", &parts.train),
        ("validation", &parts.validation),
        ("test", &parts.test),
    ] {
        write_corpus(&a.out_dir.join(format!("{name}.jsonl")), part)?;
        log::info!("{name}: {} records", part.len());
    }
    Ok(())
}

fn gbt_config(o: &GbtOpts) -> GbtConfig {
    GbtConfig {
        n_rounds: o.rounds,
        max_depth: o.max_depth,
        learning_rate: o.eta,
        lambda: o.lambda,
        gamma: o.gamma,
        min_child_hessian: o.min_child_hessian,
    }
}

fn gru_config(o: &GruOpts, head: Head, vocab_size: usize, seed: u64) -> GruConfig {
    GruConfig {
        n_layers: o.layers,
        hidden: o.hidden,
        embed_dim: o.embed_dim,
        vocab_size,
        cell: o.cell.into(),
        head,
        dropout_keep: o.keep,
        learning_rate: o.lr,
        seed,
        max_epochs: o.epochs,
        batch_size: o.batch_size,
    }
}

fn encoded(
    records: &[MovieRecord],
    tok: &Tokenizer,
    vocab: &Vocabulary,
) -> Vec<(TokenIds, GenreSet)> {
    records
        .iter()
        .map(|r| (vocab.encode(&tok.tokenize(&r.plot)), r.genres))
        .collect()
}

fn fit_vocab(records: &[MovieRecord], tok: &Tokenizer, o: &GruOpts) -> Result<Vocabulary> {
    let lists: Vec<Vec<String>> = records.iter().map(|r| tok.tokenize(&r.plot)).collect();
    let vocab = Vocabulary::fit(&lists, o.min_count, o.max_vocab)?;
    log::info!(
        "vocabulary: {} tokens, training UNK rate {:.4}",
        vocab.len(),
        vocab.unk_rate(&lists)
    );
    Ok(vocab)
}

fn train(a: TrainArgs) -> Result<()> {
    let tok = tokenizer(&a.tok)?;
    let records = load_corpus(&a.train)?;
    let scorer = match a.kind {
        ModelKind::Bnb | ModelKind::Mnb => {
            let data: Vec<_> = records
                .iter()
                .map(|r| (bow_counts(&tok.tokenize(&r.plot)), r.genres))
                .collect();
            let m = if a.kind == ModelKind::Bnb {
                NbModel::train_binary(&data, a.alpha)?
            } else {
                NbModel::train_multinomial(&data, a.alpha)?
            };
            Scorer::NaiveBayes(m)
        }
        ModelKind::Gbt => {
            let path = a
                .embeddings
                .clone()
                .ok_or_else(|| Error::validation("--embeddings is required for gbt"))?;
            let table = EmbeddingTable::load(&path)?;
            let mut rows = Vec::new();
            let mut sets = Vec::new();
            for r in &records {
                if let Some(v) = table.plot_vector(&tok.tokenize(&r.plot)) {
                    sets.push((rows.len(), r.genres));
                    rows.push(v);
                }
            }
            let dropped = records.len() - rows.len();
            if dropped > 0 {
                log::warn!("{dropped} records have no embedded tokens and were skipped");
            }
            let labels = expand_k_pairs(&sets)?;
            log::info!(
                "{} (plot, genre) pairs from {} plots",
                labels.len(),
                rows.len()
            );
            let (model, fit) =
                GbtEnsemble::fit_classifier_logged(&rows, &labels, &gbt_config(&a.gbt))?;
            if let (Some(first), Some(last)) = (fit.round_loss.first(), fit.round_loss.last()) {
                log::info!("training loss {first:.5} -> {last:.5}");
            }
            Scorer::Boosted {
                model,
                embeddings_path: path,
                embeddings: None,
            }
        }
        kind => {
            let head = head_of(kind).expect("recurrent kind");
            let vocab = fit_vocab(&records, &tok, &a.gru)?;
            let train_set = encoded(&records, &tok, &vocab);
            let val_set = match &a.validation {
                Some(p) => encoded(&load_corpus(p)?, &tok, &vocab),
                None => {
                    log::warn!("no validation corpus; selecting the epoch on training loss");
                    Vec::new()
                }
            };
            let config = gru_config(&a.gru, head, vocab.len(), a.seed);
            let (params, log) = gru::train(&config, &train_set, &val_set)?;
            log::info!(
                "best epoch {} with validation loss {:.5}",
                log.best_epoch,
                log.best_val_loss
            );
            if let Some(p) = &a.log {
                let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
                log.write_csv(f)?;
            }
            Scorer::Recurrent { params, vocab }
        }
    };
    SavedModel {
        kind: a.kind,
        tokenizer: tok,
        scorer,
    }
    .save(&a.model)
}

fn fit_threshold(a: FitThresholdArgs) -> Result<()> {
    let mut model = SavedModel::load(&a.model, a.embeddings.as_deref())?;
    model.prepare()?;
    let records = load_corpus(&a.corpus)?;
    let mut samples = Vec::with_capacity(records.len());
    for r in &records {
        let scores = model.scores(r)?;
        if scores.kind == ScoreKind::Sigmoid {
            return Err(Error::validation(
                "learned thresholds need probability or rank scores; use --cut for this model",
            ));
        }
        samples.push(ThresholdSample::new(scores, r.genres)?);
    }
    if let Some(p) = &a.dump {
        let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        write_threshold_samples(f, &samples)?;
    }
    let reg = fit_threshold_regressor(&samples, &gbt_config(&a.gbt))?;
    log::info!("threshold regressor fitted on {} samples", samples.len());
    let mut text = reg.to_json();
    text.push('\n');
    write_text(&a.out, &text)
}

#[derive(Serialize, Deserialize)]
struct Prediction {
    id: String,
    genres: GenreSet,
}

fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut text = String::new();
    for p in preds {
        text.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        text.push('\n');
    }
    write_text(path, &text)
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut model = SavedModel::load(&a.model, a.embeddings.as_deref())?;
    model.prepare()?;
    let strategy = if let Some(p) = &a.threshold {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Some(DecisionStrategy::LearnedThreshold {
            regressor: GbtEnsemble::from_json(&text)?,
        })
    } else if let Some(k) = a.top_k {
        Some(DecisionStrategy::TopK { k })
    } else {
        a.cut.map(|cut| DecisionStrategy::KBinary { cut })
    };
    let records = load_corpus(&a.corpus)?;
    let preds = records
        .iter()
        .map(|r| {
            let genres = match &strategy {
                Some(s) => decide(&model.scores(r)?, s)?,
                None => model.default_decision(r)?,
            };
            Ok(Prediction {
                id: r.id.clone(),
                genres,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!("predicted {} records", preds.len());
    write_predictions(&a.out, &preds)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let truth = load_corpus(&a.truth)?;
    let mut by_id: BTreeMap<String, GenreSet> = BTreeMap::new();
    for p in read_predictions(&a.predictions)? {
        if by_id.insert(p.id.clone(), p.genres).is_some() {
            return Err(Error::validation(format!(
                "duplicate prediction for `{}`",
                p.id
            )));
        }
    }
    let mut pairs = Vec::with_capacity(truth.len());
    for r in &truth {
        let p = by_id
            .remove(&r.id)
            .ok_or_else(|| Error::validation(format!("no prediction for `{}`", r.id)))?;
        pairs.push((p, r.genres));
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(Error::validation(format!(
            "prediction for unknown id `{extra}`"
        )));
    }
    let report = genre_scores(&pairs)?;
    if let Some(p) = &a.report {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        write_text(p, &text)?;
    }
    emit(None, &format_table(&[(&a.name, &report.aggregate)]))
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let train: Vec<GenreSet> = load_corpus(&a.train)?.iter().map(|r| r.genres).collect();
    let strategy = heuristic_baseline(a.top_k, &train)?;
    if let DecisionStrategy::Constant { genres } = &strategy {
        log::info!("baseline genres: {genres}");
    }
    let records = load_corpus(&a.corpus)?;
    let uniform = genretag::ScoreVector::new([0.0; genretag::N_GENRES], ScoreKind::Probability);
    let preds = records
        .iter()
        .map(|r| {
            Ok(Prediction {
                id: r.id.clone(),
                genres: decide(&uniform, &strategy)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_predictions(&a.out, &preds)
}

fn grid_search(a: GridSearchArgs) -> Result<()> {
    let head = match a.head {
        HeadArg::Binary => Head::Binary,
        HeadArg::Rank => Head::Rank,
        HeadArg::Multinomial => Head::Multinomial,
    };
    let axes = GridAxes {
        n_layers: a.grid_layers.clone(),
        hidden: a.grid_hidden.clone(),
        dropout_keep: a.grid_keep.clone(),
        learning_rate: a.grid_lr.clone(),
    };
    let (train_set, val_set, vocab_size) = if a.dry_run {
        (Vec::new(), Vec::new(), 2)
    } else {
        let tok = tokenizer(&a.tok)?;
        let path = a.train.as_ref().expect("clap requires --train");
        let records = load_corpus(path)?;
        let vocab = fit_vocab(&records, &tok, &a.gru)?;
        let val = match &a.validation {
            Some(p) => encoded(&load_corpus(p)?, &tok, &vocab),
            None => Vec::new(),
        };
        (encoded(&records, &tok, &vocab), val, vocab.len())
    };
    let base = gru_config(&a.gru, head, vocab_size, a.seed);
    let result = gru::grid_search(&axes, &base, head, &train_set, &val_set, a.dry_run)?;
    log::info!("{} configurations", result.table.len());
    if let Some(b) = &result.best {
        log::info!(
            "best: layers {} hidden {} keep {} lr {}",
            b.n_layers,
            b.hidden,
            b.dropout_keep,
            b.learning_rate
        );
    }
    let mut text = String::from("layers,hidden,keep,lr,val_loss\n");
    for (c, loss) in &result.table {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            c.n_layers, c.hidden, c.dropout_keep, c.learning_rate, loss
        ));
    }
    emit(a.out.as_deref(), &text)
}

fn nearest_words(a: NearestWordsArgs) -> Result<()> {
    let table = match (&a.embeddings, &a.model) {
        (Some(p), _) => EmbeddingTable::load(p)?,
        (None, Some(m)) => SavedModel::load(m, None)?.learned_embeddings()?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let mut text = String::new();
    for w in &a.word {
        for (n, d) in table.nearest_words(w, a.k)? {
            text.push_str(&format!("{w}\t{n}\t{d:.6}\n"));
        }
    }
    emit(None, &text)
}
