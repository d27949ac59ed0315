//! Movie records: ingestion, filtering, splitting and statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::seeded_hash;
use crate::labels::{Genre, GenreSet, N_GENRES};
use crate::textproc::Tokenizer;

pub use crate::labels::GENRE_NAMES;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MovieRecord {
    pub id: String,
    pub title: String,
    pub plot: String,
    pub genres: GenreSet,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    title: String,
    plot: String,
    genres: Vec<String>,
}

/// Reads a jsonl corpus file. See [`parse_corpus`].
pub fn load_corpus(path: &Path) -> Result<Vec<MovieRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses one JSON record per line. Blank lines are skipped, genres outside
/// the universe are dropped, and records left with no genre or an empty
/// plot are dropped. Duplicate ids are an error.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<MovieRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut dropped = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::validation(format!(
                "line {line_no}: duplicate id `{}`",
                raw.id
            )));
        }
        let genres: GenreSet = raw
            .genres
            .iter()
            .filter_map(|g| Genre::from_name(g))
            .collect();
        if genres.is_empty() || raw.plot.trim().is_empty() {
            dropped += 1;
            continue;
        }
        records.push(MovieRecord {
            id: raw.id,
            title: raw.title,
            plot: raw.plot,
            genres,
        });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} records with no known genre or empty plot");
    }
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[MovieRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Keeps records whose plot has at most `max_tokens` tokens and a nonempty genre set.
pub fn filter_corpus(
    records: &[MovieRecord],
    max_tokens: usize,
    tokenizer: &Tokenizer,
) -> Result<Vec<MovieRecord>> {
    if max_tokens < 1 {
        return Err(Error::validation("max_tokens must be at least 1"));
    }
    Ok(records
        .iter()
        .filter(|r| !r.genres.is_empty() && tokenizer.tokenize(&r.plot).len() <= max_tokens)
        .cloned()
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<SplitSpec> {
        let spec = SplitSpec {
            train,
            validation,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.validation, self.test];
        if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::validation("split fractions must be nonnegative"));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("split fractions must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<MovieRecord>,
    pub validation: Vec<MovieRecord>,
    pub test: Vec<MovieRecord>,
}

/// Deterministic partition. Records are ordered by a seeded hash of their
/// id; the lowest `floor(n·test)` go to test, the next `floor(n·validation)`
/// to validation and the remainder to train. Each output keeps input order.
pub fn split_corpus(records: &[MovieRecord], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = records.len();
    let n_test = (n as f64 * spec.test).floor() as usize;
    let n_val = (n as f64 * spec.validation).floor() as usize;

    let mut order: Vec<(u64, &str, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (seeded_hash(spec.seed, r.id.as_bytes()), r.id.as_str(), i))
        .collect();
    order.sort_unstable();

    // 0 = test, 1 = validation, 2 = train
    let mut bucket = vec![2u8; n];
    for (rank, &(_, _, i)) in order.iter().enumerate() {
        bucket[i] = if rank < n_test {
            0
        } else if rank < n_test + n_val {
            1
        } else {
            2
        };
    }
    let mut split = Split::default();
    for (r, b) in records.iter().zip(bucket) {
        match b {
            0 => split.test.push(r.clone()),
            1 => split.validation.push(r.clone()),
            _ => split.train.push(r.clone()),
        }
    }
    Ok(split)
}

pub const TOKEN_BINS: [&str; 5] = ["[0,50]", "(50,100]", "(100,150]", "(150,200]", "(200,inf)"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_records: usize,
    /// Fraction of movies tagged with each genre.
    pub genre_freq: BTreeMap<String, f64>,
    /// Number of movies per genre-set size.
    pub set_size_hist: BTreeMap<usize, usize>,
    pub mean_genres: f64,
    /// Number of plots per token-count bin.
    pub token_hist: BTreeMap<String, usize>,
    pub mean_tokens: f64,
    pub unique_genre_sets: usize,
}

fn token_bin(n: usize) -> usize {
    match n {
        0..=50 => 0,
        51..=100 => 1,
        101..=150 => 2,
        151..=200 => 3,
        _ => 4,
    }
}

pub fn corpus_stats(records: &[MovieRecord], tokenizer: &Tokenizer) -> StatsReport {
    let n = records.len();
    let mut genre_counts = [0usize; N_GENRES];
    let mut set_size_hist = BTreeMap::new();
    let mut token_counts = [0usize; TOKEN_BINS.len()];
    let mut total_genres = 0usize;
    let mut total_tokens = 0usize;
    let mut sets = BTreeSet::new();
    for r in records {
        for g in r.genres.iter() {
            genre_counts[g.index()] += 1;
        }
        *set_size_hist.entry(r.genres.len()).or_insert(0) += 1;
        total_genres += r.genres.len();
        let n_tok = tokenizer.tokenize(&r.plot).len();
        total_tokens += n_tok;
        token_counts[token_bin(n_tok)] += 1;
        sets.insert(r.genres.mask());
    }
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    StatsReport {
        n_records: n,
        genre_freq: Genre::all()
            .map(|g| (g.name().to_owned(), frac(genre_counts[g.index()])))
            .collect(),
        set_size_hist,
        mean_genres: frac(total_genres),
        token_hist: TOKEN_BINS
            .iter()
            .zip(token_counts)
            .map(|(b, c)| (b.to_string(), c))
            .collect(),
        mean_tokens: frac(total_tokens),
        unique_genre_sets: sets.len(),
    }
}
