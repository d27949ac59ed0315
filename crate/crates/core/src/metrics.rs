//! Evaluation of predicted genre sets against the truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Genre, GenreSet, ScoreKind, ScoreVector, N_GENRES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fscore(&self) -> f64 {
        fscore(self.precision(), self.recall())
    }

    fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// `num / den`, with 0/0 reported as 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn fscore(precision: f64, recall: f64) -> f64 {
    let sum = precision + recall;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / sum
    }
}

pub fn jaccard(pred: GenreSet, truth: GenreSet) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::validation("Jaccard needs a nonempty truth set"));
    }
    Ok(pred.intersection(truth).len() as f64 / pred.union(truth).len() as f64)
}

/// Fraction of movies with at least one correctly predicted genre.
pub fn hit_rate(pairs: &[(GenreSet, GenreSet)]) -> Result<f64> {
    check_pairs(pairs)?;
    let hits = pairs
        .iter()
        .filter(|(p, t)| !p.intersection(*t).is_empty())
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

fn check_pairs(pairs: &[(GenreSet, GenreSet)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::validation("evaluation needs at least one example"));
    }
    if pairs.iter().any(|(_, t)| t.is_empty()) {
        return Err(Error::validation("every truth set must be nonempty"));
    }
    Ok(())
}

/// Fractions of predictions per set size; only sizes that occur are listed.
pub fn set_size_histogram(preds: &[GenreSet]) -> Result<BTreeMap<usize, f64>> {
    if preds.is_empty() {
        return Err(Error::validation("histogram needs at least one prediction"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for p in preds {
        *counts.entry(p.len()).or_insert(0) += 1;
    }
    let n = preds.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

/// Fraction of (positive, negative) pairs with `positive <= negative`.
pub fn misordered_fraction(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::validation(
            "rank loss needs at least one true and one false label",
        ));
    }
    let bad = positives
        .iter()
        .map(|p| negatives.iter().filter(|n| p <= n).count())
        .sum::<usize>();
    Ok(bad as f64 / (positives.len() * negatives.len()) as f64)
}

/// Mean over examples of the fraction of (true, false) genre pairs whose
/// rank values are misordered (`r_true <= r_false`, ties included).
pub fn empirical_rank_loss(pairs: &[(ScoreVector, GenreSet)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("rank loss needs at least one example"));
    }
    let mut total = 0.0;
    for (scores, truth) in pairs {
        if scores.kind != ScoreKind::Rank {
            return Err(Error::validation("rank loss needs rank scores"));
        }
        let pos: Vec<f64> = truth.iter().map(|g| scores.get(g)).collect();
        let neg: Vec<f64> = truth.complement().iter().map(|g| scores.get(g)).collect();
        total += misordered_fraction(&pos, &neg)?;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenreReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_examples: usize,
    pub hit_rate: f64,
    pub mean_jaccard: f64,
    pub fscore: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_genre: BTreeMap<String, GenreReport>,
    pub aggregate: Aggregate,
    pub set_size_hist: BTreeMap<usize, f64>,
}

/// Full report: per-genre confusion, micro-averaged aggregates, hit rate,
/// per-example mean Jaccard and the prediction size histogram.
pub fn genre_scores(pairs: &[(GenreSet, GenreSet)]) -> Result<EvalReport> {
    check_pairs(pairs)?;
    let mut per = [ConfusionCounts::default(); N_GENRES];
    for (p, t) in pairs {
        for g in Genre::all() {
            let c = &mut per[g.index()];
            match (p.contains(g), t.contains(g)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    let mut micro = ConfusionCounts::default();
    per.iter().for_each(|c| micro.add(c));
    let mean_jaccard = pairs
        .iter()
        .map(|(p, t)| jaccard(*p, *t))
        .sum::<Result<f64>>()?
        / pairs.len() as f64;
    let preds: Vec<GenreSet> = pairs.iter().map(|(p, _)| *p).collect();
    Ok(EvalReport {
        per_genre: Genre::all()
            .map(|g| {
                let c = per[g.index()];
                (
                    g.name().to_owned(),
                    GenreReport {
                        counts: c,
                        accuracy: c.accuracy(),
                        precision: c.precision(),
                        recall: c.recall(),
                        fscore: c.fscore(),
                    },
                )
            })
            .collect(),
        aggregate: Aggregate {
            n_examples: pairs.len(),
            hit_rate: hit_rate(pairs)?,
            mean_jaccard,
            fscore: micro.fscore(),
            precision: micro.precision(),
            recall: micro.recall(),
            accuracy: micro.accuracy(),
        },
        set_size_hist: set_size_histogram(&preds)?,
    })
}

pub const TABLE_COLUMNS: [&str; 5] = ["hit rate", "Jaccard", "F-score", "precision", "recall"];

/// One header line plus one row per named report, columns in the order of
/// [`TABLE_COLUMNS`].
pub fn format_table(rows: &[(&str, &Aggregate)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}", "model");
    for c in TABLE_COLUMNS {
        let _ = write!(out, "  {c:>9}");
    }
    out.push('\n');
    for (name, a) in rows {
        let _ = write!(out, "{name:<width$}");
        for v in [a.hit_rate, a.mean_jaccard, a.fscore, a.precision, a.recall] {
            let _ = write!(out, "  {v:>9.4}");
        }
        out.push('\n');
    }
    out
}
