//! Turning score vectors into genre sets.
//!
//! Besides the fixed strategies (cut-off on independent sigmoids, top-k) this
//! module implements the learned per-movie threshold: for each training
//! movie the threshold that best separates its true genres from the rest is
//! computed by brute force, and a boosted regressor learns to predict it
//! from the score vector.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::{GbtConfig, GbtEnsemble};
use crate::labels::{Genre, GenreSet, ScoreKind, ScoreVector, N_GENRES};

/// Minimizer of the per-movie threshold error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdTarget {
    pub threshold: f64,
    /// Number of true genres scoring `<= t` plus false genres scoring `>= t`.
    pub error: usize,
    /// Open segment `(lo, hi)` the threshold was taken from; rays use infinities.
    pub segment: (f64, f64),
}

/// Error count of threshold `t`: true genres with score `<= t` plus
/// other genres with score `>= t`.
pub fn threshold_error(values: &[f64; N_GENRES], truth: GenreSet, t: f64) -> usize {
    Genre::all()
        .filter(|g| {
            let s = values[g.index()];
            if truth.contains(*g) {
                s <= t
            } else {
                s >= t
            }
        })
        .count()
}

fn check_truth(truth: GenreSet) -> Result<()> {
    if truth.is_empty() || truth.is_full() {
        return Err(Error::validation(
            "threshold target needs a truth set that is neither empty nor the full universe",
        ));
    }
    Ok(())
}

/// Finds the error-minimizing segment and returns its midpoint.
///
/// The error is constant on each open interval between consecutive distinct
/// scores and on the two outer rays. Ties between minimal segments go to the
/// lowest one. An unbounded minimal ray is closed off at half the median gap
/// between consecutive distinct scores (0.5 when all scores are equal).
pub fn threshold_target(scores: &ScoreVector, truth: GenreSet) -> Result<ThresholdTarget> {
    check_truth(truth)?;
    if scores.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("scores must be finite"));
    }
    let mut distinct = scores.values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    // Sweep from the left: error on (-inf, s_0) counts every false genre.
    let mut error = truth.complement().len();
    let mut best = (error, f64::NEG_INFINITY, distinct[0]);
    for (i, &s) in distinct.iter().enumerate() {
        for g in Genre::all().filter(|g| scores.values[g.index()] == s) {
            if truth.contains(g) {
                error += 1;
            } else {
                error -= 1;
            }
        }
        let hi = distinct.get(i + 1).copied().unwrap_or(f64::INFINITY);
        if error < best.0 {
            best = (error, s, hi);
        }
    }
    let (error, lo, hi) = best;

    let half_gap = {
        let mut gaps: Vec<f64> = distinct.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() {
            0.5
        } else {
            gaps.sort_by(f64::total_cmp);
            let m = gaps.len() / 2;
            let median = if gaps.len() % 2 == 1 {
                gaps[m]
            } else {
                0.5 * (gaps[m - 1] + gaps[m])
            };
            0.5 * median
        }
    };
    let threshold = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (false, _) => hi - half_gap,
        (_, false) => lo + half_gap,
    };
    Ok(ThresholdTarget {
        threshold,
        error,
        segment: (lo, hi),
    })
}

pub fn compute_threshold_target(scores: &ScoreVector, truth: GenreSet) -> Result<f64> {
    threshold_target(scores, truth).map(|t| t.threshold)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSample {
    pub scores: ScoreVector,
    pub truth: GenreSet,
    pub target_threshold: f64,
}

impl ThresholdSample {
    pub fn new(scores: ScoreVector, truth: GenreSet) -> Result<ThresholdSample> {
        let target_threshold = compute_threshold_target(&scores, truth)?;
        Ok(ThresholdSample {
            scores,
            truth,
            target_threshold,
        })
    }
}

/// Fits the boosted regressor from score vectors to target thresholds.
pub fn fit_threshold_regressor(
    samples: &[ThresholdSample],
    config: &GbtConfig,
) -> Result<GbtEnsemble> {
    if samples.is_empty() {
        return Err(Error::validation(
            "threshold regressor needs at least one sample",
        ));
    }
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.scores.values.to_vec()).collect();
    let targets: Vec<f64> = samples.iter().map(|s| s.target_threshold).collect();
    GbtEnsemble::fit_regressor(&rows, &targets, config)
}

/// CSV audit dump: 20 score columns, 20 truth bits, the target threshold.
pub fn write_threshold_samples<W: Write>(out: W, samples: &[ThresholdSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::validation(format!("csv: {e}"));
    let mut header: Vec<String> = Genre::all()
        .map(|g| format!("score_{}", g.name()))
        .collect();
    header.extend(Genre::all().map(|g| format!("true_{}", g.name())));
    header.push("target_threshold".into());
    w.write_record(&header).map_err(to_err)?;
    for s in samples {
        let mut rec: Vec<String> = s.scores.values.iter().map(|v| v.to_string()).collect();
        rec.extend(Genre::all().map(|g| u8::from(s.truth.contains(g)).to_string()));
        rec.push(s.target_threshold.to_string());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<threshold dump>", e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DecisionStrategy {
    /// Independent cut-off on sigmoid scores: `{c : s_c > cut}`.
    KBinary { cut: f64 },
    /// The `k` highest scores; ties go to the lower genre index.
    TopK { k: usize },
    /// `{c : s_c > t(x)}` with `t(x)` predicted from the score vector.
    LearnedThreshold { regressor: GbtEnsemble },
    /// The same genre set for every movie.
    Constant { genres: GenreSet },
}

pub fn decide(scores: &ScoreVector, strategy: &DecisionStrategy) -> Result<GenreSet> {
    match strategy {
        DecisionStrategy::KBinary { cut } => {
            if scores.kind != ScoreKind::Sigmoid {
                return Err(Error::validation("k-binary decisions need sigmoid scores"));
            }
            if !(*cut > 0.0 && *cut < 1.0) {
                return Err(Error::validation("cut must lie in (0, 1)"));
            }
            Ok(Genre::all().filter(|g| scores.get(*g) > *cut).collect())
        }
        DecisionStrategy::TopK { k } => {
            if !(1..=N_GENRES).contains(k) {
                return Err(Error::validation("k must be in 1..=20"));
            }
            let mut order: Vec<Genre> = Genre::all().collect();
            order.sort_by(|a, b| scores.get(*b).total_cmp(&scores.get(*a)).then(a.cmp(b)));
            Ok(order.into_iter().take(*k).collect())
        }
        DecisionStrategy::LearnedThreshold { regressor } => {
            if scores.kind == ScoreKind::Sigmoid {
                return Err(Error::validation(
                    "learned thresholds apply to probability or rank scores",
                ));
            }
            let t = regressor.predict_scalar(&scores.values)?;
            Ok(Genre::all().filter(|g| scores.get(*g) > t).collect())
        }
        DecisionStrategy::Constant { genres } => Ok(*genres),
    }
}

/// Replicates each row once per true genre, genres in index order.
pub fn expand_k_pairs<X: Clone>(rows: &[(X, GenreSet)]) -> Result<Vec<(X, Genre)>> {
    let mut out = Vec::new();
    for (i, (x, set)) in rows.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::validation(format!("row {i} has an empty genre set")));
        }
        out.extend(set.iter().map(|g| (x.clone(), g)));
    }
    Ok(out)
}

/// Constant strategy predicting the `k` most frequent training genres
/// (frequency ties go to the lower genre index).
pub fn heuristic_baseline(k: usize, train: &[GenreSet]) -> Result<DecisionStrategy> {
    if !(1..=3).contains(&k) {
        return Err(Error::validation("baseline k must be 1, 2 or 3"));
    }
    let mut counts = [0usize; N_GENRES];
    for s in train {
        for g in s.iter() {
            counts[g.index()] += 1;
        }
    }
    let mut order: Vec<Genre> = Genre::all().collect();
    order.sort_by(|a, b| counts[b.index()].cmp(&counts[a.index()]).then(a.cmp(b)));
    Ok(DecisionStrategy::Constant {
        genres: order.into_iter().take(k).collect(),
    })
}
