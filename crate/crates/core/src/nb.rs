//! Naive Bayes genre classifiers over bag-of-words counts.
//!
//! Two flavours share one model type:
//!
//! - `BinarySet`: one two-class (genre vs. not-genre) multinomial model per
//!   genre. A genre is predicted when its positive-class posterior is above 0.5.
//! - `Multinomial`: a single 20-class model trained on the k-pair expansion
//!   of each movie. A genre is predicted when its posterior beats its prior.
//!
//! Conditionals use add-alpha smoothing over the vocabulary seen in training.
//! Tokens never seen in training are skipped at prediction time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Genre, GenreSet, ScoreKind, ScoreVector, N_GENRES};

pub type Bow = BTreeMap<String, u32>;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbKind {
    BinarySet,
    Multinomial,
}

/// Smoothed conditionals for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassConditional {
    /// log P(w|c) for tokens seen in this class.
    pub log_prob: BTreeMap<String, f64>,
    /// log P(w|c) for vocabulary tokens never seen in this class.
    pub log_unseen: f64,
}

impl ClassConditional {
    fn log_p(&self, token: &str) -> f64 {
        self.log_prob.get(token).copied().unwrap_or(self.log_unseen)
    }
}

/// Class layout: for `Multinomial`, class `c` is genre `c`. For `BinarySet`,
/// class `2g` is "genre g" and `2g + 1` is "not genre g".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub format_version: u32,
    pub kind: NbKind,
    pub alpha: f64,
    pub vocab_size: usize,
    pub priors: Vec<f64>,
    pub classes: Vec<ClassConditional>,
    #[serde(skip)]
    vocab: BTreeSet<String>,
}

fn fit_class(counts: &BTreeMap<&str, u64>, vocab_size: usize, alpha: f64) -> ClassConditional {
    let total: u64 = counts.values().sum();
    let denom = (total as f64 + alpha * vocab_size as f64).ln();
    ClassConditional {
        log_prob: counts
            .iter()
            .map(|(t, &c)| (t.to_string(), (c as f64 + alpha).ln() - denom))
            .collect(),
        log_unseen: alpha.ln() - denom,
    }
}

fn check_train(train: &[(Bow, GenreSet)], alpha: f64) -> Result<BTreeSet<String>> {
    if train.is_empty() {
        return Err(Error::validation(
            "Naive Bayes needs a nonempty training set",
        ));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation("smoothing alpha must be positive"));
    }
    Ok(train
        .iter()
        .flat_map(|(bow, _)| bow.keys().cloned())
        .collect())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl NbModel {
    pub fn train_binary(train: &[(Bow, GenreSet)], alpha: f64) -> Result<NbModel> {
        let vocab = check_train(train, alpha)?;
        let n_docs = train.len() as f64;
        let mut priors = Vec::with_capacity(2 * N_GENRES);
        let mut classes = Vec::with_capacity(2 * N_GENRES);
        for g in Genre::all() {
            let mut pos: BTreeMap<&str, u64> = BTreeMap::new();
            let mut neg: BTreeMap<&str, u64> = BTreeMap::new();
            let mut n_pos = 0usize;
            for (bow, genres) in train {
                let side = if genres.contains(g) {
                    n_pos += 1;
                    &mut pos
                } else {
                    &mut neg
                };
                for (t, &c) in bow {
                    *side.entry(t.as_str()).or_insert(0) += u64::from(c);
                }
            }
            let p = n_pos as f64 / n_docs;
            priors.push(p);
            priors.push(1.0 - p);
            classes.push(fit_class(&pos, vocab.len(), alpha));
            classes.push(fit_class(&neg, vocab.len(), alpha));
        }
        Ok(NbModel {
            format_version: FORMAT_VERSION,
            kind: NbKind::BinarySet,
            alpha,
            vocab_size: vocab.len(),
            priors,
            classes,
            vocab,
        })
    }

    pub fn train_multinomial(train: &[(Bow, GenreSet)], alpha: f64) -> Result<NbModel> {
        let vocab = check_train(train, alpha)?;
        let mut counts: Vec<BTreeMap<&str, u64>> = vec![BTreeMap::new(); N_GENRES];
        let mut pairs = [0usize; N_GENRES];
        for (bow, genres) in train {
            for g in genres.iter() {
                pairs[g.index()] += 1;
                for (t, &c) in bow {
                    *counts[g.index()].entry(t.as_str()).or_insert(0) += u64::from(c);
                }
            }
        }
        let n_pairs: usize = pairs.iter().sum();
        if n_pairs == 0 {
            return Err(Error::validation("training set has no genre labels"));
        }
        Ok(NbModel {
            format_version: FORMAT_VERSION,
            kind: NbKind::Multinomial,
            alpha,
            vocab_size: vocab.len(),
            priors: pairs.iter().map(|&p| p as f64 / n_pairs as f64).collect(),
            classes: counts
                .iter()
                .map(|c| fit_class(c, vocab.len(), alpha))
                .collect(),
            vocab,
        })
    }

    pub fn from_json(text: &str) -> Result<NbModel> {
        let mut model: NbModel =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("naive bayes: {e}")))?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                model.format_version
            )));
        }
        let n_classes = match model.kind {
            NbKind::BinarySet => 2 * N_GENRES,
            NbKind::Multinomial => N_GENRES,
        };
        if model.priors.len() != n_classes || model.classes.len() != n_classes {
            return Err(Error::Format(format!("expected {n_classes} classes")));
        }
        model.vocab = model
            .classes
            .iter()
            .flat_map(|c| c.log_prob.keys().cloned())
            .collect();
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    /// Unnormalized log joint log p(c) + Σ count(w)·log P(w|c) for one class.
    fn log_joint(&self, class: usize, bow: &Bow) -> f64 {
        let cond = &self.classes[class];
        let mut lp = self.priors[class].ln();
        for (t, &n) in bow {
            if self.vocab.contains(t) {
                lp += f64::from(n) * cond.log_p(t);
            }
        }
        lp
    }

    /// Multinomial posterior p(c|d), normalized in log space.
    pub fn posterior(&self, bow: &Bow) -> Result<ScoreVector> {
        if self.kind != NbKind::Multinomial {
            return Err(Error::validation("posterior needs a multinomial model"));
        }
        let lj: Vec<f64> = (0..N_GENRES).map(|c| self.log_joint(c, bow)).collect();
        let norm = log_sum_exp(&lj);
        let mut values = [0.0; N_GENRES];
        for (v, l) in values.iter_mut().zip(&lj) {
            *v = (l - norm).exp();
        }
        Ok(ScoreVector::new(values, ScoreKind::Probability))
    }

    /// Per-genre two-class posterior P(genre | d) of a binary-set model.
    pub fn binary_posteriors(&self, bow: &Bow) -> Result<ScoreVector> {
        if self.kind != NbKind::BinarySet {
            return Err(Error::validation(
                "binary posteriors need a binary-set model",
            ));
        }
        let mut values = [0.0; N_GENRES];
        for (g, v) in values.iter_mut().enumerate() {
            let pos = self.log_joint(2 * g, bow);
            let neg = self.log_joint(2 * g + 1, bow);
            *v = (pos - log_sum_exp(&[pos, neg])).exp();
        }
        Ok(ScoreVector::new(values, ScoreKind::Sigmoid))
    }

    /// Genres whose two-class posterior is strictly above 0.5.
    pub fn predict_binary(&self, bow: &Bow) -> Result<GenreSet> {
        let post = self.binary_posteriors(bow)?;
        Ok(Genre::all().filter(|g| post.get(*g) > 0.5).collect())
    }

    /// Genres whose posterior strictly exceeds their prior. Without any
    /// in-vocabulary token the posterior is the prior, so nothing is chosen.
    pub fn predict_multinomial(&self, bow: &Bow) -> Result<GenreSet> {
        let post = self.posterior(bow)?;
        if !bow.keys().any(|t| self.vocab.contains(t)) {
            return Ok(GenreSet::empty());
        }
        Ok(above_prior(&post.values, &self.priors))
    }
}

/// The "stronger than prior belief" rule: genres with posterior > prior.
pub fn above_prior(posterior: &[f64; N_GENRES], prior: &[f64]) -> GenreSet {
    Genre::all()
        .filter(|g| posterior[g.index()] > prior[g.index()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::bow_counts;
    use proptest::prelude::*;

    fn g(name: &str) -> Genre {
        Genre::from_name(name).unwrap()
    }

    fn set(names: &[&str]) -> GenreSet {
        names.iter().map(|n| g(n)).collect()
    }

    fn doc(text: &str, genres: &[&str]) -> (Bow, GenreSet) {
        let toks: Vec<&str> = text.split_whitespace().collect();
        (bow_counts(&toks), set(genres))
    }

    fn toy() -> Vec<(Bow, GenreSet)> {
        vec![
            doc("gun chase gun", &["action"]),
            doc("love kiss chase", &["romance", "comedy"]),
            doc("joke love", &["comedy"]),
        ]
    }

    /// Straight-line Bayes rule with raw products, written independently of
    /// the log-space implementation.
    fn oracle_posterior(train: &[(Bow, GenreSet)], query: &[&str], alpha: f64) -> [f64; N_GENRES] {
        let vocab: BTreeSet<&str> = train
            .iter()
            .flat_map(|(b, _)| b.keys().map(String::as_str))
            .collect();
        let v = vocab.len() as f64;
        let n_pairs: f64 = train.iter().map(|(_, s)| s.len() as f64).sum();
        let mut joint = [0.0; N_GENRES];
        for c in Genre::all() {
            let docs: Vec<&Bow> = train
                .iter()
                .filter(|(_, s)| s.contains(c))
                .map(|(b, _)| b)
                .collect();
            let prior = docs.len() as f64 / n_pairs;
            let total: f64 = docs
                .iter()
                .flat_map(|b| b.values())
                .map(|&n| n as f64)
                .sum();
            let mut p = prior;
            for w in query.iter().filter(|w| vocab.contains(*w)) {
                let count: f64 = docs.iter().map(|b| *b.get(*w).unwrap_or(&0) as f64).sum();
                p *= (count + alpha) / (total + alpha * v);
            }
            joint[c.index()] = p;
        }
        let z: f64 = joint.iter().sum();
        joint.map(|p| p / z)
    }

    #[test]
    fn multinomial_matches_oracle() {
        let train = toy();
        let model = NbModel::train_multinomial(&train, 1.0).unwrap();
        for q in [
            &["gun", "love"][..],
            &["chase"],
            &["joke", "joke", "kiss", "unseen"],
            &[],
        ] {
            let post = model.posterior(&bow_counts(q)).unwrap();
            let oracle = oracle_posterior(&train, q, 1.0);
            #[allow(clippy::needless_range_loop)]
            for c in 0..N_GENRES {
                assert!(
                    (post.values[c] - oracle[c]).abs() < 1e-12,
                    "{q:?} class {c}"
                );
            }
            post.validate().unwrap();
        }
    }

    #[test]
    fn multinomial_counts_each_genre() {
        let model = NbModel::train_multinomial(&toy(), 1.0).unwrap();
        let kiss = |genre: &str| model.classes[g(genre).index()].log_p("kiss");
        assert!(kiss("romance") > model.classes[g("romance").index()].log_unseen);
        assert_eq!(
            kiss("romance"),
            model.classes[g("romance").index()].log_prob["kiss"]
        );
        assert!(model.classes[g("comedy").index()]
            .log_prob
            .contains_key("kiss"));
        assert!((model.priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(model.priors[g("comedy").index()], 0.5);
    }

    #[test]
    fn empty_bow_gives_prior_and_empty_prediction() {
        let model = NbModel::train_multinomial(&toy(), 1.0).unwrap();
        let post = model.posterior(&Bow::new()).unwrap();
        for c in 0..N_GENRES {
            assert!((post.values[c] - model.priors[c]).abs() < 1e-15);
        }
        assert!(model.predict_multinomial(&Bow::new()).unwrap().is_empty());
    }

    #[test]
    fn uniform_corpus_uniform_posterior() {
        let train: Vec<_> = Genre::all()
            .map(|c| (bow_counts(&["same", "words"]), [c].into_iter().collect()))
            .collect();
        let model = NbModel::train_multinomial(&train, 1.0).unwrap();
        assert!(model.priors.iter().all(|p| (p - 0.05).abs() < 1e-15));
        let post = model.posterior(&bow_counts(&["same", "other"])).unwrap();
        assert!(post.values.iter().all(|p| (p - 0.05).abs() < 1e-12));
    }

    #[test]
    fn above_prior_rule() {
        let mut post = [0.0; N_GENRES];
        let mut prior = vec![0.05; N_GENRES];
        post[g("drama").index()] = 0.50;
        prior[g("drama").index()] = 0.46;
        assert_eq!(above_prior(&post, &prior), set(&["drama"]));
        // equal to prior is not "stronger than prior"
        assert!(above_prior(&[0.05; N_GENRES], &[0.05; N_GENRES]).is_empty());
    }

    #[test]
    fn distinctive_tokens_select_their_classes() {
        let train = vec![
            doc("balloon puppy picnic", &["comedy", "family"]),
            doc("balloon puppy", &["comedy", "family"]),
            doc("blood knife scream", &["horror"]),
            doc("knife police", &["crime"]),
            doc("court police", &["crime", "drama"]),
        ];
        let model = NbModel::train_multinomial(&train, 1.0).unwrap();
        assert_eq!(
            model
                .predict_multinomial(&bow_counts(&["balloon", "puppy"]))
                .unwrap(),
            set(&["comedy", "family"])
        );
        assert!(model
            .predict_multinomial(&bow_counts(&["scream"]))
            .unwrap()
            .contains(g("horror")));
    }

    #[test]
    fn binary_conditional_monotone() {
        let train = vec![
            doc("war soldier", &["drama"]),
            doc("war tears", &["drama", "war"]),
            doc("laugh joke", &["comedy"]),
        ];
        let m = NbModel::train_binary(&train, 1.0).unwrap();
        let d = g("drama").index();
        assert!(m.classes[2 * d].log_p("war") > m.classes[2 * d + 1].log_p("war"));
    }

    #[test]
    fn binary_one_document_laplace() {
        let train = vec![doc("a b a", &["western"])];
        let m = NbModel::train_binary(&train, 1.0).unwrap();
        let w = g("western").index();
        assert_eq!(m.priors[2 * w], 1.0);
        assert_eq!(m.priors[2 * w + 1], 0.0);
        // V = 2, doc length 3
        assert!((m.classes[2 * w].log_prob["a"].exp() - 3.0 / 5.0).abs() < 1e-15);
        assert!((m.classes[2 * w].log_prob["b"].exp() - 2.0 / 5.0).abs() < 1e-15);
        assert_eq!(
            m.predict_binary(&bow_counts(&["a"])).unwrap(),
            set(&["western"])
        );
    }

    #[test]
    fn binary_symmetric_corpus() {
        let train = vec![doc("x x y", &["drama"]), doc("y y x", &["comedy"])];
        let m = NbModel::train_binary(&train, 1.0).unwrap();
        let (d, c) = (g("drama").index(), g("comedy").index());
        for (a, b) in [("x", "y"), ("y", "x")] {
            assert!((m.classes[2 * d].log_p(a) - m.classes[2 * c].log_p(b)).abs() < 1e-12);
            assert!((m.classes[2 * d + 1].log_p(a) - m.classes[2 * c + 1].log_p(b)).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_decision_boundaries() {
        let train = vec![doc("x", &["drama"]), doc("y", &["comedy"])];
        let m = NbModel::train_binary(&train, 1.0).unwrap();
        // No evidence: drama and comedy each sit exactly at prior 0.5, others at 0.
        let post = m.binary_posteriors(&Bow::new()).unwrap();
        assert_eq!(post.get(g("drama")), 0.5);
        assert!(m.predict_binary(&Bow::new()).unwrap().is_empty());
        assert_eq!(
            m.predict_binary(&bow_counts(&["x"])).unwrap(),
            set(&["drama"])
        );
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(NbModel::train_binary(&[], 1.0).is_err());
        assert!(NbModel::train_multinomial(&[], 1.0).is_err());
        assert!(NbModel::train_multinomial(&toy(), 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        for m in [
            NbModel::train_multinomial(&toy(), 1.0).unwrap(),
            NbModel::train_binary(&toy(), 0.5).unwrap(),
        ] {
            let back = NbModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.vocab, m.vocab);
        }
        assert!(NbModel::from_json(r#"{"format_version":2}"#).is_err());
    }

    fn arb_train() -> impl Strategy<Value = Vec<(Bow, GenreSet)>> {
        prop::collection::vec(
            (prop::collection::vec("[a-f]", 1..12), 1u32..(1 << 20)),
            1..12,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .map(|(w, m)| (bow_counts(&w), GenreSet::from_mask(m).unwrap()))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn conditionals_normalized(train in arb_train()) {
            for m in [NbModel::train_multinomial(&train, 1.0).unwrap(), NbModel::train_binary(&train, 1.0).unwrap()] {
                for c in &m.classes {
                    let unseen = (m.vocab_size - c.log_prob.len()) as f64;
                    let total: f64 = c.log_prob.values().map(|l| l.exp()).sum::<f64>() + unseen * c.log_unseen.exp();
                    prop_assert!((total - 1.0).abs() < 1e-9);
                }
                for pair in m.priors.chunks(if m.kind == NbKind::BinarySet { 2 } else { N_GENRES }) {
                    prop_assert!((pair.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn posterior_finite_and_normalized(train in arb_train(), q in prop::collection::vec("[a-h]", 0..30)) {
            let m = NbModel::train_multinomial(&train, 1.0).unwrap();
            let post = m.posterior(&bow_counts(&q)).unwrap();
            prop_assert!(post.values.iter().all(|v| v.is_finite()));
            prop_assert!((post.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn posterior_order_invariant(train in arb_train(), mut q in prop::collection::vec("[a-f]", 0..30)) {
            let m = NbModel::train_multinomial(&train, 1.0).unwrap();
            let a = m.posterior(&bow_counts(&q)).unwrap();
            q.reverse();
            prop_assert_eq!(a, m.posterior(&bow_counts(&q)).unwrap());
        }

        // Doubling every count with alpha doubled scales each smoothed
        // conditional's numerator and denominator by 2.
        #[test]
        fn duplicated_corpus_with_scaled_alpha(train in arb_train(), q in prop::collection::vec("[a-f]", 0..20)) {
            let doubled: Vec<_> = train.iter().chain(train.iter()).cloned().collect();
            let a = NbModel::train_multinomial(&train, 1.0).unwrap().posterior(&bow_counts(&q)).unwrap();
            let b = NbModel::train_multinomial(&doubled, 2.0).unwrap().posterior(&bow_counts(&q)).unwrap();
            for c in 0..N_GENRES {
                prop_assert!((a.values[c] - b.values[c]).abs() < 1e-12);
            }
        }
    }
}
