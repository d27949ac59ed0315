//! Gradient-boosted regression trees fitted with gradient and hessian
//! statistics (Newton boosting with an L2 leaf penalty).
//!
//! For the rows routed to a leaf with gradient sum `G` and hessian sum `H`
//! the optimal weight is `-G / (H + lambda)`, and splitting a node into
//! `L`/`R` improves the regularized objective by
//!
//! ```text
//! gain = 1/2 [ G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ) ] - gamma
//! ```
//!
//! Splits are found by exact enumeration over sorted feature values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Genre, ScoreKind, ScoreVector, N_GENRES};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_hessian: 1.0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::validation("learning_rate must be in (0, 1]"));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.min_child_hessian >= 0.0) {
            return Err(Error::validation(
                "lambda, gamma and min_child_hessian must be nonnegative",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        weight: f64,
    },
}

/// A binary tree; rows with `x[feature] < threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: Node,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    /// Heap-style id of the leaf `x` lands in (root 1, children 2i and 2i+1).
    pub fn leaf_id(&self, x: &[f64]) -> u64 {
        let mut node = &self.root;
        let mut id = 1u64;
        loop {
            match node {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*feature] < *threshold {
                        id *= 2;
                        node = left;
                    } else {
                        id = 2 * id + 1;
                        node = right;
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }

    fn max_feature(&self) -> Option<usize> {
        fn walk(n: &Node) -> Option<usize> {
            match n {
                Node::Leaf { .. } => None,
                Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } => [Some(*feature), walk(left), walk(right)]
                    .into_iter()
                    .flatten()
                    .max(),
            }
        }
        walk(&self.root)
    }
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows.first().map_or(0, Vec::len);
    for r in rows {
        if r.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: r.len(),
            });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("features must be finite"));
        }
    }
    Ok(d)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a GbtConfig,
}

impl TreeBuilder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.config.lambda;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn leaf(&self, idx: &[usize]) -> Node {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        let denom = h + self.config.lambda;
        let weight = if denom > 0.0 { -g / denom } else { 0.0 };
        Node::Leaf { weight }
    }

    fn best_split(&self, idx: &[usize]) -> Option<SplitChoice> {
        let g_total: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h_total: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        let parent = self.score(g_total, h_total);
        let d = self.rows[idx[0]].len();
        let mut best: Option<SplitChoice> = None;
        let mut order = idx.to_vec();
        for f in 0..d {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let lo = self.rows[i][f];
                let hi = self.rows[order[w + 1]][f];
                if lo == hi {
                    continue;
                }
                let (gr, hr) = (g_total - gl, h_total - hl);
                if hl < self.config.min_child_hessian || hr < self.config.min_child_hessian {
                    continue;
                }
                let gain =
                    0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent) - self.config.gamma;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold <= lo {
                        threshold = hi;
                    }
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&self, idx: &[usize], depth: usize) -> Node {
        if depth >= self.config.max_depth || idx.len() < 2 {
            return self.leaf(idx);
        }
        match self.best_split(idx) {
            None => self.leaf(idx),
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| self.rows[i][s.feature] < s.threshold);
                Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: Box::new(self.build(&l, depth + 1)),
                    right: Box::new(self.build(&r, depth + 1)),
                }
            }
        }
    }
}

/// Fits one tree to per-row gradients and hessians.
pub fn fit_tree(
    rows: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    config: &GbtConfig,
) -> Result<RegressionTree> {
    check_rows(rows)?;
    if rows.is_empty() {
        return Err(Error::validation("fit_tree needs at least one row"));
    }
    if grad.len() != rows.len() || hess.len() != rows.len() {
        return Err(Error::validation(
            "grad/hess length must match the row count",
        ));
    }
    if hess.iter().any(|h| *h < 0.0 || !h.is_finite()) || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::validation("hessians must be finite and nonnegative"));
    }
    let idx: Vec<usize> = (0..rows.len()).collect();
    let builder = TreeBuilder {
        rows,
        grad,
        hess,
        config,
    };
    Ok(RegressionTree {
        root: builder.build(&idx, 0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbtKind {
    SoftmaxClassifier,
    ScalarRegressor,
}

/// Boosted ensemble. `trees[round]` holds one tree per genre for the
/// classifier and a single tree for the regressor. Leaf weights are stored
/// unshrunk; prediction multiplies each tree by `config.learning_rate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub format_version: u32,
    pub kind: GbtKind,
    pub n_features: usize,
    pub base_score: f64,
    pub config: GbtConfig,
    pub trees: Vec<Vec<RegressionTree>>,
}

/// Training loss before the first round and after each round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitLog {
    pub round_loss: Vec<f64>,
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

impl GbtEnsemble {
    /// 20-way softmax boosting over (row, genre) training pairs.
    pub fn fit_classifier(
        rows: &[Vec<f64>],
        labels: &[(usize, Genre)],
        config: &GbtConfig,
    ) -> Result<GbtEnsemble> {
        Self::fit_classifier_logged(rows, labels, config).map(|(m, _)| m)
    }

    pub fn fit_classifier_logged(
        rows: &[Vec<f64>],
        labels: &[(usize, Genre)],
        config: &GbtConfig,
    ) -> Result<(GbtEnsemble, FitLog)> {
        config.validate()?;
        let d = check_rows(rows)?;
        if labels.is_empty() {
            return Err(Error::validation(
                "classifier needs at least one (row, genre) pair",
            ));
        }
        if let Some((r, _)) = labels.iter().find(|(r, _)| *r >= rows.len()) {
            return Err(Error::validation(format!(
                "label refers to missing row {r}"
            )));
        }
        let xs: Vec<Vec<f64>> = labels.iter().map(|(r, _)| rows[*r].clone()).collect();
        let n = xs.len();
        let mut margin = vec![[0.0f64; N_GENRES]; n];
        let mut probs = vec![[0.0f64; N_GENRES]; n];
        let mut trees = Vec::with_capacity(config.n_rounds);
        let mut log = FitLog::default();

        let update_probs = |margin: &[[f64; N_GENRES]], probs: &mut [[f64; N_GENRES]]| -> f64 {
            let mut loss = 0.0;
            for ((m, p), (_, g)) in margin.iter().zip(probs.iter_mut()).zip(labels) {
                *p = *m;
                softmax_in_place(p);
                loss -= p[g.index()].max(f64::MIN_POSITIVE).ln();
            }
            loss / n as f64
        };
        log.round_loss.push(update_probs(&margin, &mut probs));

        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..config.n_rounds {
            let mut round = Vec::with_capacity(N_GENRES);
            #[allow(clippy::needless_range_loop)]
            for c in 0..N_GENRES {
                for (i, (g, h)) in grad.iter_mut().zip(hess.iter_mut()).enumerate() {
                    let p = probs[i][c];
                    let y = if labels[i].1.index() == c { 1.0 } else { 0.0 };
                    *g = p - y;
                    *h = p * (1.0 - p);
                }
                round.push(fit_tree(&xs, &grad, &hess, config)?);
            }
            for (x, m) in xs.iter().zip(margin.iter_mut()) {
                for (c, t) in round.iter().enumerate() {
                    m[c] += config.learning_rate * t.predict(x);
                }
            }
            trees.push(round);
            log.round_loss.push(update_probs(&margin, &mut probs));
        }
        Ok((
            GbtEnsemble {
                format_version: FORMAT_VERSION,
                kind: GbtKind::SoftmaxClassifier,
                n_features: d,
                base_score: 0.0,
                config: *config,
                trees,
            },
            log,
        ))
    }

    /// Squared-error boosting starting from the target mean.
    pub fn fit_regressor(
        rows: &[Vec<f64>],
        targets: &[f64],
        config: &GbtConfig,
    ) -> Result<GbtEnsemble> {
        Self::fit_regressor_logged(rows, targets, config).map(|(m, _)| m)
    }

    pub fn fit_regressor_logged(
        rows: &[Vec<f64>],
        targets: &[f64],
        config: &GbtConfig,
    ) -> Result<(GbtEnsemble, FitLog)> {
        config.validate()?;
        let d = check_rows(rows)?;
        if rows.is_empty() {
            return Err(Error::validation("regressor needs at least one row"));
        }
        if targets.len() != rows.len() {
            return Err(Error::validation("one target per row is required"));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("targets must be finite"));
        }
        let n = rows.len();
        let base_score = targets.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base_score; n];
        let mse = |pred: &[f64]| {
            pred.iter()
                .zip(targets)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n as f64
        };
        let mut log = FitLog {
            round_loss: vec![mse(&pred)],
        };
        let hess = vec![1.0; n];
        let mut trees = Vec::with_capacity(config.n_rounds);
        for _ in 0..config.n_rounds {
            let grad: Vec<f64> = pred.iter().zip(targets).map(|(p, t)| p - t).collect();
            let tree = fit_tree(rows, &grad, &hess, config)?;
            for (p, x) in pred.iter_mut().zip(rows) {
                *p += config.learning_rate * tree.predict(x);
            }
            trees.push(vec![tree]);
            log.round_loss.push(mse(&pred));
        }
        Ok((
            GbtEnsemble {
                format_version: FORMAT_VERSION,
                kind: GbtKind::ScalarRegressor,
                n_features: d,
                base_score,
                config: *config,
                trees,
            },
            log,
        ))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ScoreVector> {
        if self.kind != GbtKind::SoftmaxClassifier {
            return Err(Error::validation("predict_proba needs a classifier"));
        }
        self.check_input(x)?;
        let mut margin = [self.base_score; N_GENRES];
        for round in &self.trees {
            for (m, t) in margin.iter_mut().zip(round) {
                *m += self.config.learning_rate * t.predict(x);
            }
        }
        softmax_in_place(&mut margin);
        Ok(ScoreVector::new(margin, ScoreKind::Probability))
    }

    pub fn predict_scalar(&self, x: &[f64]) -> Result<f64> {
        if self.kind != GbtKind::ScalarRegressor {
            return Err(Error::validation("predict_scalar needs a regressor"));
        }
        self.check_input(x)?;
        Ok(self.base_score
            + self
                .trees
                .iter()
                .map(|r| self.config.learning_rate * r[0].predict(x))
                .sum::<f64>())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<GbtEnsemble> {
        let m: GbtEnsemble =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("boosted trees: {e}")))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                m.format_version
            )));
        }
        let per_round = match m.kind {
            GbtKind::SoftmaxClassifier => N_GENRES,
            GbtKind::ScalarRegressor => 1,
        };
        for round in &m.trees {
            if round.len() != per_round {
                return Err(Error::Format(format!(
                    "expected {per_round} trees per round"
                )));
            }
            if round
                .iter()
                .any(|t| t.max_feature().is_some_and(|f| f >= m.n_features))
            {
                return Err(Error::Format("tree feature index out of range".into()));
            }
        }
        Ok(m)
    }
}
