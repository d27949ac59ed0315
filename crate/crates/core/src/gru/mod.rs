//! Embedding + stacked GRU network over encoded plots with a 20-way output.
//!
//! Each layer runs the usual gated recurrence
//!
//! ```text
//! z_t = σ(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = σ(W_r x_t + U_r h_{t-1} + b_r)
//! c_t = tanh(W_c x_t + U_c (r_t ⊙ h_{t-1}) + b_c)
//! h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ (m ⊙ c_t)
//! ```
//!
//! where `m` is a per-sequence recurrent dropout mask (all ones at
//! inference). The layer-normalized variant (`Cell::Sngru`) replaces the
//! `tanh` with `gain ⊙ LayerNorm(·) + bias`. The last hidden state of the top
//! layer feeds `y = W h_N + b`, read by one of three heads.

mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{GenreSet, ScoreKind, ScoreVector, N_GENRES};

pub use network::{backward, forward, ForwardTrace, LayerTrace, StepTrace, LN_EPS};
pub use params::{is_param_container, read_params, write_params, Block, GruParams};
pub use train::{
    evaluate_loss, grid_search, train, Adam, EpochLog, GridAxes, GridResult, TrainLog,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Gru,
    Sngru,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Independent sigmoid per genre, mean binary cross-entropy.
    Binary,
    /// Raw outputs as rank values, pairwise exponential rank loss.
    Rank,
    /// Softmax, cross-entropy against `1/k` on each of the k true genres.
    Multinomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub cell: Cell,
    pub head: Head,
    pub dropout_keep: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub max_epochs: usize,
    pub batch_size: usize,
}

impl Default for GruConfig {
    fn default() -> Self {
        GruConfig {
            n_layers: 2,
            hidden: 128,
            embed_dim: 128,
            vocab_size: 2,
            cell: Cell::Sngru,
            head: Head::Multinomial,
            dropout_keep: 0.8,
            learning_rate: 0.01,
            seed: 0,
            max_epochs: 10,
            batch_size: 64,
        }
    }
}

impl GruConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 || self.hidden < 1 || self.embed_dim < 1 || self.vocab_size < 1 {
            return Err(Error::validation(
                "layers, hidden units, embedding size and vocabulary must be positive",
            ));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::validation("dropout keep rate must be in (0, 1]"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate must be nonnegative"));
        }
        if self.batch_size < 1 {
            return Err(Error::validation("batch size must be positive"));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_softmax(y: &[f64; N_GENRES]) -> [f64; N_GENRES] {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + y.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    y.map(|v| v - lse)
}

/// Converts network outputs into scores for the chosen head.
pub fn head_scores(y: &[f64; N_GENRES], head: Head) -> ScoreVector {
    match head {
        Head::Binary => ScoreVector::new(y.map(sigmoid), ScoreKind::Sigmoid),
        Head::Rank => ScoreVector::new(*y, ScoreKind::Rank),
        Head::Multinomial => ScoreVector::new(log_softmax(y).map(f64::exp), ScoreKind::Probability),
    }
}

fn check_truth(truth: GenreSet, head: Head) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::validation("loss needs a nonempty truth set"));
    }
    if head == Head::Rank && truth.is_full() {
        return Err(Error::validation(
            "rank loss is undefined when every genre is true",
        ));
    }
    Ok(())
}

fn expected_kind(head: Head) -> ScoreKind {
    match head {
        Head::Binary => ScoreKind::Sigmoid,
        Head::Rank => ScoreKind::Rank,
        Head::Multinomial => ScoreKind::Probability,
    }
}

/// Pairwise exponential rank loss averaged over (true, false) pairs.
pub fn pairwise_exp_loss(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::validation(
            "rank loss needs at least one true and one false label",
        ));
    }
    let sum: f64 = positives
        .iter()
        .flat_map(|p| negatives.iter().map(move |n| (-(p - n)).exp()))
        .sum();
    Ok(sum / (positives.len() * negatives.len()) as f64)
}

/// Head loss evaluated on already-transformed scores.
pub fn loss(scores: &ScoreVector, truth: GenreSet, head: Head) -> Result<f64> {
    check_truth(truth, head)?;
    if scores.kind != expected_kind(head) {
        return Err(Error::validation(format!(
            "{head:?} head expects {:?} scores",
            expected_kind(head)
        )));
    }
    let t = truth.indicator();
    Ok(match head {
        Head::Binary => {
            -scores
                .values
                .iter()
                .zip(&t)
                .map(|(s, t)| if *t > 0.0 { s.ln() } else { (1.0 - s).ln() })
                .sum::<f64>()
                / N_GENRES as f64
        }
        Head::Rank => {
            let pos: Vec<f64> = truth.iter().map(|g| scores.get(g)).collect();
            let neg: Vec<f64> = truth.complement().iter().map(|g| scores.get(g)).collect();
            pairwise_exp_loss(&pos, &neg)?
        }
        Head::Multinomial => {
            let k = truth.len() as f64;
            -truth.iter().map(|g| scores.get(g).ln()).sum::<f64>() / k
        }
    })
}

/// Head loss and its gradient with respect to the raw outputs `y`,
/// computed in a numerically stable way from `y` directly.
pub fn loss_and_grad(
    y: &[f64; N_GENRES],
    truth: GenreSet,
    head: Head,
) -> Result<(f64, [f64; N_GENRES])> {
    check_truth(truth, head)?;
    let t = truth.indicator();
    let mut dy = [0.0; N_GENRES];
    let n = N_GENRES as f64;
    let loss = match head {
        Head::Binary => {
            let mut l = 0.0;
            for c in 0..N_GENRES {
                l += softplus(y[c]) - t[c] * y[c];
                dy[c] = (sigmoid(y[c]) - t[c]) / n;
            }
            l / n
        }
        Head::Rank => {
            let pos: Vec<usize> = truth.iter().map(|g| g.index()).collect();
            let neg: Vec<usize> = truth.complement().iter().map(|g| g.index()).collect();
            let norm = (pos.len() * neg.len()) as f64;
            let mut l = 0.0;
            for &i in &pos {
                for &j in &neg {
                    let e = (-(y[i] - y[j])).exp();
                    l += e;
                    dy[i] -= e;
                    dy[j] += e;
                }
            }
            dy.iter_mut().for_each(|d| *d /= norm);
            l / norm
        }
        Head::Multinomial => {
            let k = truth.len() as f64;
            let lp = log_softmax(y);
            let mut l = 0.0;
            for c in 0..N_GENRES {
                let target = t[c] / k;
                l -= target * lp[c];
                dy[c] = lp[c].exp() - target;
            }
            l
        }
    };
    Ok((loss, dy))
}
