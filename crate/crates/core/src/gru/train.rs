use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward_from_output, forward};
use super::params::GruParams;
use super::{loss_and_grad, GruConfig, Head};
use crate::error::{Error, Result};
use crate::labels::GenreSet;
use crate::textproc::TokenIds;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned (1-based; 0 = initialization).
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.epochs {
            w.serialize(e)
                .map_err(|e| Error::validation(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("<training log>", e))
    }
}

/// Mean inference-mode loss over a labeled set.
pub fn evaluate_loss(params: &GruParams, data: &[(TokenIds, GenreSet)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty set"));
    }
    let mut total = 0.0;
    for (ids, truth) in data {
        let tr = forward(params, ids, false, 0)?;
        total += loss_and_grad(&tr.y, *truth, params.config.head)?.0;
    }
    Ok(total / data.len() as f64)
}

/// Mini-batches of equal-length sequences, in shuffled order.
fn make_batches(
    data: &[(TokenIds, GenreSet)],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| data[i].0.len());
    let mut batches: Vec<Vec<usize>> = Vec::new();
    for group in order.chunk_by(|&a, &b| data[a].0.len() == data[b].0.len()) {
        batches.extend(group.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Trains with Adam on shuffled equal-length mini-batches and returns the
/// parameters from the epoch with the lowest validation loss (earliest on
/// ties). An empty validation set falls back to the training set.
pub fn train(
    config: &GruConfig,
    train_set: &[(TokenIds, GenreSet)],
    validation: &[(TokenIds, GenreSet)],
) -> Result<(GruParams, TrainLog)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::validation(
            "GRU training needs a nonempty training set",
        ));
    }
    if let Some((_, t)) = train_set.iter().find(|(ids, _)| ids.is_empty()) {
        return Err(Error::validation(format!("empty sequence labeled {t}")));
    }
    let val = if validation.is_empty() {
        train_set
    } else {
        validation
    };
    let mut params = GruParams::init(config)?;
    let mut adam = Adam::new(params.data.len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_7a11);
    let start = Instant::now();

    let mut log = TrainLog {
        best_epoch: 0,
        best_val_loss: evaluate_loss(&params, val)?,
        ..TrainLog::default()
    };
    let mut best = params.clone();
    let mut grads = params.zeros_like();
    for epoch in 1..=config.max_epochs {
        let mut epoch_loss = 0.0;
        for batch in make_batches(train_set, config.batch_size, &mut rng) {
            grads.data.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in &batch {
                let (ids, truth) = &train_set[i];
                let trace = forward(&params, ids, true, rng.gen())?;
                let (loss, mut dy) = loss_and_grad(&trace.y, *truth, config.head)?;
                epoch_loss += loss;
                dy.iter_mut().for_each(|d| *d *= scale);
                backward_from_output(&params, &trace, &dy, &mut grads);
            }
            adam.step(&mut params.data, &grads.data);
        }
        if !params.is_finite() {
            return Err(Error::validation(format!(
                "training diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        let val_loss = evaluate_loss(&params, val)?;
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: train {:.5} val {:.5}",
            entry.train_loss,
            entry.val_loss
        );
        log.epochs.push(entry);
        if val_loss < log.best_val_loss
            || log.best_epoch == 0 && epoch == 1 && val_loss <= log.best_val_loss
        {
            log.best_epoch = epoch;
            log.best_val_loss = val_loss;
            best.data.copy_from_slice(&params.data);
        }
    }
    Ok((best, log))
}

/// Value lists for the four tuned hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub n_layers: Vec<usize>,
    pub hidden: Vec<usize>,
    pub dropout_keep: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

impl GridAxes {
    /// The published search grid: 3 × 2 × 5 × 9 = 270 settings.
    pub fn published() -> GridAxes {
        GridAxes {
            n_layers: vec![1, 2, 3],
            hidden: vec![128, 256],
            dropout_keep: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            learning_rate: vec![0.0002, 0.0005, 0.001, 0.003, 0.005, 0.008, 0.01, 0.02, 0.05],
        }
    }

    /// Row-major enumeration (layers outermost, learning rate innermost).
    pub fn configs(&self, base: &GruConfig) -> Vec<GruConfig> {
        let mut out = Vec::new();
        for &n_layers in &self.n_layers {
            for &hidden in &self.hidden {
                for &dropout_keep in &self.dropout_keep {
                    for &learning_rate in &self.learning_rate {
                        out.push(GruConfig {
                            n_layers,
                            hidden,
                            dropout_keep,
                            learning_rate,
                            ..*base
                        });
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n_layers.is_empty()
            || self.hidden.is_empty()
            || self.dropout_keep.is_empty()
            || self.learning_rate.is_empty()
        {
            return Err(Error::validation(
                "every grid axis needs at least one value",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    /// Best setting; `None` in dry-run mode.
    pub best: Option<GruConfig>,
    /// Every setting with its best validation loss (`NaN` in dry-run mode).
    pub table: Vec<(GruConfig, f64)>,
}

/// Trains every grid point with `head` and picks the lowest validation loss
/// (first in enumeration order on ties). `dry_run` only enumerates.
pub fn grid_search(
    axes: &GridAxes,
    base: &GruConfig,
    head: Head,
    train_set: &[(TokenIds, GenreSet)],
    validation: &[(TokenIds, GenreSet)],
    dry_run: bool,
) -> Result<GridResult> {
    axes.validate()?;
    let base = GruConfig { head, ..*base };
    let configs = axes.configs(&base);
    if dry_run {
        return Ok(GridResult {
            best: None,
            table: configs.into_iter().map(|c| (c, f64::NAN)).collect(),
        });
    }
    let mut table = Vec::with_capacity(configs.len());
    let mut best: Option<(GruConfig, f64)> = None;
    for (i, c) in configs.into_iter().enumerate() {
        let loss = match train(&c, train_set, validation) {
            Ok((_, log)) => log.best_val_loss,
            Err(e) => {
                log::warn!("grid point {i} failed: {e}");
                f64::INFINITY
            }
        };
        log::info!(
            "grid {i}: layers {} hidden {} keep {} lr {} -> {loss:.5}",
            c.n_layers,
            c.hidden,
            c.dropout_keep,
            c.learning_rate
        );
        if best.is_none_or(|(_, b)| loss < b) {
            best = Some((c, loss));
        }
        table.push((c, loss));
    }
    Ok(GridResult {
        best: best.map(|(c, _)| c),
        table,
    })
}
