use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{GruParams, LayerBlocks};
use super::{loss_and_grad, Cell, Head};
use crate::error::{Error, Result};
use crate::labels::{GenreSet, N_GENRES};
use crate::textproc::TokenIds;

/// Variance floor inside the layer norm.
pub const LN_EPS: f64 = 1e-10;

/// Activations of one layer at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// Candidate after its nonlinearity, before the dropout mask.
    pub c: Vec<f64>,
    /// Layer-normalized pre-activation (layer-normalized cell only).
    pub n: Vec<f64>,
    pub inv_std: f64,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    /// Recurrent dropout mask applied to the candidate, fixed across steps.
    pub mask: Vec<f64>,
    pub steps: Vec<StepTrace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub ids: Vec<u32>,
    pub layers: Vec<LayerTrace>,
    pub y: [f64; N_GENRES],
}

impl ForwardTrace {
    pub fn last_hidden(&self) -> &[f64] {
        &self
            .layers
            .last()
            .expect("at least one layer")
            .steps
            .last()
            .expect("nonempty")
            .h
    }
}

/// out += M x, M row-major rows × cols.
fn matvec_add(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += Mᵀ v.
fn matvec_t_add(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = out.len();
    for (vi, row) in v.iter().zip(m.chunks_exact(cols)) {
        if *vi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += vi * a;
            }
        }
    }
}

/// G += a bᵀ.
fn outer_add(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (ai, row) in a.iter().zip(g.chunks_exact_mut(cols)) {
        if *ai != 0.0 {
            for (gij, bj) in row.iter_mut().zip(b) {
                *gij += ai * bj;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    super::sigmoid(x)
}

fn dropout_masks(
    n_layers: usize,
    hidden: usize,
    keep: f64,
    train_mode: bool,
    seed: u64,
) -> Vec<Vec<f64>> {
    if !train_mode || keep >= 1.0 {
        return vec![vec![1.0; hidden]; n_layers];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_layers)
        .map(|_| {
            (0..hidden)
                .map(|_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Runs the network over `ids`. In train mode with `dropout_keep < 1`, one
/// candidate mask per layer is drawn from `dropout_mask_seed`.
pub fn forward(
    params: &GruParams,
    ids: &TokenIds,
    train_mode: bool,
    dropout_mask_seed: u64,
) -> Result<ForwardTrace> {
    let cfg = &params.config;
    if ids.is_empty() {
        return Err(Error::validation(
            "cannot run the network on an empty sequence",
        ));
    }
    if let Some(bad) = ids.ids.iter().find(|&&i| i as usize >= cfg.vocab_size) {
        return Err(Error::validation(format!(
            "token id {bad} is outside the vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let h_dim = cfg.hidden;
    let masks = dropout_masks(
        cfg.n_layers,
        h_dim,
        cfg.dropout_keep,
        train_mode,
        dropout_mask_seed,
    );
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(cfg.n_layers);
    for (l, lb) in params.layers.iter().enumerate() {
        let mask = masks[l].clone();
        let mut steps: Vec<StepTrace> = Vec::with_capacity(ids.len());
        let zero = vec![0.0; h_dim];
        for t in 0..ids.len() {
            let x: &[f64] = if l == 0 {
                params.embedding_row(ids.ids[t])
            } else {
                &layers[l - 1].steps[t].h
            };
            let h_prev: &[f64] = if t == 0 { &zero } else { &steps[t - 1].h };
            let step = cell_step(params, lb, cfg.cell, x, h_prev, &mask);
            steps.push(step);
        }
        layers.push(LayerTrace { mask, steps });
    }
    let h_last = &layers
        .last()
        .expect("layers")
        .steps
        .last()
        .expect("steps")
        .h;
    let mut y: [f64; N_GENRES] = params.block(params.out_b).try_into().expect("20 biases");
    matvec_add(&mut y, params.block(params.out_w), h_last);
    Ok(ForwardTrace {
        ids: ids.ids.clone(),
        layers,
        y,
    })
}

fn cell_step(
    params: &GruParams,
    lb: &LayerBlocks,
    cell: Cell,
    x: &[f64],
    h_prev: &[f64],
    mask: &[f64],
) -> StepTrace {
    let h_dim = h_prev.len();
    let gate = |i: usize, hin: &[f64]| {
        let mut a = params.block(lb.b[i]).to_vec();
        matvec_add(&mut a, params.block(lb.w[i]), x);
        matvec_add(&mut a, params.block(lb.u[i]), hin);
        a
    };
    let z: Vec<f64> = gate(0, h_prev).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate(1, h_prev).into_iter().map(sigmoid).collect();
    let q: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let a = gate(2, &q);
    let (c, n, inv_std) = match (cell, lb.ln) {
        (Cell::Sngru, Some((gain, bias))) => {
            let mean = a.iter().sum::<f64>() / h_dim as f64;
            let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h_dim as f64;
            let inv_std = 1.0 / (var + LN_EPS).sqrt();
            let n: Vec<f64> = a.iter().map(|v| (v - mean) * inv_std).collect();
            let c: Vec<f64> = n
                .iter()
                .zip(params.block(gain))
                .zip(params.block(bias))
                .map(|((n, g), b)| g * n + b)
                .collect();
            (c, n, inv_std)
        }
        _ => (a.into_iter().map(f64::tanh).collect(), Vec::new(), 0.0),
    };
    let h = (0..h_dim)
        .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * mask[k] * c[k])
        .collect();
    StepTrace {
        z,
        r,
        c,
        n,
        inv_std,
        h,
    }
}

/// Exact gradients of the head loss through the unrolled network, reusing
/// the trace's dropout masks. Returns the loss and a parameter-shaped gradient.
pub fn backward(
    params: &GruParams,
    trace: &ForwardTrace,
    truth: GenreSet,
    head: Head,
) -> Result<(f64, GruParams)> {
    let (loss, dy) = loss_and_grad(&trace.y, truth, head)?;
    let mut grads = params.zeros_like();
    backward_from_output(params, trace, &dy, &mut grads);
    Ok((loss, grads))
}

/// Accumulates gradients for output gradient `dy` into `grads`.
pub(crate) fn backward_from_output(
    params: &GruParams,
    trace: &ForwardTrace,
    dy: &[f64; N_GENRES],
    grads: &mut GruParams,
) {
    let cfg = &params.config;
    let h_dim = cfg.hidden;
    let steps = trace.ids.len();
    outer_add(grads.block_mut(params.out_w), dy, trace.last_hidden());
    for (g, d) in grads.block_mut(params.out_b).iter_mut().zip(dy) {
        *g += d;
    }

    // Gradient flowing into each layer's outputs h_t from above.
    let mut dh_above: Vec<Vec<f64>> = vec![vec![0.0; h_dim]; steps];
    matvec_t_add(&mut dh_above[steps - 1], params.block(params.out_w), dy);

    let zero = vec![0.0; h_dim];
    for l in (0..cfg.n_layers).rev() {
        let lb = params.layers[l];
        let lt = &trace.layers[l];
        let in_dim = if l == 0 { cfg.embed_dim } else { h_dim };
        let mut dx_all: Vec<Vec<f64>> = vec![vec![0.0; in_dim]; steps];
        let mut dh_next = vec![0.0; h_dim];
        for t in (0..steps).rev() {
            let st = &lt.steps[t];
            let h_prev: &[f64] = if t == 0 { &zero } else { &lt.steps[t - 1].h };
            let x: &[f64] = if l == 0 {
                params.embedding_row(trace.ids[t])
            } else {
                &trace.layers[l - 1].steps[t].h
            };
            let dh: Vec<f64> = dh_above[t]
                .iter()
                .zip(&dh_next)
                .map(|(a, b)| a + b)
                .collect();

            let mut daz = vec![0.0; h_dim];
            let mut dc = vec![0.0; h_dim];
            let mut dh_prev = vec![0.0; h_dim];
            for k in 0..h_dim {
                let cm = lt.mask[k] * st.c[k];
                let dz = dh[k] * (cm - h_prev[k]);
                daz[k] = dz * st.z[k] * (1.0 - st.z[k]);
                dc[k] = dh[k] * st.z[k] * lt.mask[k];
                dh_prev[k] = dh[k] * (1.0 - st.z[k]);
            }
            let dac: Vec<f64> = match lb.ln {
                Some((gain, bias)) if cfg.cell == Cell::Sngru => {
                    let g = params.block(gain);
                    let dn: Vec<f64> = dc.iter().zip(g).map(|(d, g)| d * g).collect();
                    for ((gg, d), n) in grads.block_mut(gain).iter_mut().zip(&dc).zip(&st.n) {
                        *gg += d * n;
                    }
                    for (gb, d) in grads.block_mut(bias).iter_mut().zip(&dc) {
                        *gb += d;
                    }
                    let hf = h_dim as f64;
                    let mean_dn = dn.iter().sum::<f64>() / hf;
                    let mean_dn_n = dn.iter().zip(&st.n).map(|(a, b)| a * b).sum::<f64>() / hf;
                    (0..h_dim)
                        .map(|k| st.inv_std * (dn[k] - mean_dn - st.n[k] * mean_dn_n))
                        .collect()
                }
                _ => (0..h_dim)
                    .map(|k| dc[k] * (1.0 - st.c[k] * st.c[k]))
                    .collect(),
            };

            // Candidate path through q = r ⊙ h_prev.
            let mut dq = vec![0.0; h_dim];
            matvec_t_add(&mut dq, params.block(lb.u[2]), &dac);
            let q: Vec<f64> = st.r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
            let mut dar = vec![0.0; h_dim];
            for k in 0..h_dim {
                dh_prev[k] += dq[k] * st.r[k];
                dar[k] = dq[k] * h_prev[k] * st.r[k] * (1.0 - st.r[k]);
            }
            matvec_t_add(&mut dh_prev, params.block(lb.u[0]), &daz);
            matvec_t_add(&mut dh_prev, params.block(lb.u[1]), &dar);

            let da = [&daz, &dar, &dac];
            for (i, d_gate) in da.into_iter().enumerate() {
                outer_add(grads.block_mut(lb.w[i]), d_gate, x);
                for (g, d) in grads.block_mut(lb.b[i]).iter_mut().zip(d_gate) {
                    *g += d;
                }
                matvec_t_add(&mut dx_all[t], params.block(lb.w[i]), d_gate);
            }
            outer_add(grads.block_mut(lb.u[0]), &daz, h_prev);
            outer_add(grads.block_mut(lb.u[1]), &dar, h_prev);
            outer_add(grads.block_mut(lb.u[2]), &dac, &q);
            dh_next = dh_prev;
        }
        if l == 0 {
            let e = cfg.embed_dim;
            let base = grads.blocks[params.embedding].offset;
            for (t, dx) in dx_all.iter().enumerate() {
                let start = base + trace.ids[t] as usize * e;
                for (g, d) in grads.data[start..start + e].iter_mut().zip(dx) {
                    *g += d;
                }
            }
        } else {
            dh_above = dx_all;
        }
    }
}
