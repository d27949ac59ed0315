use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, GruConfig};
use crate::error::{Error, Result};
use crate::labels::N_GENRES;

const MAGIC: &[u8; 8] = b"GTGRU\x00\x00\x01";
pub const FORMAT_VERSION: u32 = 1;

/// A named, row-major matrix (or vector, with `cols == 1`) inside the flat
/// parameter buffer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(skip)]
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Block indices for one recurrent layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LayerBlocks {
    pub w: [usize; 3],
    pub u: [usize; 3],
    pub b: [usize; 3],
    pub ln: Option<(usize, usize)>,
}

/// All learnable values in one flat buffer, laid out as: embedding, then per
/// layer `w_z w_r w_c u_z u_r u_c b_z b_r b_c` (plus `ln_gain ln_bias` for
/// the layer-normalized cell), then `out_w` (20 × hidden) and `out_b`.
/// Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub config: GruConfig,
    pub blocks: Vec<Block>,
    pub data: Vec<f64>,
    pub(crate) layers: Vec<LayerBlocks>,
    pub(crate) embedding: usize,
    pub(crate) out_w: usize,
    pub(crate) out_b: usize,
}

impl GruParams {
    pub fn zeros(config: &GruConfig) -> Result<GruParams> {
        config.validate()?;
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, rows: usize, cols: usize| {
            blocks.push(Block {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
            blocks.len() - 1
        };
        let h = config.hidden;
        let embedding = add("embedding".into(), config.vocab_size, config.embed_dim);
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let input = if l == 0 { config.embed_dim } else { h };
            let w = ["z", "r", "c"].map(|g| add(format!("layer{l}.w_{g}"), h, input));
            let u = ["z", "r", "c"].map(|g| add(format!("layer{l}.u_{g}"), h, h));
            let b = ["z", "r", "c"].map(|g| add(format!("layer{l}.b_{g}"), h, 1));
            let ln = (config.cell == Cell::Sngru).then(|| {
                (
                    add(format!("layer{l}.ln_gain"), h, 1),
                    add(format!("layer{l}.ln_bias"), h, 1),
                )
            });
            layers.push(LayerBlocks { w, u, b, ln });
        }
        let out_w = add("out_w".into(), N_GENRES, h);
        let out_b = add("out_b".into(), N_GENRES, 1);
        Ok(GruParams {
            config: *config,
            blocks,
            data: vec![0.0; offset],
            layers,
            embedding,
            out_w,
            out_b,
        })
    }

    /// Seeded initialization: embeddings uniform in ±0.05, weight matrices
    /// uniform in ±1/√fan_in, biases zero, layer-norm gains one.
    pub fn init(config: &GruConfig) -> Result<GruParams> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let blocks = p.blocks.clone();
        let mut fill = |p: &mut GruParams, idx: usize, scale: f64| {
            for v in &mut p.data[blocks[idx].range()] {
                *v = rng.gen_range(-scale..=scale);
            }
        };
        let (embedding, out_w) = (p.embedding, p.out_w);
        fill(&mut p, embedding, 0.05);
        for layer in p.layers.clone() {
            for i in 0..3 {
                let fan_w = blocks[layer.w[i]].cols as f64;
                fill(&mut p, layer.w[i], 1.0 / fan_w.sqrt());
                let fan_u = blocks[layer.u[i]].cols as f64;
                fill(&mut p, layer.u[i], 1.0 / fan_u.sqrt());
            }
            if let Some((gain, _)) = layer.ln {
                p.data[blocks[gain].range()].fill(1.0);
            }
        }
        fill(&mut p, out_w, 1.0 / (config.hidden as f64).sqrt());
        Ok(p)
    }

    pub fn zeros_like(&self) -> GruParams {
        GruParams {
            data: vec![0.0; self.data.len()],
            ..self.clone()
        }
    }

    pub fn block(&self, idx: usize) -> &[f64] {
        &self.data[self.blocks[idx].range()]
    }

    pub(crate) fn block_mut(&mut self, idx: usize) -> &mut [f64] {
        let r = self.blocks[idx].range();
        &mut self.data[r]
    }

    pub fn block_by_name(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .map(|i| self.block(i))
    }

    pub fn embedding_row(&self, id: u32) -> &[f64] {
        let e = self.config.embed_dim;
        let start = self.blocks[self.embedding].offset + id as usize * e;
        &self.data[start..start + e]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: GruConfig,
    blocks: Vec<Block>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Writes the container: 8-byte magic, u64 LE header length, JSON header
/// (format version, config, block shapes, `extra`), then every value as a
/// little-endian f64 in block order.
pub fn write_params<W: Write>(
    mut out: W,
    params: &GruParams,
    extra: &serde_json::Value,
) -> Result<()> {
    let header = Header {
        format_version: FORMAT_VERSION,
        config: params.config,
        blocks: params.blocks.clone(),
        extra: extra.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * params.data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in &params.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
        .map_err(|e| Error::io("<parameters>", e))
}

pub fn is_param_container(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}

pub fn read_params<R: Read>(mut input: R) -> Result<(GruParams, serde_json::Value)> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<parameters>", e))?;
    if !is_param_container(&bytes) || bytes.len() < 16 {
        return Err(Error::Format("not a GRU parameter file".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..body_start])
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    let mut params = GruParams::zeros(&header.config)?;
    let shapes = |bs: &[Block]| {
        bs.iter()
            .map(|b| (b.name.clone(), b.rows, b.cols))
            .collect::<Vec<_>>()
    };
    if shapes(&params.blocks) != shapes(&header.blocks) {
        return Err(Error::Format("block shapes do not match the config".into()));
    }
    let body = &bytes[body_start..];
    if body.len() != 8 * params.data.len() {
        return Err(Error::Format(format!(
            "expected {} values, found {} bytes",
            params.data.len(),
            body.len()
        )));
    }
    for (v, chunk) in params.data.iter_mut().zip(body.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok((params, header.extra))
}
