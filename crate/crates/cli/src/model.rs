//! Saved models. Naive Bayes and boosted-tree models are JSON envelopes
//! holding the tokenizer next to the model; recurrent models use the binary
//! parameter container with the tokenizer and vocabulary in its header.

use std::path::{Path, PathBuf};

use genretag::corpus::MovieRecord;
use genretag::embed::EmbeddingTable;
use genretag::gbt::GbtEnsemble;
use genretag::gru::{
    forward, head_scores, is_param_container, read_params, write_params, GruParams, Head,
};
use genretag::multilabel::{decide, DecisionStrategy};
use genretag::nb::NbModel;
use genretag::textproc::{bow_counts, Tokenizer, Vocabulary};
use genretag::{Error, GenreSet, Result, ScoreVector};
use serde::{Deserialize, Serialize};

use crate::ModelKind;

const ENVELOPE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    kind: ModelKind,
    tokenizer: Tokenizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embeddings: Option<PathBuf>,
    model: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct RecurrentExtra {
    kind: ModelKind,
    tokenizer: Tokenizer,
    vocab: Vocabulary,
}

pub enum Scorer {
    NaiveBayes(NbModel),
    Boosted {
        model: GbtEnsemble,
        embeddings_path: PathBuf,
        embeddings: Option<EmbeddingTable>,
    },
    Recurrent {
        params: GruParams,
        vocab: Vocabulary,
    },
}

pub struct SavedModel {
    pub kind: ModelKind,
    pub tokenizer: Tokenizer,
    pub scorer: Scorer,
}

pub fn head_of(kind: ModelKind) -> Option<Head> {
    match kind {
        ModelKind::GruBinary => Some(Head::Binary),
        ModelKind::GruRank => Some(Head::Rank),
        ModelKind::GruMultinomial => Some(Head::Multinomial),
        _ => None,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl SavedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let model = match &self.scorer {
            Scorer::NaiveBayes(m) => serde_json::to_value(m),
            Scorer::Boosted { model, .. } => serde_json::to_value(model),
            Scorer::Recurrent { params, vocab } => {
                let extra = RecurrentExtra {
                    kind: self.kind,
                    tokenizer: self.tokenizer.clone(),
                    vocab: vocab.clone(),
                };
                let extra = serde_json::to_value(&extra).expect("header serializes");
                let mut buf = Vec::new();
                write_params(&mut buf, params, &extra)?;
                return write_file(path, &buf);
            }
        }
        .expect("model serializes");
        let embeddings = match &self.scorer {
            Scorer::Boosted {
                embeddings_path, ..
            } => Some(embeddings_path.clone()),
            _ => None,
        };
        let env = Envelope {
            format_version: ENVELOPE_VERSION,
            kind: self.kind,
            tokenizer: self.tokenizer.clone(),
            embeddings,
            model,
        };
        let mut text = serde_json::to_string(&env).expect("envelope serializes");
        text.push('\n');
        write_file(path, text.as_bytes())
    }

    /// Loads a model; `embeddings` overrides the path recorded in a boosted
    /// model and is ignored otherwise.
    pub fn load(path: &Path, embeddings: Option<&Path>) -> Result<SavedModel> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if is_param_container(&bytes) {
            let (params, extra) = read_params(bytes.as_slice())?;
            let extra: RecurrentExtra = serde_json::from_value(extra)
                .map_err(|e| Error::Format(format!("{}: model header: {e}", path.display())))?;
            if head_of(extra.kind) != Some(params.config.head) {
                return Err(Error::Format("model kind does not match its head".into()));
            }
            if extra.vocab.len() != params.config.vocab_size {
                return Err(Error::Format(
                    "vocabulary does not match the embedding table".into(),
                ));
            }
            return Ok(SavedModel {
                kind: extra.kind,
                tokenizer: extra.tokenizer,
                scorer: Scorer::Recurrent {
                    params,
                    vocab: extra.vocab,
                },
            });
        }
        let env: Envelope = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if env.format_version != ENVELOPE_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                env.format_version
            )));
        }
        let scorer = match env.kind {
            ModelKind::Bnb | ModelKind::Mnb => {
                Scorer::NaiveBayes(NbModel::from_json(&env.model.to_string())?)
            }
            ModelKind::Gbt => {
                let model = GbtEnsemble::from_json(&env.model.to_string())?;
                let embeddings_path = embeddings
                    .map(Path::to_path_buf)
                    .or(env.embeddings)
                    .ok_or_else(|| {
                        Error::Format("boosted model without an embedding file".into())
                    })?;
                Scorer::Boosted {
                    model,
                    embeddings_path,
                    embeddings: None,
                }
            }
            _ => {
                return Err(Error::Format(
                    "recurrent models use the parameter container".into(),
                ))
            }
        };
        Ok(SavedModel {
            kind: env.kind,
            tokenizer: env.tokenizer,
            scorer,
        })
    }

    /// Reads the embedding table a boosted model needs; no-op otherwise.
    pub fn prepare(&mut self) -> Result<()> {
        if let Scorer::Boosted {
            model,
            embeddings_path,
            embeddings,
        } = &mut self.scorer
        {
            if embeddings.is_none() {
                let table = EmbeddingTable::load(embeddings_path)?;
                if table.dim() != model.n_features {
                    return Err(Error::Dimension {
                        expected: model.n_features,
                        actual: table.dim(),
                    });
                }
                *embeddings = Some(table);
            }
        }
        Ok(())
    }

    pub fn scores(&self, record: &MovieRecord) -> Result<ScoreVector> {
        let tokens = self.tokenizer.tokenize(&record.plot);
        match &self.scorer {
            Scorer::NaiveBayes(m) => {
                let bow = bow_counts(&tokens);
                if self.kind == ModelKind::Bnb {
                    m.binary_posteriors(&bow)
                } else {
                    m.posterior(&bow)
                }
            }
            Scorer::Boosted {
                model, embeddings, ..
            } => {
                let table = embeddings
                    .as_ref()
                    .ok_or_else(|| Error::validation("embedding table not loaded"))?;
                let x = table
                    .plot_vector(&tokens)
                    .unwrap_or_else(|| vec![0.0; table.dim()]);
                model.predict_proba(&x)
            }
            Scorer::Recurrent { params, vocab } => {
                let trace = forward(params, &vocab.encode(&tokens), false, 0)?;
                Ok(head_scores(&trace.y, params.config.head))
            }
        }
    }

    /// The kind's own decision rule when no strategy is given on the command line.
    pub fn default_decision(&self, record: &MovieRecord) -> Result<GenreSet> {
        match (&self.scorer, self.kind) {
            (Scorer::NaiveBayes(m), ModelKind::Bnb) => {
                m.predict_binary(&bow_counts(&self.tokenizer.tokenize(&record.plot)))
            }
            (Scorer::NaiveBayes(m), _) => {
                m.predict_multinomial(&bow_counts(&self.tokenizer.tokenize(&record.plot)))
            }
            (_, ModelKind::GruBinary) => decide(
                &self.scores(record)?,
                &DecisionStrategy::KBinary { cut: 0.5 },
            ),
            _ => Err(Error::validation(
                "this model kind needs --threshold or --top-k to choose genres",
            )),
        }
    }

    /// Learned embedding table of a recurrent model, keyed by vocabulary token.
    pub fn learned_embeddings(&self) -> Result<EmbeddingTable> {
        let Scorer::Recurrent { params, vocab } = &self.scorer else {
            return Err(Error::validation(
                "only recurrent models carry a learned embedding table",
            ));
        };
        let rows = vocab
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), params.embedding_row(i as u32).to_vec()))
            .collect();
        EmbeddingTable::from_rows(rows)
    }
}
