use ndarray::{Array1, Array2};
use rand::Rng;

use super::encoder::{BiLstmEncoder, MeanPoolEncoder, SequenceEncoder};
use super::params::{gaussian, glorot, ParamId, ParamStore};
use super::tape::{softmax_rows, Tape, Var};
use super::{EncoderKind, NetworkConfig, OutputActivation};
use crate::error::{Error, Result};
use crate::features::STRUCTURED_DIM;
use crate::util::rng_for;

/// Small enough that train-mode outputs have unit variance to ~1e-9.
pub const BN_EPS: f64 = 1e-9;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    /// `batch × 6`; ignored when the structured branch is disabled.
    pub structured: &'a Array2<f64>,
    /// `batch` rows of exactly `max_len` token ids.
    pub tokens: &'a [Vec<usize>],
}

#[derive(Debug)]
pub struct ForwardPass {
    pub tape: Tape,
    pub logits: Var,
    /// Softmax rows, or independent sigmoid outputs.
    pub probs: Array2<f64>,
    /// Batch mean and variance seen by batch norm in train mode.
    pub bn_stats: Option<(Array1<f64>, Array1<f64>)>,
}

struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn register(store: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: store.add(&format!("{name}.w"), glorot(inp, out, rng), true),
            b: store.add(&format!("{name}.b"), Array2::zeros((1, out)), true),
        }
    }

    fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let z = tape.matmul(x, w)?;
        tape.add_row(z, b)
    }
}

struct BatchNormIds {
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

struct StructuredBranch {
    bn: Option<BatchNormIds>,
    layers: Vec<Dense>,
}

pub struct Network {
    pub config: NetworkConfig,
    pub store: ParamStore,
    pub vocab_size: usize,
    embedding: ParamId,
    structured: Option<StructuredBranch>,
    encoder: Box<dyn SequenceEncoder>,
    hidden: Dense,
    output: Dense,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("config", &self.config)
            .field("vocab_size", &self.vocab_size)
            .field("encoder", &self.encoder.name())
            .field("parameters", &self.store.n_values())
            .finish()
    }
}

fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.gen::<f64>() < p { 0.0 } else { keep })
}

impl Network {
    /// Builds and initialises a network; `embeddings` replaces the random
    /// embedding table (e.g. CBOW-pretrained).
    pub fn new(config: &NetworkConfig, vocab_size: usize, embeddings: Option<Array2<f64>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let encoder_kind = config.sequence_branch.encoder;
        Self::build(config, vocab_size, embeddings, seed, |store, rng| {
            let q = &config.sequence_branch;
            match encoder_kind {
                EncoderKind::MeanPool => Box::new(MeanPoolEncoder { dim: q.embed_dim }),
                EncoderKind::Bilstm => Box::new(BiLstmEncoder::register(
                    store,
                    q.embed_dim,
                    q.lstm_hidden,
                    q.lstm_layers,
                    rng,
                )),
            }
        })
    }

    /// Like [`Network::new`] but with a caller-supplied sequence encoder that
    /// registers its own parameters.
    pub fn with_encoder<F>(
        config: &NetworkConfig,
        vocab_size: usize,
        embeddings: Option<Array2<f64>>,
        seed: u64,
        make_encoder: F,
    ) -> Result<Self>
    where
        F: FnOnce(&mut ParamStore, &mut rand_chacha::ChaCha8Rng) -> Box<dyn SequenceEncoder>,
    {
        config.validate()?;
        Self::build(config, vocab_size, embeddings, seed, make_encoder)
    }

    fn build<F>(
        config: &NetworkConfig,
        vocab_size: usize,
        embeddings: Option<Array2<f64>>,
        seed: u64,
        make_encoder: F,
    ) -> Result<Self>
    where
        F: FnOnce(&mut ParamStore, &mut rand_chacha::ChaCha8Rng) -> Box<dyn SequenceEncoder>,
    {
        let mut rng = rng_for(seed, "init");
        let mut store = ParamStore::new();
        let dim = config.sequence_branch.embed_dim;
        let table = match embeddings {
            Some(e) if e.nrows() == vocab_size && e.ncols() == dim => e,
            Some(e) => {
                return Err(Error::invalid(format!(
                    "shape mismatch for `embeddings`: expected {vocab_size}x{dim}, got {:?}",
                    e.shape()
                )))
            }
            None => gaussian(vocab_size, dim, 0.01, &mut rng),
        };
        let embedding = store.add("embedding", table, true);

        let structured = if config.include_structured {
            let s = &config.structured_branch;
            let bn = s.batchnorm.then(|| BatchNormIds {
                gamma: store.add("bn.gamma", Array2::ones((1, STRUCTURED_DIM)), true),
                beta: store.add("bn.beta", Array2::zeros((1, STRUCTURED_DIM)), true),
                running_mean: store.add("bn.running_mean", Array2::zeros((1, STRUCTURED_DIM)), false),
                running_var: store.add("bn.running_var", Array2::ones((1, STRUCTURED_DIM)), false),
            });
            let layers = (0..s.ffnn_layers)
                .map(|l| {
                    let inp = if l == 0 { STRUCTURED_DIM } else { s.width };
                    Dense::register(&mut store, &format!("structured.{l}"), inp, s.width, &mut rng)
                })
                .collect();
            Some(StructuredBranch { bn, layers })
        } else {
            None
        };

        let encoder = make_encoder(&mut store, &mut rng);
        let struct_width = match &structured {
            Some(b) if !b.layers.is_empty() => config.structured_branch.width,
            Some(_) => STRUCTURED_DIM,
            None => 0,
        };
        let c = &config.classifier;
        let hidden = Dense::register(&mut store, "classifier.hidden", struct_width + encoder.output_dim(), c.width, &mut rng);
        let output = Dense::register(&mut store, "classifier.output", c.width, c.classes, &mut rng);
        Ok(Self {
            config: config.clone(),
            store,
            vocab_size,
            embedding,
            structured,
            encoder,
            hidden,
            output,
        })
    }

    pub fn encoder_name(&self) -> &str {
        self.encoder.name()
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    pub fn output_ids(&self) -> (ParamId, ParamId) {
        (self.output.w, self.output.b)
    }

    fn check_batch(&self, batch: &Batch<'_>) -> Result<()> {
        let n = batch.tokens.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let max_len = self.config.sequence_branch.max_len;
        if let Some((i, row)) = batch.tokens.iter().enumerate().find(|(_, r)| r.len() != max_len) {
            return Err(Error::invalid(format!(
                "shape mismatch for `tokens`: row {i} has {} ids, expected {max_len}",
                row.len()
            )));
        }
        if let Some(&bad) = batch.tokens.iter().flatten().find(|&&id| id >= self.vocab_size) {
            return Err(Error::invalid(format!(
                "shape mismatch for `tokens`: id {bad} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        if self.structured.is_some() {
            let s = batch.structured;
            if s.nrows() != n || s.ncols() != STRUCTURED_DIM {
                return Err(Error::invalid(format!(
                    "shape mismatch for `structured`: expected {n}x{STRUCTURED_DIM}, got {}x{}",
                    s.nrows(),
                    s.ncols()
                )));
            }
        }
        Ok(())
    }

    fn dropout(&self, tape: &mut Tape, x: Var, p: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
        if mode == Mode::Infer || p == 0.0 {
            return Ok(x);
        }
        let (r, c) = tape.value(x).dim();
        tape.mask(x, dropout_mask(r, c, p, rng))
    }

    pub fn forward(&self, batch: &Batch<'_>, mode: Mode, rng: &mut impl Rng) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let mut tape = Tape::new();
        let mut bn_stats = None;
        let mut parts = Vec::with_capacity(2);

        if let Some(branch) = &self.structured {
            tape.set_scope("structured");
            let mut x = tape.input(batch.structured.clone());
            if let Some(bn) = &branch.bn {
                tape.set_scope("structured.batchnorm");
                let gamma = tape.param(&self.store, bn.gamma);
                let beta = tape.param(&self.store, bn.beta);
                let xhat = match mode {
                    Mode::Train => {
                        let (v, mean, var) = tape.normalize(x, BN_EPS)?;
                        bn_stats = Some((mean, var));
                        v
                    }
                    Mode::Infer => {
                        let mean = self.store.get(bn.running_mean).value.row(0).to_owned();
                        let var = self.store.get(bn.running_var).value.row(0).to_owned();
                        let inv = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                        let shift = -&mean * &inv;
                        tape.affine_const(x, inv, &shift)?
                    }
                };
                let scaled = tape.mul_row(xhat, gamma)?;
                x = tape.add_row(scaled, beta)?;
            }
            for (l, layer) in branch.layers.iter().enumerate() {
                tape.set_scope(&format!("structured.{l}"));
                let z = layer.apply(&mut tape, &self.store, x)?;
                let a = tape.relu(z);
                x = self.dropout(&mut tape, a, self.config.structured_branch.dropout, mode, rng)?;
            }
            parts.push(x);
        }

        tape.set_scope("embedding");
        let table = tape.param(&self.store, self.embedding);
        let ids: Vec<usize> = batch.tokens.iter().flatten().copied().collect();
        let embedded = tape.gather(table, ids)?;
        tape.set_scope(self.encoder.name());
        let encoded = self.encoder.encode(&mut tape, &self.store, embedded, batch.tokens)?;
        parts.push(encoded);

        tape.set_scope("classifier.hidden");
        let joined = if parts.len() == 1 { parts[0] } else { tape.concat_cols(&parts)? };
        let z = self.hidden.apply(&mut tape, &self.store, joined)?;
        let a = tape.relu(z);
        let a = self.dropout(&mut tape, a, self.config.classifier.dropout, mode, rng)?;
        tape.set_scope("classifier.output");
        let logits = self.output.apply(&mut tape, &self.store, a)?;
        let probs = match self.config.classifier.output {
            OutputActivation::Softmax => softmax_rows(tape.value(logits)),
            OutputActivation::Sigmoid => tape.value(logits).mapv(super::tape::logistic),
        };
        Ok(ForwardPass {
            tape,
            logits,
            probs,
            bn_stats,
        })
    }

    /// Appends the training loss (categorical or per-output binary
    /// cross-entropy, by output activation) to a forward pass.
    pub fn loss(&self, pass: &mut ForwardPass, labels: &[usize]) -> Result<Var> {
        pass.tape.set_scope("loss");
        match self.config.classifier.output {
            OutputActivation::Softmax => pass.tape.softmax_ce(pass.logits, labels.to_vec()),
            OutputActivation::Sigmoid => pass.tape.sigmoid_bce(pass.logits, labels.to_vec()),
        }
    }

    /// Gradient of the loss with respect to every parameter (`None` where
    /// untouched or not trainable).
    pub fn backward(&self, pass: &ForwardPass, loss: Var) -> Result<Vec<Option<Array2<f64>>>> {
        let grads = pass.tape.backward(loss)?;
        let mut out = grads.param_grads(self.store.len());
        for (id, p) in self.store.iter() {
            if !p.trainable {
                out[id.0] = None;
            }
        }
        Ok(out)
    }

    /// Folds one batch's statistics into the running batch-norm estimates.
    pub fn update_running_stats(&mut self, stats: &(Array1<f64>, Array1<f64>)) {
        let Some(bn) = self.structured.as_ref().and_then(|b| b.bn.as_ref()) else { return };
        let (rm, rv) = (bn.running_mean, bn.running_var);
        let m = &mut self.store.get_mut(rm).value;
        for (r, b) in m.iter_mut().zip(&stats.0) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        let v = &mut self.store.get_mut(rv).value;
        for (r, b) in v.iter_mut().zip(&stats.1) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }

    /// Inference-mode probability triples; sigmoid outputs are renormalised
    /// to sum to one so both activations rank candidates the same way.
    pub fn predict_proba(&self, structured: &Array2<f64>, tokens: &[Vec<usize>]) -> Result<Vec<[f64; 3]>> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut rng = rng_for(0, "infer");
        for start in (0..tokens.len()).step_by(512) {
            let end = (start + 512).min(tokens.len());
            let s = if self.structured.is_some() {
                structured.slice(ndarray::s![start..end, ..]).to_owned()
            } else {
                Array2::zeros((end - start, STRUCTURED_DIM))
            };
            let pass = self.forward(
                &Batch {
                    structured: &s,
                    tokens: &tokens[start..end],
                },
                Mode::Infer,
                &mut rng,
            )?;
            for row in pass.probs.rows() {
                let total: f64 = row.sum();
                out.push([row[0] / total, row[1] / total, row[2] / total]);
            }
        }
        Ok(out)
    }
}
