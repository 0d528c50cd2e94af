//! Dual-branch neural extractor on a small reverse-mode autodiff core.
//!
//! The structured branch (batch norm over the six position/value features,
//! then two ReLU layers with dropout) and the sequence branch (token
//! embeddings through a pluggable [`SequenceEncoder`]) are concatenated and
//! fed to a hidden classifier layer and a 3-way output.

mod adam;
mod cbow;
mod codec;
mod encoder;
mod network;
mod params;
mod tape;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, adam_update, AdamState};
pub use cbow::{cbow_loss_and_grad, pretrain_cbow, CbowConfig, CbowOutcome};
pub use codec::{TokenCodec, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};
pub use encoder::{lstm_cell, BiLstmEncoder, LstmParams, MeanPoolEncoder, SequenceEncoder};
pub use network::{Batch, ForwardPass, Mode, Network, BN_EPS, BN_MOMENTUM};
pub use params::{glorot, ParamId, ParamLayout, ParamStore};
pub use tape::{softmax_rows, Gradients, Tape, Var};
pub use train::{
    read_loss_csv, train_network, train_network_with, write_loss_csv, Checkpoint, EpochLoss, NeuralDataset,
    TrainOutcome, CHECKPOINT_FORMAT_VERSION,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    MeanPool,
    Bilstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Softmax,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructuredBranchConfig {
    pub batchnorm: bool,
    pub ffnn_layers: usize,
    pub width: usize,
    pub dropout: f64,
}

impl Default for StructuredBranchConfig {
    fn default() -> Self {
        Self {
            batchnorm: true,
            ffnn_layers: 2,
            width: 100,
            dropout: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceBranchConfig {
    pub encoder: EncoderKind,
    pub max_len: usize,
    pub embed_dim: usize,
    pub lstm_layers: usize,
    /// Per-direction hidden width.
    pub lstm_hidden: usize,
}

impl Default for SequenceBranchConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::MeanPool,
            max_len: 32,
            embed_dim: 100,
            lstm_layers: 2,
            lstm_hidden: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierHeadConfig {
    pub width: usize,
    pub dropout: f64,
    pub output: OutputActivation,
    pub classes: usize,
}

impl Default for ClassifierHeadConfig {
    fn default() -> Self {
        Self {
            width: 200,
            dropout: 0.2,
            output: OutputActivation::Softmax,
            classes: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub structured_branch: StructuredBranchConfig,
    pub sequence_branch: SequenceBranchConfig,
    pub classifier: ClassifierHeadConfig,
    pub include_structured: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            structured_branch: StructuredBranchConfig::default(),
            sequence_branch: SequenceBranchConfig::default(),
            classifier: ClassifierHeadConfig::default(),
            include_structured: true,
        }
    }
}

fn check_dropout(name: &str, p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("{name} dropout {p} outside [0, 1)")));
    }
    Ok(())
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.structured_branch;
        let q = &self.sequence_branch;
        let c = &self.classifier;
        let widths = [
            ("structured_branch.width", s.width),
            ("sequence_branch.embed_dim", q.embed_dim),
            ("classifier.width", c.width),
            ("classifier.classes", c.classes),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, w)| *w == 0) {
            return Err(Error::invalid(format!("{name} must be > 0")));
        }
        if q.encoder == EncoderKind::Bilstm && (q.lstm_layers == 0 || q.lstm_hidden == 0) {
            return Err(Error::invalid("BiLSTM needs at least one layer of nonzero width"));
        }
        if q.max_len < 21 {
            return Err(Error::invalid(format!(
                "max_len {} cannot hold a 21-word segment",
                q.max_len
            )));
        }
        if c.classes != 3 {
            return Err(Error::invalid("the output layer has exactly 3 classes"));
        }
        check_dropout("structured", s.dropout)?;
        check_dropout("classifier", c.dropout)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    /// CBOW pretraining of the embedding table on the training segments.
    pub pretrain: Option<CbowConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 2e-4,
            epochs: 100,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
            pretrain: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        Ok(())
    }
}
