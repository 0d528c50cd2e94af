use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{Batch, Mode, Network};
use super::params::ParamLayout;
use super::{NetworkConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::util::{rng_for, sha256_hex};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Vectorised neural inputs: structured rows, padded token ids, class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralDataset {
    pub structured: Array2<f64>,
    pub tokens: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
}

impl NeuralDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid(format!("{name} set is empty")));
        }
        if self.tokens.len() != self.len() || self.structured.nrows() != self.len() {
            return Err(Error::invalid(format!(
                "{name} set: {} labels, {} token rows, {} structured rows",
                self.len(),
                self.tokens.len(),
                self.structured.nrows()
            )));
        }
        Ok(())
    }

    fn subset(&self, idx: &[usize]) -> NeuralDataset {
        NeuralDataset {
            structured: self.structured.select(Axis(0), idx),
            tokens: idx.iter().map(|&i| self.tokens[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// A parameter snapshot. The JSON file carries metadata and the layout; the
/// values live in a sibling little-endian `.bin` blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub network: NetworkConfig,
    pub vocab_size: usize,
    pub layout: Vec<ParamLayout>,
    pub rng_state: String,
    #[serde(default)]
    pub blob_sha256: String,
    #[serde(skip)]
    pub parameters: Vec<f64>,
}

impl Checkpoint {
    fn capture(net: &Network, epoch: usize, train_loss: f64, validation_loss: f64, rng: &ChaCha8Rng) -> Self {
        let (parameters, layout) = net.store.flatten();
        let mut ck = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            epoch,
            train_loss,
            validation_loss,
            network: net.config.clone(),
            vocab_size: net.vocab_size,
            layout,
            rng_state: format!("{}:{}", hex::encode(rng.get_seed()), rng.get_word_pos()),
            blob_sha256: String::new(),
            parameters,
        };
        ck.blob_sha256 = sha256_hex(&ck.blob());
        ck
    }

    pub fn blob_path(json_path: &Path) -> PathBuf {
        json_path.with_extension("bin")
    }

    fn blob(&self) -> Vec<u8> {
        self.parameters.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn save(&self, json_path: &Path) -> Result<()> {
        let blob = self.blob();
        let mut meta = self.clone();
        meta.blob_sha256 = sha256_hex(&blob);
        fs::write(Self::blob_path(json_path), &blob)?;
        let mut f = fs::File::create(json_path)?;
        serde_json::to_writer_pretty(&mut f, &meta)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(json_path: &Path) -> Result<Self> {
        let mut ck: Checkpoint = serde_json::from_reader(fs::File::open(json_path)?)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::parse(format!(
                "unsupported checkpoint format version {}",
                ck.format_version
            )));
        }
        let mut blob = Vec::new();
        fs::File::open(Self::blob_path(json_path))?.read_to_end(&mut blob)?;
        if !ck.blob_sha256.is_empty() && sha256_hex(&blob) != ck.blob_sha256 {
            return Err(Error::parse("checkpoint blob hash mismatch"));
        }
        if blob.len() % 8 != 0 {
            return Err(Error::parse("checkpoint blob length is not a multiple of 8"));
        }
        ck.parameters = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(ck)
    }

    /// Rebuilds the network (mean-pool or BiLSTM encoder) with these weights.
    pub fn restore(&self) -> Result<Network> {
        let mut net = Network::new(&self.network, self.vocab_size, None, 0)?;
        net.store.load_flat(&self.parameters, &self.layout)?;
        Ok(net)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<EpochLoss>,
    /// Training stopped early on a non-finite loss.
    pub diverged: bool,
}

fn mean_loss(net: &Network, data: &NeuralDataset) -> Result<f64> {
    let mut rng = rng_for(0, "eval");
    let mut total = 0.0;
    for start in (0..data.len()).step_by(256) {
        let idx: Vec<usize> = (start..(start + 256).min(data.len())).collect();
        let part = data.subset(&idx);
        let mut pass = net.forward(
            &Batch {
                structured: &part.structured,
                tokens: &part.tokens,
            },
            Mode::Infer,
            &mut rng,
        )?;
        let loss = net.loss(&mut pass, &part.labels)?;
        total += pass.tape.value(loss)[[0, 0]] * idx.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Builds a network and trains it; see [`train_network_with`].
pub fn train_network(
    config: &NetworkConfig,
    tconfig: &TrainConfig,
    vocab_size: usize,
    embeddings: Option<Array2<f64>>,
    train: &NeuralDataset,
    val: &NeuralDataset,
) -> Result<(Network, TrainOutcome)> {
    let mut net = Network::new(config, vocab_size, embeddings, tconfig.seed)?;
    let outcome = train_network_with(&mut net, tconfig, train, val, |_| Ok(()))?;
    Ok((net, outcome))
}

/// Mini-batch Adam with a seeded per-epoch shuffle. After every epoch the
/// validation cross-entropy is measured and a checkpoint handed to
/// `on_epoch`; on return `net` holds the checkpoint with the lowest
/// validation loss (earliest on ties).
pub fn train_network_with<F>(
    net: &mut Network,
    tconfig: &TrainConfig,
    train: &NeuralDataset,
    val: &NeuralDataset,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&Checkpoint) -> Result<()>,
{
    tconfig.validate()?;
    train.check("training")?;
    val.check("validation")?;
    let mut shuffle_rng = rng_for(tconfig.seed, "shuffle");
    let mut dropout_rng = rng_for(tconfig.seed, "dropout");
    let mut adam = AdamState::new(&net.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(tconfig.epochs);
    let mut best: Option<Checkpoint> = None;
    let mut diverged = false;

    for epoch in 1..=tconfig.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut failed = None;
        for chunk in order.chunks(tconfig.batch_size) {
            let batch = train.subset(chunk);
            let step = (|| -> Result<f64> {
                let mut pass = net.forward(
                    &Batch {
                        structured: &batch.structured,
                        tokens: &batch.tokens,
                    },
                    Mode::Train,
                    &mut dropout_rng,
                )?;
                let loss = net.loss(&mut pass, &batch.labels)?;
                let grads = net.backward(&pass, loss)?;
                adam_step(&mut net.store, &grads, &mut adam, tconfig);
                if let Some(stats) = &pass.bn_stats {
                    net.update_running_stats(stats);
                }
                Ok(pass.tape.value(loss)[[0, 0]])
            })();
            match step {
                Ok(l) => sum += l * chunk.len() as f64,
                Err(e @ Error::Numeric { .. }) => {
                    failed = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let val_loss = match failed {
            Some(_) => f64::NAN,
            None => mean_loss(net, val)?,
        };
        if !val_loss.is_finite() {
            diverged = true;
            log::warn!("training diverged at epoch {epoch}");
            if best.is_none() {
                return Err(failed.unwrap_or(Error::Numeric {
                    layer: "validation".into(),
                    message: format!("non-finite validation loss at epoch {epoch}"),
                }));
            }
            break;
        }
        let train_loss = sum / train.len() as f64;
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        let ck = Checkpoint::capture(net, epoch, train_loss, val_loss, &shuffle_rng);
        on_epoch(&ck)?;
        if best.as_ref().is_none_or(|b| val_loss < b.validation_loss) {
            best = Some(ck);
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
    }

    let best = match best {
        Some(b) => b,
        None => Checkpoint::capture(net, 0, f64::NAN, mean_loss(net, val)?, &shuffle_rng),
    };
    net.store.load_flat(&best.parameters, &best.layout)?;
    Ok(TrainOutcome {
        best,
        history,
        diverged,
    })
}

pub fn write_loss_csv<W: Write>(history: &[EpochLoss], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for h in history {
        w.write_record([h.epoch.to_string(), format!("{:?}", h.train_loss), format!("{:?}", h.val_loss)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_csv<R: Read>(reader: R) -> Result<Vec<EpochLoss>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
