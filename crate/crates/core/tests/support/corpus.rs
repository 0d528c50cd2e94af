//! Synthetic corpora and experiment configs for pipeline tests.

use scandoc::classifiers::{ClassifierKind, ClassifierSpec};
use scandoc::neural::{EncoderKind, NetworkConfig, TrainConfig};
use scandoc::pipeline::{ExperimentConfig, ModelConfig, PathsConfig, RunRecord, SplitConfig};
use scandoc::synth::{write_corpus, SynthConfig, MANIFEST_FILE};
use scandoc::Label;
use tempfile::TempDir;

pub struct Corpus {
    pub dir: TempDir,
    pub paths: PathsConfig,
}

pub fn corpus(config: &SynthConfig) -> Corpus {
    let dir = tempfile::tempdir().expect("tempdir");
    write_corpus(config, dir.path()).expect("corpus");
    let paths = PathsConfig {
        manifest: dir.path().join(MANIFEST_FILE),
        workdir: dir.path().join("work"),
        deid_lookup: None,
    };
    Corpus { dir, paths }
}

pub fn synth(n_reports: usize, noise_rate: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        n_reports,
        noise_rate,
        seed,
        ..Default::default()
    }
}

pub fn experiment(paths: &PathsConfig, model: ModelConfig) -> ExperimentConfig {
    ExperimentConfig {
        recipe: "gray".parse().expect("recipe"),
        model,
        split: SplitConfig::default(),
        paths: paths.clone(),
        ablation: None,
        missing_lookup: Default::default(),
    }
}

pub fn lr(paths: &PathsConfig) -> ExperimentConfig {
    experiment(paths, ModelConfig::classical(ClassifierSpec::new(ClassifierKind::Lr)))
}

/// Default-shaped mean-pool network.
pub fn mean_pool(paths: &PathsConfig, epochs: usize, learning_rate: f64) -> ExperimentConfig {
    let network = NetworkConfig::default();
    let train = TrainConfig {
        epochs,
        learning_rate,
        ..Default::default()
    };
    experiment(paths, ModelConfig::Neural { network, train })
}

/// A network small enough for multi-run tests.
pub fn tiny_neural(paths: &PathsConfig) -> ExperimentConfig {
    let mut network = NetworkConfig::default();
    network.sequence_branch.encoder = EncoderKind::MeanPool;
    network.sequence_branch.embed_dim = 8;
    network.sequence_branch.max_len = 21;
    network.structured_branch.width = 8;
    network.classifier.width = 8;
    let train = TrainConfig {
        epochs: 3,
        learning_rate: 3e-3,
        ..Default::default()
    };
    experiment(paths, ModelConfig::Neural { network, train })
}

pub fn doc_accuracy(record: &RunRecord, class: Label) -> f64 {
    record
        .metrics
        .as_ref()
        .expect("completed run")
        .classes
        .iter()
        .find(|c| c.class == class)
        .and_then(|c| c.document_accuracy.as_ref())
        .expect("document accuracy")
        .accuracy
}
