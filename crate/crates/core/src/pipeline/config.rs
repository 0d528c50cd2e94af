use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierSpec;
use crate::deid::MissingLookupPolicy;
use crate::error::{Error, Result};
use crate::image_prep::PrepRecipe;
use crate::neural::{NetworkConfig, TrainConfig};

fn default_recipe() -> PrepRecipe {
    PrepRecipe::Gray
}

/// One experiment, as read from the `--config` JSON. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_recipe")]
    pub recipe: PrepRecipe,
    pub model: ModelConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub paths: PathsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationConfig>,
    /// Handling of reports absent from the de-identification lookup.
    #[serde(default)]
    pub missing_lookup: MissingLookupPolicy,
}

fn yes() -> bool {
    true
}

fn five() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Classical {
        spec: ClassifierSpec,
        /// Hyperparameter grid for cross-validation; `[spec]` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<ClassifierSpec>>,
        #[serde(default = "yes")]
        standardize: bool,
        #[serde(default = "five")]
        folds: usize,
    },
    Neural {
        #[serde(default)]
        network: NetworkConfig,
        #[serde(default)]
        train: TrainConfig,
    },
}

impl ModelConfig {
    pub fn classical(spec: ClassifierSpec) -> Self {
        ModelConfig::Classical {
            spec,
            grid: None,
            standardize: true,
            folds: 5,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelConfig::Classical { spec, .. } => spec.kind.name().to_string(),
            ModelConfig::Neural { network, .. } => match network.sequence_branch.encoder {
                crate::neural::EncoderKind::MeanPool => "neural_mean_pool".into(),
                crate::neural::EncoderKind::Bilstm => "neural_bilstm".into(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Train:validation ratio within the development set, e.g. `"6:1"`.
    pub val_ratio: String,
    pub seed: u64,
    /// Train on only this many training reports (validation and test fixed).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_subset: Option<usize>,
    /// Draw each training subset independently instead of as nested prefixes.
    pub independent_subsets: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            val_ratio: "6:1".into(),
            seed: 0,
            train_subset: None,
            independent_subsets: false,
        }
    }
}

impl SplitConfig {
    /// `(train, val)` weights of the development split.
    pub fn ratio(&self) -> Result<(f64, f64)> {
        let bad = || Error::invalid(format!("val_ratio `{}` is not of the form a:b", self.val_ratio));
        let (a, b) = self.val_ratio.split_once(':').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(bad());
        }
        Ok((a, b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    /// `lookup.csv`; defaults to the one next to the manifest if present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deid_lookup: Option<PathBuf>,
}

fn default_workdir() -> PathBuf {
    PathBuf::from("work")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    Preprocess,
    StructuredBranch,
    TrainSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub kind: AblationKind,
    /// Recipe names or subset sizes (`"all"` for the full set); defaults per kind.
    #[serde(default)]
    pub values: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked without touching the corpus.
    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return Err(Error::invalid(format!("test_fraction {} outside (0, 1)", s.test_fraction)));
        }
        s.ratio()?;
        if s.train_subset == Some(0) {
            return Err(Error::invalid("train_subset must be >= 1"));
        }
        match &self.model {
            ModelConfig::Classical { spec, grid, folds, .. } => {
                spec.validate()?;
                if let Some(g) = grid {
                    if g.is_empty() {
                        return Err(Error::invalid("empty hyperparameter grid"));
                    }
                    g.iter().try_for_each(ClassifierSpec::validate)?;
                }
                if *folds < 2 {
                    return Err(Error::invalid("cross-validation needs at least 2 folds"));
                }
            }
            ModelConfig::Neural { network, train } => {
                network.validate()?;
                train.validate()?;
                if let Some(cbow) = &train.pretrain {
                    if cbow.dim != network.sequence_branch.embed_dim {
                        return Err(Error::invalid(format!(
                            "CBOW dim {} differs from embed_dim {}",
                            cbow.dim, network.sequence_branch.embed_dim
                        )));
                    }
                }
            }
        }
        if let Some(a) = &self.ablation {
            match a.kind {
                AblationKind::Preprocess => {
                    for v in &a.values {
                        v.parse::<PrepRecipe>()?;
                    }
                }
                AblationKind::TrainSize => {
                    for v in &a.values {
                        if v != "all" && v.parse::<usize>().map_or(true, |n| n == 0) {
                            return Err(Error::invalid(format!("train size `{v}` is not a positive count or `all`")));
                        }
                    }
                }
                AblationKind::StructuredBranch => {
                    if !matches!(self.model, ModelConfig::Neural { .. }) {
                        return Err(Error::invalid("the structured-branch ablation needs a neural model"));
                    }
                }
            }
        }
        Ok(())
    }
}
