//! Splits, experiment runs and ablation batches.

mod ablation;
mod config;
mod run;
mod split;
mod stages;

pub use ablation::{ablation_variants, run_ablation, AblationOutcome, AblationVariant, DEFAULT_TRAIN_SIZES};
pub use config::{AblationConfig, AblationKind, ExperimentConfig, ModelConfig, PathsConfig, SplitConfig};
pub use run::{
    corpus_hash, run_dir, run_experiment, run_id, ArtifactRef, RunOptions, RunRecord, RunStatus, SplitSizes,
    EVAL_FILE, RUN_FILE, SCORES_FILE,
};
pub use split::{split_dataset, training_subset, DatasetSplit};
pub use stages::{is_image_path, load_report_pages, prepare_corpus, prepare_report, ReportData, StageContext};
