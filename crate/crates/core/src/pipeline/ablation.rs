//! Ablation batches: one child run per varied value, then pairwise tests.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AblationKind, ExperimentConfig, ModelConfig};
use super::run::{run_experiment, RunOptions, RunRecord};
use super::split::split_dataset;
use crate::error::{Error, Result};
use crate::eval::{adjust_comparisons, compare_auroc, compare_document_accuracy, write_comparisons_csv, Comparison};
use crate::image_prep::PrepRecipe;
use crate::segment::Label;
use crate::synth::read_manifest;
use crate::util::sha256_hex;

pub const DEFAULT_TRAIN_SIZES: [&str; 5] = ["10", "25", "50", "100", "all"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub label: String,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub kind: AblationKind,
    pub labels: Vec<String>,
    pub runs: Vec<RunRecord>,
    pub comparisons: Vec<Comparison>,
    pub dir: PathBuf,
}

/// Child configs of an ablation, each with the ablation block removed.
pub fn ablation_variants(config: &ExperimentConfig) -> Result<Vec<AblationVariant>> {
    config.validate()?;
    let ablation = config
        .ablation
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no ablation block"))?;
    let mut base = config.clone();
    base.ablation = None;
    let mut out = Vec::new();
    match ablation.kind {
        AblationKind::Preprocess => {
            let recipes: Vec<PrepRecipe> = if ablation.values.is_empty() {
                PrepRecipe::ALL.to_vec()
            } else {
                ablation.values.iter().map(|v| v.parse()).collect::<Result<_>>()?
            };
            for r in recipes {
                let mut c = base.clone();
                c.recipe = r;
                out.push(AblationVariant {
                    label: r.name().to_string(),
                    config: c,
                });
            }
        }
        AblationKind::StructuredBranch => {
            for on in [true, false] {
                let mut c = base.clone();
                if let ModelConfig::Neural { network, .. } = &mut c.model {
                    network.include_structured = on;
                }
                out.push(AblationVariant {
                    label: if on { "structured_on" } else { "structured_off" }.to_string(),
                    config: c,
                });
            }
        }
        AblationKind::TrainSize => {
            let values: Vec<String> = if ablation.values.is_empty() {
                DEFAULT_TRAIN_SIZES.iter().map(|s| s.to_string()).collect()
            } else {
                ablation.values.clone()
            };
            for v in values {
                let mut c = base.clone();
                c.split.train_subset = if v == "all" {
                    None
                } else {
                    Some(v.parse().map_err(|_| Error::invalid(format!("bad train size `{v}`")))?)
                };
                out.push(AblationVariant {
                    label: format!("train_{v}"),
                    config: c,
                });
            }
        }
    }
    Ok(out)
}

fn check_subset_sizes(config: &ExperimentConfig, variants: &[AblationVariant]) -> Result<()> {
    let entries = read_manifest(&config.paths.manifest)?;
    let ids: Vec<String> = entries.into_iter().map(|e| e.report_id).collect();
    let split = split_dataset(&ids, &config.split)?;
    for v in variants {
        if let Some(k) = v.config.split.train_subset {
            if k > split.train.len() {
                return Err(Error::invalid(format!(
                    "train size {k} exceeds the {} training reports",
                    split.train.len()
                )));
            }
        }
    }
    Ok(())
}

/// Runs every variant (up to `jobs` at a time; 0 = all cores), then tests
/// each pair on AUROC (DeLong, when the test instances coincide) and on
/// document accuracy (chi-square), Bonferroni-adjusted across the batch.
pub fn run_ablation(config: &ExperimentConfig, opts: &RunOptions, jobs: usize) -> Result<AblationOutcome> {
    let kind = config
        .ablation
        .as_ref()
        .map(|a| a.kind)
        .ok_or_else(|| Error::invalid("config has no ablation block"))?;
    let variants = ablation_variants(config)?;
    if kind == AblationKind::TrainSize {
        check_subset_sizes(config, &variants)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunRecord>> =
        pool.install(|| variants.par_iter().map(|v| run_experiment(&v.config, opts)).collect());
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = variants.iter().map(|v| v.label.clone()).collect();

    let scores = runs.iter().map(RunRecord::load_scores).collect::<Result<Vec<_>>>()?;
    let mut comparisons = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let pair = format!("{} vs {}", labels[i], labels[j]);
            for class in [Label::Ahi, Label::Sao2] {
                match compare_auroc(&pair, class, &scores[i], &scores[j]) {
                    Ok(c) => comparisons.push(c),
                    Err(e) => log::info!("{pair}: AUROC test skipped ({e})"),
                }
                let acc = |r: &RunRecord| {
                    r.metrics
                        .as_ref()
                        .and_then(|m| m.classes.iter().find(|c| c.class == class))
                        .and_then(|c| c.document_accuracy)
                };
                if let (Some(a), Some(b)) = (acc(&runs[i]), acc(&runs[j])) {
                    match compare_document_accuracy(&pair, class, &a, &b) {
                        Ok(c) => comparisons.push(c),
                        Err(e) => log::info!("{pair}: accuracy test skipped ({e})"),
                    }
                }
            }
        }
    }
    adjust_comparisons(&mut comparisons);

    let key: String = runs.iter().map(|r| r.run_id.as_str()).collect::<Vec<_>>().join(",");
    let dir = config.paths.workdir.join("ablations").join(&sha256_hex(key.as_bytes())[..16]);
    fs::create_dir_all(&dir)?;
    let mut csv = Vec::new();
    write_comparisons_csv(&comparisons, &mut csv)?;
    fs::write(dir.join("comparisons.csv"), csv)?;
    let outcome = AblationOutcome {
        kind,
        labels,
        runs,
        comparisons,
        dir: dir.clone(),
    };
    let mut text = serde_json::to_string_pretty(&outcome)?;
    text.push('\n');
    fs::write(dir.join("ablation.json"), text)?;
    Ok(outcome)
}
