//! Grid search by k-fold cross-validation with report-level folds.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, ClassifierSpec, TrainedClassifier};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::segment::Label;
use crate::util::rng_for;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: ClassifierSpec,
    /// Mean validation accuracy per grid entry, in grid order.
    pub scores: Vec<f64>,
    /// The best spec refit on every sample.
    pub model: TrainedClassifier,
}

/// Shuffles the distinct report ids and deals them round-robin into `folds`.
pub fn assign_report_folds(report_ids: &[String], folds: usize, seed: u64) -> Result<BTreeMap<String, usize>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut unique: Vec<&String> = report_ids.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if unique.len() < folds {
        return Err(Error::invalid(format!(
            "{} reports cannot fill {folds} folds",
            unique.len()
        )));
    }
    unique.shuffle(&mut rng_for(seed, "cv-folds"));
    Ok(unique
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i % folds))
        .collect())
}

/// Picks the spec with the best mean fold accuracy (ties go to the earlier
/// spec) and retrains it on all of `(x, y)`.
pub fn cross_validate(
    grid: &[ClassifierSpec],
    x: &[FeatureVector],
    y: &[Label],
    groups: &[String],
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    if x.len() != y.len() || x.len() != groups.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vectors, {} labels, {} group ids",
            x.len(),
            y.len(),
            groups.len()
        )));
    }
    for spec in grid {
        spec.validate()?;
    }
    for class in Label::ALL {
        let n = y.iter().filter(|&&l| l == class).count();
        if n < folds {
            return Err(Error::invalid(format!(
                "class {class} has {n} samples, fewer than {folds} folds"
            )));
        }
    }
    let fold_of = assign_report_folds(groups, folds, seed)?;
    let sample_fold: Vec<usize> = groups.iter().map(|g| fold_of[g]).collect();

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|s| (0..folds).map(move |f| (s, f)))
        .collect();
    let accs: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(s, f)| {
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..x.len() {
                if sample_fold[i] == f {
                    vx.push(x[i].clone());
                    vy.push(y[i]);
                } else {
                    tx.push(x[i].clone());
                    ty.push(y[i]);
                }
            }
            let model = train(&grid[s], &tx, &ty, seed)?;
            model.accuracy(&vx, &vy)
        })
        .collect();

    let mut scores = vec![0.0; grid.len()];
    for ((s, _), acc) in jobs.iter().zip(accs) {
        scores[*s] += acc? / folds as f64;
    }
    let mut best = 0;
    for (i, &sc) in scores.iter().enumerate() {
        if sc > scores[best] {
            best = i;
        }
    }
    let model = train(&grid[best], x, y, seed)?;
    Ok(CvOutcome {
        best: grid[best].clone(),
        scores,
        model,
    })
}
