use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::SplitConfig;
use crate::error::{Error, Result};
use crate::util::rng_for;

/// Report ids per split, each sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Report-level random split: `floor(n·test_fraction)` test reports, then the
/// development remainder divided by the train:val ratio. The input order does
/// not matter; ids are sorted before the seeded shuffle.
pub fn split_dataset(report_ids: &[String], config: &SplitConfig) -> Result<DatasetSplit> {
    let unique: BTreeSet<&String> = report_ids.iter().collect();
    if unique.len() != report_ids.len() {
        return Err(Error::invalid("duplicate report ids in the manifest"));
    }
    let n = unique.len();
    if n < 10 {
        return Err(Error::invalid(format!("{n} reports; a split needs at least 10")));
    }
    let (a, b) = config.ratio()?;
    let mut ids: Vec<String> = unique.into_iter().cloned().collect();
    ids.shuffle(&mut rng_for(config.seed, "split"));
    let n_test = ((n as f64 * config.test_fraction).floor() as usize).clamp(1, n - 2);
    let dev = n - n_test;
    let n_val = ((dev as f64 * b / (a + b)).floor() as usize).clamp(1, dev - 1);
    let mut test = ids[..n_test].to_vec();
    let mut val = ids[n_test..n_test + n_val].to_vec();
    let mut train = ids[n_test + n_val..].to_vec();
    test.sort();
    val.sort();
    train.sort();
    Ok(DatasetSplit { train, val, test })
}

/// `k` training reports. Nested subsets are prefixes of one seeded
/// permutation; independent ones use a permutation per size.
pub fn training_subset(train: &[String], k: usize, seed: u64, independent: bool) -> Result<Vec<String>> {
    if k > train.len() {
        return Err(Error::invalid(format!(
            "subset of {k} reports requested but the training set has {}",
            train.len()
        )));
    }
    let label = if independent { format!("subset-{k}") } else { "subset".to_string() };
    let mut ids = train.to_vec();
    ids.sort();
    ids.shuffle(&mut rng_for(seed, &label));
    ids.truncate(k);
    ids.sort();
    Ok(ids)
}
