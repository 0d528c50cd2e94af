use serde::{Deserialize, Serialize};

use super::ClassifierSpec;
use crate::features::FeatureVector;
use crate::segment::Label;

/// Lazy learner: the training set, verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<Label>,
}

/// Squared Euclidean distance over the full `[structured | tfidf]` space.
pub(crate) fn squared_distance(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let mut d: f64 = a
        .structured
        .iter()
        .zip(&b.structured)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let (ta, tb) = (&a.tfidf, &b.tfidf);
    let (mut i, mut j) = (0, 0);
    while i < ta.len() || j < tb.len() {
        let ai = ta.get(i).map_or(usize::MAX, |e| e.0);
        let bj = tb.get(j).map_or(usize::MAX, |e| e.0);
        let diff = match ai.cmp(&bj) {
            std::cmp::Ordering::Less => {
                i += 1;
                ta[i - 1].1
            }
            std::cmp::Ordering::Greater => {
                j += 1;
                tb[j - 1].1
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
                ta[i - 1].1 - tb[j - 1].1
            }
        };
        d += diff * diff;
    }
    d
}

impl KnnModel {
    /// Indices of the k nearest rows; equal distances go to the lower index.
    pub fn neighbors(&self, x: &FeatureVector) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, x), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Vote fractions among the k nearest neighbours.
    pub fn predict_proba(&self, x: &FeatureVector) -> [f64; 3] {
        let nn = self.neighbors(x);
        let mut p = [0.0; 3];
        for &i in &nn {
            p[self.labels[i].index()] += 1.0;
        }
        let n = nn.len().max(1) as f64;
        p.map(|v| v / n)
    }
}

pub(super) fn fit(spec: &ClassifierSpec, x: &[FeatureVector], y: &[Label]) -> KnnModel {
    KnnModel {
        k: spec.param("k").round().max(1.0) as usize,
        rows: x.to_vec(),
        labels: y.to_vec(),
    }
}
