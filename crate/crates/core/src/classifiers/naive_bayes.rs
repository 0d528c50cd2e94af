//! Multinomial naive Bayes with additive smoothing.
//!
//! Multinomial likelihoods need nonnegative feature "counts": the tf-idf block
//! is used as-is and the structured block is min-max scaled to [0, 1] using the
//! training range (test values are clamped into it).

use serde::{Deserialize, Serialize};

use super::{softmax3, ClassifierSpec};
use crate::features::{FeatureVector, STRUCTURED_DIM};
use crate::segment::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub alpha: f64,
    pub min: [f64; STRUCTURED_DIM],
    pub max: [f64; STRUCTURED_DIM],
    pub log_prior: [f64; 3],
    /// Row-major `dim × 3` log feature probabilities.
    pub log_prob: Vec<f64>,
}

impl NaiveBayesModel {
    fn counts(&self, x: &FeatureVector) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(STRUCTURED_DIM + x.tfidf.len());
        for j in 0..STRUCTURED_DIM {
            let range = self.max[j] - self.min[j];
            if range > 0.0 {
                let v = ((x.structured[j] - self.min[j]) / range).clamp(0.0, 1.0);
                if v > 0.0 {
                    out.push((j, v));
                }
            }
        }
        out.extend(
            x.tfidf
                .iter()
                .map(|&(i, v)| (STRUCTURED_DIM + i, v.max(0.0))),
        );
        out
    }

    pub fn joint_log_likelihood(&self, x: &FeatureVector) -> [f64; 3] {
        let mut z = self.log_prior;
        for (j, v) in self.counts(x) {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += v * self.log_prob[j * 3 + c];
            }
        }
        z
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> [f64; 3] {
        softmax3(self.joint_log_likelihood(x))
    }
}

pub(super) fn fit(spec: &ClassifierSpec, x: &[FeatureVector], y: &[Label], dim: usize) -> NaiveBayesModel {
    let alpha = spec.param("alpha");
    let mut min = [f64::INFINITY; STRUCTURED_DIM];
    let mut max = [f64::NEG_INFINITY; STRUCTURED_DIM];
    for v in x {
        for j in 0..STRUCTURED_DIM {
            min[j] = min[j].min(v.structured[j]);
            max[j] = max[j].max(v.structured[j]);
        }
    }
    let mut model = NaiveBayesModel {
        alpha,
        min,
        max,
        log_prior: [0.0; 3],
        log_prob: vec![0.0; dim * 3],
    };
    let mut class_count = [0.0; 3];
    let mut feature_sum = vec![0.0; dim * 3];
    for (v, label) in x.iter().zip(y) {
        let c = label.index();
        class_count[c] += 1.0;
        for (j, val) in model.counts(v) {
            feature_sum[j * 3 + c] += val;
        }
    }
    let n = x.len() as f64;
    // Structured features that were constant in training never fire.
    let active: Vec<usize> = (0..dim)
        .filter(|&j| j >= STRUCTURED_DIM || model.max[j] > model.min[j])
        .collect();
    for c in 0..3 {
        model.log_prior[c] = (class_count[c] / n).ln();
        let total: f64 = active.iter().map(|&j| feature_sum[j * 3 + c]).sum::<f64>() + alpha * active.len() as f64;
        for &j in &active {
            model.log_prob[j * 3 + c] = ((feature_sum[j * 3 + c] + alpha) / total).ln();
        }
    }
    model
}
