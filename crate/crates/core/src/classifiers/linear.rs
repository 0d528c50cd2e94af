//! Multinomial logistic regression with optional L1 (Lasso) or L2 (Ridge) penalty.
//!
//! Objective: mean cross-entropy + λ‖W‖₁ or + (λ/2)‖W‖², intercepts unpenalised.
//! Optimised by full-batch accelerated proximal gradient at a fixed step; the L1
//! case soft-thresholds so weights can reach exactly zero.

use serde::{Deserialize, Serialize};

use super::{softmax3, ClassifierSpec};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::segment::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    None,
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub penalty: Penalty,
    pub lambda: f64,
    /// Row-major `dim × 3`.
    pub weights: Vec<f64>,
    pub bias: [f64; 3],
    pub iterations: usize,
}

impl LinearModel {
    pub fn weight(&self, feature: usize, class: usize) -> f64 {
        self.weights[feature * 3 + class]
    }

    fn logits(&self, row: impl Iterator<Item = (usize, f64)>) -> [f64; 3] {
        let mut z = self.bias;
        for (j, v) in row {
            let w = &self.weights[j * 3..j * 3 + 3];
            z[0] += w[0] * v;
            z[1] += w[1] * v;
            z[2] += w[2] * v;
        }
        z
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> [f64; 3] {
        softmax3(self.logits(x.sparse()))
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(super) fn fit(
    spec: &ClassifierSpec,
    penalty: Penalty,
    x: &[FeatureVector],
    y: &[Label],
    dim: usize,
) -> Result<LinearModel> {
    let lambda = match penalty {
        Penalty::None => 0.0,
        _ => spec.param("lambda"),
    };
    let max_iter = spec.param("max_iter").max(1.0) as usize;
    let tol = spec.param("tol");
    let rows: Vec<Vec<(usize, f64)>> = x.iter().map(|v| v.sparse().collect()).collect();
    let n = rows.len() as f64;

    // Softmax cross-entropy has curvature at most ½·λmax(X̃ᵀX̃/n) ≤ ½·mean‖x̃‖².
    let step = match spec.param("step") {
        s if s > 0.0 => s,
        _ => {
            let mean_sq = rows
                .iter()
                .map(|r| 1.0 + r.iter().map(|(_, v)| v * v).sum::<f64>())
                .sum::<f64>()
                / n;
            let lipschitz = 0.5 * mean_sq + if penalty == Penalty::L2 { lambda } else { 0.0 };
            1.0 / lipschitz
        }
    };

    let n_w = dim * 3;
    // θ = [weights | bias]; accelerated proximal gradient with restarts.
    let mut theta = vec![0.0; n_w + 3];
    let mut prev = theta.clone();
    let mut look = theta.clone();
    let mut grad = vec![0.0; n_w + 3];
    let mut t = 1.0_f64;
    let mut last_loss = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..max_iter {
        let loss = gradient(&rows, y, &look, n_w, &mut grad);
        if !loss.is_finite() {
            return Err(Error::Numeric {
                layer: "logistic regression".into(),
                message: format!("non-finite loss at iteration {it}"),
            });
        }
        let mut max_delta: f64 = 0.0;
        for (i, g) in grad.iter().enumerate() {
            let g = g / n;
            let base = look[i] - step * g;
            let updated = if i >= n_w {
                base
            } else {
                match penalty {
                    Penalty::None => base,
                    Penalty::L2 => look[i] - step * (g + lambda * look[i]),
                    Penalty::L1 => soft_threshold(base, step * lambda),
                }
            };
            max_delta = max_delta.max((updated - theta[i]).abs());
            prev[i] = theta[i];
            theta[i] = updated;
        }
        iterations = it + 1;
        if max_delta < tol {
            break;
        }
        // Momentum is dropped whenever the objective at the look-ahead point rises.
        if loss > last_loss {
            t = 1.0;
        }
        last_loss = loss;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..theta.len() {
            look[i] = theta[i] + beta * (theta[i] - prev[i]);
        }
        t = t_next;
    }
    let bias = [theta[n_w], theta[n_w + 1], theta[n_w + 2]];
    theta.truncate(n_w);
    Ok(LinearModel {
        penalty,
        lambda,
        weights: theta,
        bias,
        iterations,
    })
}

/// Summed cross-entropy at `theta`; `grad` receives its (unnormalised) gradient.
fn gradient(rows: &[Vec<(usize, f64)>], y: &[Label], theta: &[f64], n_w: usize, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (row, label) in rows.iter().zip(y) {
        let mut z = [theta[n_w], theta[n_w + 1], theta[n_w + 2]];
        for &(j, v) in row {
            z[0] += theta[j * 3] * v;
            z[1] += theta[j * 3 + 1] * v;
            z[2] += theta[j * 3 + 2] * v;
        }
        let mut r = softmax3(z);
        let c = label.index();
        loss -= r[c].max(1e-300).ln();
        r[c] -= 1.0;
        for k in 0..3 {
            grad[n_w + k] += r[k];
        }
        for &(j, v) in row {
            grad[j * 3] += r[0] * v;
            grad[j * 3 + 1] += r[1] * v;
            grad[j * 3 + 2] += r[2] * v;
        }
    }
    loss
}
