//! One-vs-rest kernel SVM with a polynomial kernel, trained by kernelised
//! stochastic subgradient descent on the hinge loss (Pegasos).
//!
//! Decision values `f_c(x) = Σ_j β_cj K(x_j, x)` are mapped through a softmax
//! to give a probability triple; the mapping is monotone so rankings and the
//! argmax are those of the raw scores.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax3, ClassifierSpec};
use crate::features::FeatureVector;
use crate::segment::Label;
use crate::util::rng_for;

/// `(γ⟨a, b⟩ + c₀)^degree` over sparse rows sorted by index.
pub fn poly_kernel(a: &[(usize, f64)], b: &[(usize, f64)], gamma: f64, coef0: f64, degree: i32) -> f64 {
    (gamma * sparse_dot(a, b) + coef0).powi(degree)
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub coef0: f64,
    pub degree: i32,
    pub support: Vec<Vec<(usize, f64)>>,
    /// Per support vector, the coefficient for each one-vs-rest machine.
    pub coef: Vec<[f64; 3]>,
}

impl SvmModel {
    pub fn decision(&self, x: &FeatureVector) -> [f64; 3] {
        let row: Vec<(usize, f64)> = x.sparse().collect();
        let mut f = [0.0; 3];
        for (sv, beta) in self.support.iter().zip(&self.coef) {
            let k = poly_kernel(sv, &row, self.gamma, self.coef0, self.degree);
            for c in 0..3 {
                f[c] += beta[c] * k;
            }
        }
        f
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> [f64; 3] {
        softmax3(self.decision(x))
    }
}

pub(super) fn fit(
    spec: &ClassifierSpec,
    x: &[FeatureVector],
    y: &[Label],
    _dim: usize,
    seed: u64,
) -> SvmModel {
    let rows: Vec<Vec<(usize, f64)>> = x.iter().map(|v| v.sparse().collect()).collect();
    let n = rows.len();
    let degree = spec.param("degree").round() as i32;
    let coef0 = spec.param("coef0");
    let lambda = spec.param("lambda");
    let gamma = match spec.param("gamma") {
        g if g > 0.0 => g,
        _ => {
            let mean_sq = rows
                .iter()
                .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>())
                .sum::<f64>()
                / n as f64;
            if mean_sq > 0.0 {
                1.0 / mean_sq
            } else {
                1.0
            }
        }
    };
    let sign = |i: usize, c: usize| if y[i].index() == c { 1.0 } else { -1.0 };

    let total_steps = (spec.param("epochs").max(1.0) as usize) * n;
    let mut rng = rng_for(seed, "svm");
    let mut alpha = vec![[0u32; 3]; n];
    // acc[c][k] = Σ_j alpha_cj · y_jc · K(x_j, x_k), maintained incrementally.
    let mut acc = vec![[0.0f64; 3]; n];
    let mut kernel_row = vec![0.0; n];
    for t in 1..=total_steps {
        let i = rng.gen_range(0..n);
        let scale = 1.0 / (lambda * t as f64);
        let violated: Vec<usize> = (0..3)
            .filter(|&c| sign(i, c) * scale * acc[i][c] < 1.0)
            .collect();
        if violated.is_empty() {
            continue;
        }
        for (k, slot) in kernel_row.iter_mut().enumerate() {
            *slot = poly_kernel(&rows[i], &rows[k], gamma, coef0, degree);
        }
        for c in violated {
            alpha[i][c] += 1;
            let s = sign(i, c);
            for (a, kv) in acc.iter_mut().zip(&kernel_row) {
                a[c] += s * kv;
            }
        }
    }

    let final_scale = 1.0 / (lambda * total_steps as f64);
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, a) in alpha.iter().enumerate() {
        if a.iter().any(|&v| v > 0) {
            support.push(rows[i].clone());
            coef.push([0, 1, 2].map(|c| a[c] as f64 * sign(i, c) * final_scale));
        }
    }
    SvmModel {
        gamma,
        coef0,
        degree,
        support,
        coef,
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{argmax3, train, ClassifierKind, ClassifierSpec, ModelParams};
    use super::*;

    #[test]
    fn kernel_value() {
        let a = [(0, 1.0), (3, 2.0)];
        let b = [(3, 0.5), (4, 9.0)];
        assert_eq!(poly_kernel(&a, &b, 0.5, 1.0, 3), (0.5f64 * 1.0 + 1.0).powi(3));
    }

    #[test]
    fn argmax_matches_raw_scores() {
        let (x, y) = blobs(15, 4);
        let m = train(&ClassifierSpec::new(ClassifierKind::Svm), &x, &y, 1).unwrap();
        let ModelParams::Svm(svm) = &m.params else { unreachable!() };
        for v in &x {
            let f = svm.decision(v);
            let p = svm.predict_proba(v);
            assert_eq!(argmax3(&f), argmax3(&p));
            // any strictly increasing map of the scores keeps the argmax
            let g = f.map(|s| s.exp() * 3.0 + s);
            assert_eq!(argmax3(&g), argmax3(&p));
        }
        assert!(m.accuracy(&x, &y).unwrap() >= 0.95);
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = blobs(8, 2);
        let spec = ClassifierSpec::new(ClassifierKind::Svm);
        assert_eq!(train(&spec, &x, &y, 9).unwrap(), train(&spec, &x, &y, 9).unwrap());
    }
}
