//! Bag-of-words classifiers behind one train / predict interface.
//!
//! Every model emits a probability triple in the fixed class order
//! `[AHI, SaO2, Other]`. Hyperparameters live in a string-keyed map so that
//! grids and config files can name them uniformly; unknown keys are rejected.

mod cv;
mod forest;
mod knn;
mod linear;
mod naive_bayes;
mod svm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::segment::Label;

pub use cv::{assign_report_folds, cross_validate, CvOutcome};
pub use forest::{ForestModel, Tree, TreeNode};
pub use knn::KnnModel;
pub use linear::{LinearModel, Penalty};
pub use naive_bayes::NaiveBayesModel;
pub use svm::{poly_kernel, SvmModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "LR")]
    Lr,
    Lasso,
    Ridge,
    #[serde(rename = "SVM")]
    Svm,
    #[serde(rename = "kNN")]
    Knn,
    NaiveBayes,
    RandomForest,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 7] = [
        ClassifierKind::Lr,
        ClassifierKind::Lasso,
        ClassifierKind::Ridge,
        ClassifierKind::Svm,
        ClassifierKind::Knn,
        ClassifierKind::NaiveBayes,
        ClassifierKind::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Lr => "LR",
            ClassifierKind::Lasso => "Lasso",
            ClassifierKind::Ridge => "Ridge",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::Knn => "kNN",
            ClassifierKind::NaiveBayes => "NaiveBayes",
            ClassifierKind::RandomForest => "RandomForest",
        }
    }

    /// Kinds that estimate per-class parameters and so need every class present.
    pub fn needs_all_classes(self) -> bool {
        !matches!(self, ClassifierKind::Knn | ClassifierKind::RandomForest)
    }

    fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            ClassifierKind::Lr => &[("lambda", 0.0), ("max_iter", 2000.0), ("tol", 1e-6), ("step", 0.0)],
            ClassifierKind::Lasso | ClassifierKind::Ridge => {
                &[("lambda", 0.01), ("max_iter", 2000.0), ("tol", 1e-6), ("step", 0.0)]
            }
            ClassifierKind::Svm => &[
                ("degree", 3.0),
                ("gamma", 0.0),
                ("coef0", 1.0),
                ("lambda", 1e-4),
                ("epochs", 5.0),
            ],
            ClassifierKind::Knn => &[("k", 3.0)],
            ClassifierKind::NaiveBayes => &[("alpha", 0.5)],
            ClassifierKind::RandomForest => &[
                ("trees", 100.0),
                ("max_features", 0.0),
                ("min_leaf", 1.0),
                ("bootstrap", 1.0),
            ],
        }
    }

    fn optional(self) -> &'static [&'static str] {
        match self {
            ClassifierKind::RandomForest => &["max_depth"],
            _ => &[],
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown classifier kind `{s}`")))
    }
}

/// A classifier kind plus hyperparameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
}

impl ClassifierSpec {
    /// The kind with its default hyperparameters filled in.
    pub fn new(kind: ClassifierKind) -> Self {
        Self {
            kind,
            hyperparams: kind
                .defaults()
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparams.insert(key.to_string(), value);
        self
    }

    pub fn param(&self, key: &str) -> f64 {
        self.hyperparams.get(key).copied().unwrap_or_else(|| {
            self.kind
                .defaults()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .unwrap_or(0.0)
        })
    }

    pub fn param_opt(&self, key: &str) -> Option<f64> {
        self.hyperparams.get(key).copied()
    }

    pub fn validate(&self) -> Result<()> {
        for (key, value) in &self.hyperparams {
            let known = self.kind.defaults().iter().any(|(k, _)| k == key)
                || self.kind.optional().contains(&key.as_str());
            if !known {
                return Err(Error::invalid(format!(
                    "{} has no hyperparameter `{key}`",
                    self.kind
                )));
            }
            if !value.is_finite() {
                return Err(Error::invalid(format!("hyperparameter `{key}` must be finite")));
            }
        }
        let positive = |key: &str| -> Result<()> {
            if self.param(key) <= 0.0 {
                return Err(Error::invalid(format!("{}: `{key}` must be > 0", self.kind)));
            }
            Ok(())
        };
        match self.kind {
            ClassifierKind::Knn => positive("k")?,
            ClassifierKind::NaiveBayes => positive("alpha")?,
            ClassifierKind::RandomForest => {
                positive("trees")?;
                positive("min_leaf")?;
            }
            ClassifierKind::Svm => {
                positive("lambda")?;
                positive("degree")?;
                positive("epochs")?;
            }
            _ => {
                if self.param("lambda") < 0.0 {
                    return Err(Error::invalid("lambda must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Search grid used when a config names a kind without its own grid.
    pub fn default_grid(kind: ClassifierKind) -> Vec<ClassifierSpec> {
        let base = ClassifierSpec::new(kind);
        let sweep = |key: &str, values: &[f64]| -> Vec<ClassifierSpec> {
            values.iter().map(|&v| base.clone().with(key, v)).collect()
        };
        match kind {
            ClassifierKind::Lasso | ClassifierKind::Ridge => sweep("lambda", &[0.001, 0.01, 0.1]),
            ClassifierKind::Knn => sweep("k", &[1.0, 3.0, 5.0]),
            ClassifierKind::NaiveBayes => sweep("alpha", &[0.1, 0.5, 1.0]),
            ClassifierKind::RandomForest => sweep("trees", &[50.0, 100.0, 200.0]),
            ClassifierKind::Lr | ClassifierKind::Svm => vec![base],
        }
    }
}

/// Kind-specific fitted parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Linear(LinearModel),
    Svm(SvmModel),
    Knn(KnnModel),
    NaiveBayes(NaiveBayesModel),
    Forest(ForestModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub classes: [Label; 3],
    pub n_features: usize,
    pub seed: u64,
    pub n_train: usize,
    pub params: ModelParams,
}

/// Versioned on-disk form of a trained classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub classifier: TrainedClassifier,
    pub vocab_hash: String,
    pub scaler_hash: Option<String>,
}

pub(crate) fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Index of the largest entry; earlier class wins ties.
pub fn argmax3(p: &[f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

fn check_dims(x: &[FeatureVector]) -> Result<usize> {
    let dim = x
        .first()
        .map(FeatureVector::dim)
        .ok_or_else(|| Error::invalid("training set is empty"))?;
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| v.dim() != dim) {
        return Err(Error::invalid(format!(
            "dimension mismatch: sample {i} has {} features, expected {dim}",
            v.dim()
        )));
    }
    Ok(dim)
}

/// Fits `spec` on `(x, y)`; deterministic in `seed`.
pub fn train(
    spec: &ClassifierSpec,
    x: &[FeatureVector],
    y: &[Label],
    seed: u64,
) -> Result<TrainedClassifier> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vectors but {} labels",
            x.len(),
            y.len()
        )));
    }
    let dim = check_dims(x)?;
    if spec.kind.needs_all_classes() {
        for class in Label::ALL {
            if !y.contains(&class) {
                return Err(Error::invalid(format!(
                    "class {class} is missing from the training data"
                )));
            }
        }
    }
    let params = match spec.kind {
        ClassifierKind::Lr => ModelParams::Linear(linear::fit(spec, Penalty::None, x, y, dim)?),
        ClassifierKind::Lasso => ModelParams::Linear(linear::fit(spec, Penalty::L1, x, y, dim)?),
        ClassifierKind::Ridge => ModelParams::Linear(linear::fit(spec, Penalty::L2, x, y, dim)?),
        ClassifierKind::Svm => ModelParams::Svm(svm::fit(spec, x, y, dim, seed)),
        ClassifierKind::Knn => ModelParams::Knn(knn::fit(spec, x, y)),
        ClassifierKind::NaiveBayes => ModelParams::NaiveBayes(naive_bayes::fit(spec, x, y, dim)),
        ClassifierKind::RandomForest => ModelParams::Forest(forest::fit(spec, x, y, dim, seed)),
    };
    Ok(TrainedClassifier {
        spec: spec.clone(),
        classes: Label::ALL,
        n_features: dim,
        seed,
        n_train: x.len(),
        params,
    })
}

impl TrainedClassifier {
    /// `[p_AHI, p_SaO2, p_Other]`.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<[f64; 3]> {
        if x.dim() != self.n_features {
            return Err(Error::invalid(format!(
                "dimension mismatch: model expects {} features, got {}",
                self.n_features,
                x.dim()
            )));
        }
        Ok(match &self.params {
            ModelParams::Linear(m) => m.predict_proba(x),
            ModelParams::Svm(m) => m.predict_proba(x),
            ModelParams::Knn(m) => m.predict_proba(x),
            ModelParams::NaiveBayes(m) => m.predict_proba(x),
            ModelParams::Forest(m) => m.predict_proba(x),
        })
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Label> {
        let p = self.predict_proba(x)?;
        Ok(Label::ALL[argmax3(&p)])
    }

    pub fn accuracy(&self, x: &[FeatureVector], y: &[Label]) -> Result<f64> {
        if x.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (v, l) in x.iter().zip(y) {
            if self.predict(v)? == *l {
                correct += 1;
            }
        }
        Ok(correct as f64 / x.len() as f64)
    }
}

/// Free-function form of [`TrainedClassifier::predict_proba`].
pub fn predict_proba(model: &TrainedClassifier, x: &FeatureVector) -> Result<[f64; 3]> {
    model.predict_proba(x)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Feature vector with the given structured block and dense tf-idf values.
    pub fn fv(structured: [f64; 6], tfidf: &[f64]) -> FeatureVector {
        FeatureVector {
            structured,
            tfidf: tfidf
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .collect(),
            tfidf_dim: tfidf.len(),
        }
    }

    /// Three well-separated Gaussian blobs in the first two structured features.
    pub fn blobs(n_per_class: usize, seed: u64) -> (Vec<FeatureVector>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [(-3.0, 0.0), (3.0, 0.0), (0.0, 4.0)];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..n_per_class {
                let a: f64 = rng.gen_range(-0.8..0.8);
                let b: f64 = rng.gen_range(-0.8..0.8);
                x.push(fv([cx + a, cy + b, 0.0, 0.0, 0.0, 0.0], &[0.0, 0.0]));
                y.push(Label::ALL[c]);
            }
        }
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn kind_defaults() {
        assert_eq!(ClassifierSpec::new(ClassifierKind::Lasso).param("lambda"), 0.01);
        assert_eq!(ClassifierSpec::new(ClassifierKind::Ridge).param("lambda"), 0.01);
        assert_eq!(ClassifierSpec::new(ClassifierKind::Lr).param("lambda"), 0.0);
        assert_eq!(ClassifierSpec::new(ClassifierKind::Knn).param("k"), 3.0);
        assert_eq!(ClassifierSpec::new(ClassifierKind::NaiveBayes).param("alpha"), 0.5);
        assert_eq!(ClassifierSpec::new(ClassifierKind::Svm).param("degree"), 3.0);
    }

    #[test]
    fn unknown_hyperparameter_rejected() {
        let spec = ClassifierSpec::new(ClassifierKind::Knn).with("depth", 2.0);
        assert!(matches!(spec.validate(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn missing_class_named() {
        let (x, y) = blobs(5, 1);
        let err = train(&ClassifierSpec::new(ClassifierKind::Lr), &x[..10], &y[..10], 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("Other"), "{err}");
    }

    #[test]
    fn dimension_mismatch() {
        let (mut x, y) = blobs(4, 2);
        x[3] = fv([0.0; 6], &[1.0, 0.0, 0.0]);
        assert!(train(&ClassifierSpec::new(ClassifierKind::Knn), &x, &y, 0).is_err());

        let (x, y) = blobs(4, 2);
        let m = train(&ClassifierSpec::new(ClassifierKind::Knn), &x, &y, 0).unwrap();
        assert!(m.predict_proba(&fv([0.0; 6], &[1.0])).is_err());
    }

    #[test]
    fn every_kind_emits_simplex_and_serializes() {
        let (x, y) = blobs(12, 3);
        for kind in ClassifierKind::ALL {
            let spec = match kind {
                ClassifierKind::RandomForest => ClassifierSpec::new(kind).with("trees", 10.0),
                _ => ClassifierSpec::new(kind),
            };
            let m = train(&spec, &x, &y, 7).unwrap();
            for v in &x {
                let p = m.predict_proba(v).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{kind}");
                assert!(p.iter().all(|q| (0.0..=1.0).contains(q)), "{kind}");
            }
            let json = serde_json::to_string(&m).unwrap();
            let back: TrainedClassifier = serde_json::from_str(&json).unwrap();
            assert_eq!(back.predict_proba(&x[0]).unwrap(), m.predict_proba(&x[0]).unwrap());
            // multinomial NB sees only feature proportions, not magnitudes
            if kind != ClassifierKind::NaiveBayes {
                assert!(m.accuracy(&x, &y).unwrap() > 0.9, "{kind}");
            }
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }
}
