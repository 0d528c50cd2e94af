//! Random forest of Gini-impurity CART trees.
//!
//! Each tree sees a bootstrap sample (optional) and considers `max_features`
//! randomly ordered features per split (√F when unset). If none of those admits
//! a valid split the search continues through the remaining features, so a
//! node is only left impure when every feature is constant on it.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassifierSpec;
use crate::features::FeatureVector;
use crate::segment::Label;
use crate::util::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { distribution: [f64; 3] },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_distribution(&self, x: &[f64]) -> [f64; 3] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { distribution } => return *distribution,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean over trees of the leaf class frequencies.
    pub fn predict_proba(&self, x: &FeatureVector) -> [f64; 3] {
        let dense = x.dense();
        let mut p = [0.0; 3];
        for t in &self.trees {
            let d = t.leaf_distribution(&dense);
            for c in 0..3 {
                p[c] += d[c];
            }
        }
        let n = self.trees.len().max(1) as f64;
        p.map(|v| v / n)
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    max_features: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
}

fn gini(counts: &[f64; 3], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

impl Grower<'_> {
    fn leaf(&mut self, samples: &[usize]) -> usize {
        let mut counts = [0.0; 3];
        for &s in samples {
            counts[self.y[s]] += 1.0;
        }
        let n = samples.len().max(1) as f64;
        self.nodes.push(TreeNode::Leaf {
            distribution: counts.map(|c| c / n),
        });
        self.nodes.len() - 1
    }

    /// Best threshold on one feature: (impurity decrease, threshold).
    fn best_split_on(&self, samples: &[usize], feature: usize, parent: f64) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, usize)> = samples.iter().map(|&s| (self.x[s][feature], self.y[s])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        if vals[0].0 == vals[vals.len() - 1].0 {
            return None;
        }
        let n = vals.len() as f64;
        let mut total = [0.0; 3];
        for &(_, c) in &vals {
            total[c] += 1.0;
        }
        let mut left = [0.0; 3];
        let mut best: Option<(f64, f64)> = None;
        for i in 0..vals.len() - 1 {
            left[vals[i].1] += 1.0;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n - nl;
            if (nl as usize) < self.min_leaf || (nr as usize) < self.min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
            let child = (nl * gini(&left, nl) + nr * gini(&right, nr)) / n;
            let gain = parent - child;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, 0.5 * (vals[i].0 + vals[i + 1].0)));
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut impl Rng) -> usize {
        let mut counts = [0.0; 3];
        for &s in &samples {
            counts[self.y[s]] += 1.0;
        }
        let n = samples.len() as f64;
        let parent = gini(&counts, n);
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure
            || samples.len() < 2 * self.min_leaf
            || self.max_depth.is_some_and(|d| depth >= d)
        {
            return self.leaf(&samples);
        }
        let dim = self.x[0].len();
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            if let Some((gain, thr)) = self.best_split_on(&samples, f, parent) {
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(&samples);
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&s| self.x[s][feature] <= threshold);
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { distribution: [0.0; 3] });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[idx] = TreeNode::Split { feature, threshold, left, right };
        idx
    }
}

pub(super) fn fit(spec: &ClassifierSpec, x: &[FeatureVector], y: &[Label], dim: usize, seed: u64) -> ForestModel {
    let dense: Vec<Vec<f64>> = x.iter().map(FeatureVector::dense).collect();
    let labels: Vec<usize> = y.iter().map(|l| l.index()).collect();
    let n_trees = spec.param("trees").round().max(1.0) as usize;
    let max_features = match spec.param("max_features").round() as usize {
        0 => ((dim as f64).sqrt().round() as usize).max(1),
        m => m.min(dim),
    };
    let min_leaf = spec.param("min_leaf").round().max(1.0) as usize;
    let bootstrap = spec.param("bootstrap") != 0.0;
    let max_depth = spec.param_opt("max_depth").map(|d| d.max(0.0) as usize);

    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, &format!("tree-{t}"));
            let n = dense.len();
            let samples: Vec<usize> = if bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut g = Grower {
                x: &dense,
                y: &labels,
                max_features,
                min_leaf,
                max_depth,
                nodes: Vec::new(),
            };
            g.grow(samples, 0, &mut rng);
            Tree { nodes: g.nodes }
        })
        .collect();
    ForestModel { trees }
}
