//! AUROC by pair counting, DeLong variances and paired tests, ROC points.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::util::cmp_f64;

fn check_binary(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("score {i} is not finite")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUROC needs both positive and negative instances"));
    }
    Ok((pos, neg))
}

fn split(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        if l {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    (pos, neg)
}

/// (#sorted values strictly below x, #equal to x)
fn below_and_equal(sorted: &[f64], x: f64) -> (usize, usize) {
    let lo = sorted.partition_point(|&v| v < x);
    let hi = sorted.partition_point(|&v| v <= x);
    (lo, hi - lo)
}

/// (correctly ordered pos/neg pairs + ½·ties) / (n⁺·n⁻).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (np, nn) = check_binary(scores, labels)?;
    let (pos, mut neg) = split(scores, labels);
    neg.sort_by(|a, b| cmp_f64(*a, *b));
    let (mut ordered, mut ties) = (0u64, 0u64);
    for &p in &pos {
        let (lo, eq) = below_and_equal(&neg, p);
        ordered += lo as u64;
        ties += eq as u64;
    }
    Ok((ordered as f64 + 0.5 * ties as f64) / (np as f64 * nn as f64))
}

/// Per-instance structural components of the AUC: `v10[i]` is the fraction
/// of negatives ranked below positive `i`, `v01[j]` the fraction of positives
/// ranked above negative `j` (ties count ½).
#[derive(Clone, Debug, PartialEq)]
pub struct Placements {
    pub v10: Vec<f64>,
    pub v01: Vec<f64>,
}

impl Placements {
    pub fn auc(&self) -> f64 {
        self.v10.iter().sum::<f64>() / self.v10.len() as f64
    }
}

pub fn placement_values(scores: &[f64], labels: &[bool]) -> Result<Placements> {
    check_binary(scores, labels)?;
    let (pos, neg) = split(scores, labels);
    let mut sp = pos.clone();
    let mut sn = neg.clone();
    sp.sort_by(|a, b| cmp_f64(*a, *b));
    sn.sort_by(|a, b| cmp_f64(*a, *b));
    let v10 = pos
        .iter()
        .map(|&x| {
            let (lo, eq) = below_and_equal(&sn, x);
            (lo as f64 + 0.5 * eq as f64) / sn.len() as f64
        })
        .collect();
    let v01 = neg
        .iter()
        .map(|&y| {
            let (lo, eq) = below_and_equal(&sp, y);
            let above = sp.len() - lo - eq;
            (above as f64 + 0.5 * eq as f64) / sp.len() as f64
        })
        .collect();
    Ok(Placements { v10, v01 })
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64
}

/// DeLong covariance of the AUCs of two score vectors on the same instances.
pub fn delong_covariance(a: &Placements, b: &Placements) -> f64 {
    covariance(&a.v10, &b.v10) / a.v10.len() as f64 + covariance(&a.v01, &b.v01) / a.v01.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
    pub z: f64,
    pub p_two_sided: f64,
}

/// Paired DeLong test of two models scored on identical instances.
pub fn delong(scores_a: &[f64], scores_b: &[f64], labels: &[bool]) -> Result<DelongResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::invalid("paired DeLong test needs equally many scores"));
    }
    let pa = placement_values(scores_a, labels)?;
    let pb = placement_values(scores_b, labels)?;
    let (auc_a, auc_b) = (pa.auc(), pb.auc());
    let var_a = delong_covariance(&pa, &pa);
    let var_b = delong_covariance(&pb, &pb);
    let cov_ab = delong_covariance(&pa, &pb);
    let var_diff = var_a + var_b - 2.0 * cov_ab;
    let (z, p) = if auc_a == auc_b {
        (0.0, 1.0)
    } else if var_diff <= 1e-14 * (var_a + var_b) || var_diff <= 0.0 {
        return Err(Error::Degenerate(format!(
            "zero variance of the AUC difference ({auc_a} vs {auc_b})"
        )));
    } else {
        let z = (auc_a - auc_b) / var_diff.sqrt();
        (z, 2.0 * std_normal().sf(z.abs()))
    };
    Ok(DelongResult {
        auc_a,
        auc_b,
        var_a,
        var_b,
        cov_ab,
        z,
        p_two_sided: p.min(1.0),
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided normal quantile for a confidence level in (0, 1).
pub(crate) fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(std_normal().inverse_cdf(0.5 + level / 2.0))
}

/// AUC ± z·√var(DeLong), clipped to [0, 1].
pub fn delong_ci(scores: &[f64], labels: &[bool], level: f64) -> Result<(f64, f64)> {
    let z = z_for_level(level)?;
    let p = placement_values(scores, labels)?;
    let auc = p.auc();
    let half = z * delong_covariance(&p, &p).max(0.0).sqrt();
    Ok(((auc - half).clamp(0.0, 1.0), (auc + half).clamp(0.0, 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC operating points from the strictest threshold down; tied scores move
/// together, so the first point is (0, 0) and the last (1, 1).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (np, nn) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| cmp_f64(scores[b], scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / nn as f64,
            tpr: tp as f64 / np as f64,
        });
    }
    Ok(points)
}

/// `threshold,fpr,tpr`
pub fn write_roc_csv<W: Write>(points: &[RocPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
