//! Segment- and document-level metrics and the comparison statistics.

mod roc;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classifiers::argmax3;
use crate::error::{Error, Result};
use crate::segment::{GoldRecord, Instance, Label};

pub use roc::{
    delong, delong_ci, delong_covariance, placement_values, roc_auc, roc_curve, write_roc_csv, DelongResult,
    Placements, RocPoint,
};
pub use stats::{bonferroni, chi_square_2x2, ChiSquare};

/// An instance with its predicted `[p_AHI, p_SaO2, p_Other]`; the gold label
/// is `instance.label`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub instance: Instance,
    pub prob: [f64; 3],
}

impl ScoredInstance {
    pub fn new(instance: Instance, prob: [f64; 3]) -> Result<Self> {
        let sum: f64 = prob.iter().sum();
        if prob.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "probabilities {prob:?} for `{}` are not on the simplex",
                instance.report_id
            )));
        }
        Ok(Self { instance, prob })
    }

    pub fn gold(&self) -> Label {
        self.instance.label
    }

    pub fn predicted(&self) -> Label {
        Label::ALL[argmax3(&self.prob)]
    }
}

/// One-vs-rest rates; `None` where the denominator is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

pub fn segment_metrics(scored: &[ScoredInstance], class: Label) -> SegmentMetrics {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for s in scored {
        match (s.predicted() == class, s.gold() == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    SegmentMetrics {
        tp,
        fp,
        fn_,
        recall: rate(tp, tp + fn_),
        precision: rate(tp, tp + fp),
    }
}

/// Highest `prob[class]` in one report; ties go to the earliest (page, ordinal).
pub fn select_document_value(scored: &[ScoredInstance], class: Label) -> Result<&ScoredInstance> {
    let k = class.index();
    scored
        .iter()
        .reduce(|best, s| {
            let earlier = (s.instance.page, s.instance.ordinal) < (best.instance.page, best.instance.ordinal);
            if s.prob[k] > best.prob[k] || (s.prob[k] == best.prob[k] && earlier) {
                s
            } else {
                best
            }
        })
        .ok_or_else(|| Error::invalid("cannot select a value from a report without instances"))
}

/// The value picked for a report; `None` when the report had no candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentSelection {
    pub report_id: String,
    pub value: Option<f64>,
}

/// Selections for every gold report, in gold order.
pub fn select_documents(scored: &[ScoredInstance], gold: &[GoldRecord], class: Label) -> Result<Vec<DocumentSelection>> {
    let mut by_report: BTreeMap<&str, Vec<ScoredInstance>> = BTreeMap::new();
    for s in scored {
        by_report.entry(&s.instance.report_id).or_default().push(s.clone());
    }
    let known: BTreeSet<&str> = gold.iter().map(|g| g.report_id.as_str()).collect();
    if let Some(extra) = by_report.keys().find(|r| !known.contains(*r)) {
        return Err(Error::invalid(format!("instances for report `{extra}` have no gold record")));
    }
    gold.iter()
        .map(|g| {
            let value = match by_report.get(g.report_id.as_str()) {
                Some(items) => Some(select_document_value(items, class)?.instance.numeric_value),
                None => None,
            };
            Ok(DocumentSelection {
                report_id: g.report_id.clone(),
                value,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentAccuracy {
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Fraction of reports whose selected value equals a gold value of `class`
/// within `epsilon`, with a normal-approximation binomial interval.
pub fn document_accuracy(
    selections: &[DocumentSelection],
    gold: &[GoldRecord],
    class: Label,
    epsilon: f64,
    level: f64,
) -> Result<DocumentAccuracy> {
    let gold_by_id: BTreeMap<&str, &GoldRecord> = gold.iter().map(|g| (g.report_id.as_str(), g)).collect();
    let sel_ids: BTreeSet<&str> = selections.iter().map(|s| s.report_id.as_str()).collect();
    if sel_ids.len() != selections.len() || sel_ids.len() != gold_by_id.len() || sel_ids.iter().any(|r| !gold_by_id.contains_key(r)) {
        return Err(Error::invalid("selections and gold records cover different reports"));
    }
    if selections.is_empty() {
        return Err(Error::invalid("document accuracy over zero reports"));
    }
    let correct = selections
        .iter()
        .filter(|s| match s.value {
            Some(v) => gold_by_id[s.report_id.as_str()]
                .values(class)
                .iter()
                .any(|g| (g - v).abs() <= epsilon),
            None => false,
        })
        .count() as u64;
    let total = selections.len() as u64;
    let accuracy = correct as f64 / total as f64;
    let half = roc::z_for_level(level)? * (accuracy * (1.0 - accuracy) / total as f64).sqrt();
    Ok(DocumentAccuracy {
        correct,
        total,
        accuracy,
        ci_low: (accuracy - half).max(0.0),
        ci_high: (accuracy + half).min(1.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: Label,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub auroc: Option<f64>,
    pub auroc_ci_low: Option<f64>,
    pub auroc_ci_high: Option<f64>,
    pub document_accuracy: Option<DocumentAccuracy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pair: String,
    pub metric: String,
    pub statistic: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
}

fn binary_scores(scored: &[ScoredInstance], class: Label) -> (Vec<f64>, Vec<bool>) {
    scored.iter().map(|s| (s.prob[class.index()], s.gold() == class)).unzip()
}

/// Per-class segment metrics and AUROC (one-vs-rest), plus document accuracy
/// for the two target classes.
pub fn evaluate(scored: &[ScoredInstance], gold: &[GoldRecord], level: f64) -> Result<EvalReport> {
    let mut classes = Vec::with_capacity(3);
    for class in Label::ALL {
        let m = segment_metrics(scored, class);
        let (scores, labels) = binary_scores(scored, class);
        let both = labels.iter().any(|&l| l) && labels.iter().any(|&l| !l);
        let (auroc, ci) = if both {
            (Some(roc_auc(&scores, &labels)?), Some(delong_ci(&scores, &labels, level)?))
        } else {
            (None, None)
        };
        let document_accuracy = if class == Label::Other {
            None
        } else {
            let sel = select_documents(scored, gold, class)?;
            Some(document_accuracy(&sel, gold, class, 1e-6, level)?)
        };
        classes.push(ClassReport {
            class,
            recall: m.recall,
            precision: m.precision,
            auroc,
            auroc_ci_low: ci.map(|c| c.0),
            auroc_ci_high: ci.map(|c| c.1),
            document_accuracy,
        });
    }
    Ok(EvalReport {
        classes,
        comparisons: Vec::new(),
    })
}

fn same_instances(a: &[ScoredInstance], b: &[ScoredInstance]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            let (x, y) = (&x.instance, &y.instance);
            x.report_id == y.report_id && x.page == y.page && x.ordinal == y.ordinal && x.label == y.label
        })
}

/// Paired DeLong test on one class's AUROC; `p_adjusted` starts equal to `p_raw`.
pub fn compare_auroc(pair: &str, class: Label, a: &[ScoredInstance], b: &[ScoredInstance]) -> Result<Comparison> {
    if !same_instances(a, b) {
        return Err(Error::invalid(format!("`{pair}`: models were scored on different instances")));
    }
    let (sa, labels) = binary_scores(a, class);
    let (sb, _) = binary_scores(b, class);
    let r = delong(&sa, &sb, &labels)?;
    Ok(Comparison {
        pair: pair.to_string(),
        metric: format!("auroc_{class}"),
        statistic: r.z,
        p_raw: r.p_two_sided,
        p_adjusted: r.p_two_sided,
    })
}

/// Chi-square test on two document accuracies.
pub fn compare_document_accuracy(pair: &str, class: Label, a: &DocumentAccuracy, b: &DocumentAccuracy) -> Result<Comparison> {
    let c = chi_square_2x2(a.correct, a.total, b.correct, b.total)?;
    Ok(Comparison {
        pair: pair.to_string(),
        metric: format!("document_accuracy_{class}"),
        statistic: c.statistic,
        p_raw: c.p,
        p_adjusted: c.p,
    })
}

/// Bonferroni over the whole batch.
pub fn adjust_comparisons(comparisons: &mut [Comparison]) {
    let raw: Vec<f64> = comparisons.iter().map(|c| c.p_raw).collect();
    for (c, p) in comparisons.iter_mut().zip(bonferroni(&raw)) {
        c.p_adjusted = p;
    }
}

/// `pair,metric,statistic,p_raw,p_adjusted`
pub fn write_comparisons_csv<W: Write>(comparisons: &[Comparison], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in comparisons {
        w.serialize(c)?;
    }
    if comparisons.is_empty() {
        w.write_record(["pair", "metric", "statistic", "p_raw", "p_adjusted"])?;
    }
    w.flush()?;
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>10} {:>24} {:>30}",
            "Class", "Recall", "Precision", "AUROC (CI)", "Document accuracy (CI)"
        );
        for c in &self.classes {
            let auroc = match (c.auroc, c.auroc_ci_low, c.auroc_ci_high) {
                (Some(a), Some(lo), Some(hi)) => format!("{a:.4} ({lo:.4}-{hi:.4})"),
                _ => "n/a".to_string(),
            };
            let doc = c.document_accuracy.map_or_else(
                || "-".to_string(),
                |d| format!("{} ({}-{})", pct(Some(d.accuracy)), pct(Some(d.ci_low)), pct(Some(d.ci_high))),
            );
            let _ = writeln!(
                out,
                "{:<6} {:>8} {:>10} {:>24} {:>30}",
                c.class.as_str(),
                pct(c.recall),
                pct(c.precision),
                auroc,
                doc
            );
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<32} {:<26} {:>10} {:>10} {:>10}",
                "Pair", "Metric", "Statistic", "p", "p (adj.)"
            );
            for c in &self.comparisons {
                let _ = writeln!(
                    out,
                    "{:<32} {:<26} {:>10.4} {:>10.4} {:>10.4}",
                    c.pair, c.metric, c.statistic, c.p_raw, c.p_adjusted
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn inst(report: &str, page: u32, ordinal: u32, value: f64, label: Label) -> Instance {
        Instance {
            report_id: report.into(),
            left: 0,
            top: 0,
            width: 1,
            height: 1,
            page,
            numeric_value: value,
            segment: String::new(),
            label,
            ordinal,
        }
    }

    fn scored(label: Label, prob: [f64; 3]) -> ScoredInstance {
        ScoredInstance::new(inst("r", 1, 0, 1.0, label), prob).unwrap()
    }

    #[test]
    fn hand_counted_rates() {
        let hit = [0.8, 0.1, 0.1];
        let miss = [0.1, 0.1, 0.8];
        let mut v = vec![scored(Label::Ahi, hit); 3];
        v.push(scored(Label::Other, hit));
        v.extend(vec![scored(Label::Ahi, miss); 2]);
        let m = segment_metrics(&v, Label::Ahi);
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.recall, Some(0.6));
    }

    #[test]
    fn undefined_precision() {
        let v = vec![scored(Label::Sao2, [0.1, 0.1, 0.8])];
        let m = segment_metrics(&v, Label::Sao2);
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
    }

    #[test]
    fn argmax_ties_prefer_ahi() {
        assert_eq!(scored(Label::Other, [0.4, 0.4, 0.2]).predicted(), Label::Ahi);
        assert_eq!(scored(Label::Other, [0.2, 0.4, 0.4]).predicted(), Label::Sao2);
    }

    #[test]
    fn off_simplex_rejected() {
        assert!(ScoredInstance::new(inst("r", 1, 0, 1.0, Label::Ahi), [0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn tie_goes_to_first_page() {
        let a = ScoredInstance::new(inst("r", 2, 0, 5.0, Label::Other), [0.5, 0.2, 0.3]).unwrap();
        let b = ScoredInstance::new(inst("r", 1, 9, 7.0, Label::Other), [0.5, 0.2, 0.3]).unwrap();
        let pair = [a, b];
        let picked = select_document_value(&pair, Label::Ahi).unwrap();
        assert_eq!(picked.instance.numeric_value, 7.0);
        assert!(select_document_value(&[], Label::Ahi).is_err());
    }
}
