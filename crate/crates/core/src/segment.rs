//! Numeric candidates, context windows and gold labels.
//!
//! Every token made only of digits, `.`, `,` and `%` (with at least one digit)
//! is a candidate. Each candidate becomes an [`Instance`] carrying its word box,
//! parsed value and the surrounding window of up to ten words per side.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocr::PageWords;

pub const DEFAULT_RADIUS: usize = 10;
pub const DEFAULT_EPSILON: f64 = 1e-6;

pub const INSTANCE_CSV_HEADER: [&str; 9] = [
    "report_id",
    "left",
    "top",
    "width",
    "height",
    "page",
    "numeric_value",
    "segment",
    "label",
];

/// Three-way class; the order is the column order of every probability triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "AHI")]
    Ahi,
    #[serde(rename = "SaO2")]
    Sao2,
    #[serde(rename = "Other")]
    Other,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Ahi, Label::Sao2, Label::Other];
    /// The extraction targets.
    pub const TARGETS: [Label; 2] = [Label::Ahi, Label::Sao2];

    pub fn index(self) -> usize {
        match self {
            Label::Ahi => 0,
            Label::Sao2 => 1,
            Label::Other => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ahi => "AHI",
            Label::Sao2 => "SaO2",
            Label::Other => "Other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AHI" => Ok(Label::Ahi),
            "SaO2" | "SaO₂" => Ok(Label::Sao2),
            "Other" => Ok(Label::Other),
            _ => Err(Error::parse(format!("unknown label `{s}`"))),
        }
    }
}

/// One numeric candidate (a row of the analytical table).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub report_id: String,
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
    pub page: u32,
    pub numeric_value: f64,
    pub segment: String,
    pub label: Label,
    /// Reading-order rank of the candidate within its report.
    #[serde(default)]
    pub ordinal: u32,
}

/// Recorded target values for one report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub report_id: String,
    pub ahi_values: Vec<f64>,
    pub sao2_values: Vec<f64>,
}

impl GoldRecord {
    pub fn values(&self, class: Label) -> &[f64] {
        match class {
            Label::Ahi => &self.ahi_values,
            Label::Sao2 => &self.sao2_values,
            Label::Other => &[],
        }
    }
}

/// A candidate that matched the pattern but did not parse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DroppedCandidate {
    pub report_id: String,
    pub page: u32,
    pub word_index: usize,
    pub token: String,
}

/// A value that matched both targets; it was labelled AHI.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelCollision {
    pub report_id: String,
    pub page: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnparseableCandidate(pub String);

impl fmt::Display for UnparseableCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unparseable numeric candidate `{}`", self.0)
    }
}

impl std::error::Error for UnparseableCandidate {}

pub fn is_candidate(token: &str) -> bool {
    !token.is_empty()
        && token.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '%'))
        && token.chars().any(|c| c.is_ascii_digit())
}

/// Indices (reading order) of candidate tokens on a page.
pub fn find_candidates(words: &PageWords) -> Vec<usize> {
    words
        .words
        .iter()
        .enumerate()
        .filter(|(_, w)| is_candidate(&w.text))
        .map(|(i, _)| i)
        .collect()
}

/// Drops `%` and `,` and trailing dots; a single remaining dot is the decimal point.
pub fn parse_numeric(token: &str) -> std::result::Result<f64, UnparseableCandidate> {
    let cleaned: String = token.chars().filter(|c| !matches!(c, '%' | ',')).collect();
    let core = cleaned.trim_end_matches('.');
    if core.is_empty() || core.matches('.').count() > 1 {
        return Err(UnparseableCandidate(token.to_string()));
    }
    core.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| UnparseableCandidate(token.to_string()))
}

/// Counts toward the window radius; lone punctuation such as "." does not.
pub fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Up to `radius` words on each side of `idx`, never crossing the page.
/// Punctuation-only tokens between those words are kept but not counted.
pub fn extract_segment(words: &PageWords, idx: usize, radius: usize) -> String {
    let toks = &words.words;
    let mut lo = idx;
    let mut seen = 0;
    while lo > 0 && seen < radius {
        lo -= 1;
        seen += usize::from(is_word(&toks[lo].text));
    }
    while lo < idx && !is_word(&toks[lo].text) {
        lo += 1;
    }
    let mut hi = idx;
    seen = 0;
    while hi + 1 < toks.len() && seen < radius {
        hi += 1;
        seen += usize::from(is_word(&toks[hi].text));
    }
    while hi > idx && !is_word(&toks[hi].text) {
        hi -= 1;
    }
    toks[lo..=hi].iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ")
}

/// Candidates of one report, labelled `Other` until [`assign_labels`] runs.
pub fn build_instances(
    report_id: &str,
    pages: &[PageWords],
    radius: usize,
) -> (Vec<Instance>, Vec<DroppedCandidate>) {
    let mut instances = Vec::new();
    let mut dropped = Vec::new();
    let mut ordinal = 0u32;
    for page in pages {
        for idx in find_candidates(page) {
            let w = &page.words[idx];
            match parse_numeric(&w.text) {
                Ok(value) => {
                    instances.push(Instance {
                        report_id: report_id.to_string(),
                        left: w.left,
                        top: w.top,
                        width: w.width,
                        height: w.height,
                        page: page.page,
                        numeric_value: value,
                        segment: extract_segment(page, idx, radius),
                        label: Label::Other,
                        ordinal,
                    });
                    ordinal += 1;
                }
                Err(e) => {
                    log::info!("{report_id} page {} word {idx}: {e}; dropped", page.page);
                    dropped.push(DroppedCandidate {
                        report_id: report_id.to_string(),
                        page: page.page,
                        word_index: idx,
                        token: w.text.clone(),
                    });
                }
            }
        }
    }
    (instances, dropped)
}

/// Labels each instance by value match against the gold record; AHI wins ties.
pub fn assign_labels(
    mut instances: Vec<Instance>,
    gold: &GoldRecord,
    epsilon: f64,
) -> (Vec<Instance>, Vec<LabelCollision>) {
    let near = |v: f64, set: &[f64]| set.iter().any(|g| (v - g).abs() <= epsilon);
    let mut collisions = Vec::new();
    for inst in &mut instances {
        let ahi = near(inst.numeric_value, &gold.ahi_values);
        let sao2 = near(inst.numeric_value, &gold.sao2_values);
        inst.label = match (ahi, sao2) {
            (true, both) => {
                if both {
                    log::warn!(
                        "{}: value {} matches both AHI and SaO2; labelled AHI",
                        inst.report_id,
                        inst.numeric_value
                    );
                    collisions.push(LabelCollision {
                        report_id: inst.report_id.clone(),
                        page: inst.page,
                        value: inst.numeric_value,
                    });
                }
                Label::Ahi
            }
            (false, true) => Label::Sao2,
            (false, false) => Label::Other,
        };
    }
    (instances, collisions)
}

#[derive(Serialize, Deserialize)]
struct InstanceRow {
    report_id: String,
    left: u32,
    top: u32,
    width: u32,
    height: u32,
    page: u32,
    numeric_value: f64,
    segment: String,
    label: Label,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        quoted(s)
    } else {
        s.to_string()
    }
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Writes the instance table (`report_id,left,top,width,height,page,numeric_value,segment,label`),
/// segment always quoted. Rows must be grouped by report in reading order; that
/// order becomes the ordinal on reload.
pub fn write_instances_csv<W: Write>(instances: &[Instance], mut writer: W) -> Result<()> {
    writeln!(writer, "{}", INSTANCE_CSV_HEADER.join(","))?;
    for i in instances {
        writeln!(
            writer,
            "{},{},{},{},{},{},{:?},{},{}",
            csv_field(&i.report_id),
            i.left,
            i.top,
            i.width,
            i.height,
            i.page,
            i.numeric_value,
            quoted(&i.segment),
            i.label
        )?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_instances_csv<R: Read>(reader: R) -> Result<Vec<Instance>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != INSTANCE_CSV_HEADER {
        return Err(Error::parse(format!(
            "instance table header must be `{}`",
            INSTANCE_CSV_HEADER.join(",")
        )));
    }
    let mut out: Vec<Instance> = Vec::new();
    let mut ordinal = 0u32;
    for row in rdr.deserialize::<InstanceRow>() {
        let row = row?;
        if out.last().is_some_and(|p| p.report_id != row.report_id) {
            ordinal = 0;
        }
        out.push(Instance {
            report_id: row.report_id,
            left: row.left,
            top: row.top,
            width: row.width,
            height: row.height,
            page: row.page,
            numeric_value: row.numeric_value,
            segment: row.segment,
            label: row.label,
            ordinal,
        });
        ordinal += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates() {
        let page = PageWords::from_tokens(1, &["AHI", "was", "19.5", "."]);
        assert_eq!(find_candidates(&page), vec![2]);
        let page = PageWords::from_tokens(1, &["[DATE]", "[MRN]"]);
        assert!(find_candidates(&page).is_empty());
        let page = PageWords::from_tokens(1, &["88%", "120", "1,200"]);
        assert_eq!(find_candidates(&page), vec![0, 1, 2]);
        assert!(!is_candidate("%"));
        assert!(!is_candidate(",."));
        assert!(!is_candidate("1/2"));
    }

    #[test]
    fn numeric_parsing() {
        assert_eq!(parse_numeric("19.5"), Ok(19.5));
        assert_eq!(parse_numeric("120"), Ok(120.0));
        assert_eq!(parse_numeric("88%"), Ok(88.0));
        assert_eq!(parse_numeric("1,200"), Ok(1200.0));
        assert_eq!(parse_numeric("1.3."), Ok(1.3));
        assert_eq!(parse_numeric(".5"), Ok(0.5));
        assert!(parse_numeric("1.2.3").is_err());
    }

    #[test]
    fn segment_windows() {
        let toks: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = toks.iter().map(String::as_str).collect();
        let page = PageWords::from_tokens(1, &refs);
        assert_eq!(extract_segment(&page, 0, 10).split(' ').count(), 11);
        assert_eq!(extract_segment(&page, 15, 10).split(' ').count(), 21);
        assert_eq!(extract_segment(&page, 29, 10).split(' ').count(), 11);
        let single = PageWords::from_tokens(2, &["42"]);
        assert_eq!(extract_segment(&single, 0, 10), "42");
        let punct = PageWords::from_tokens(1, &[".", "a", ".", "b", "7", ".", "c", "d", "."]);
        assert_eq!(extract_segment(&punct, 4, 2), "a . b 7 . c d");
        assert_eq!(extract_segment(&punct, 4, 1), "b 7 . c");
    }

    #[test]
    fn unparseable_dropped() {
        let page = PageWords::from_tokens(1, &["1.2.3", "7"]);
        let (inst, dropped) = build_instances("r", &[page], 10);
        assert_eq!(inst.len(), 1);
        assert_eq!(dropped[0].token, "1.2.3");
        assert_eq!(dropped[0].word_index, 0);
    }

    fn inst(v: f64) -> Instance {
        Instance {
            report_id: "r".into(),
            left: 0,
            top: 0,
            width: 1,
            height: 1,
            page: 1,
            numeric_value: v,
            segment: v.to_string(),
            label: Label::Other,
            ordinal: 0,
        }
    }

    #[test]
    fn labels() {
        let gold = GoldRecord {
            report_id: "r".into(),
            ahi_values: vec![19.5],
            sao2_values: vec![88.0],
        };
        let (out, coll) = assign_labels(
            vec![inst(19.5), inst(26.0), inst(88.0), inst(88.0), inst(88.0)],
            &gold,
            DEFAULT_EPSILON,
        );
        let labels: Vec<Label> = out.iter().map(|i| i.label).collect();
        assert_eq!(
            labels,
            vec![Label::Ahi, Label::Other, Label::Sao2, Label::Sao2, Label::Sao2]
        );
        assert!(coll.is_empty());

        let both = GoldRecord {
            report_id: "r".into(),
            ahi_values: vec![90.0],
            sao2_values: vec![90.0],
        };
        let (out, coll) = assign_labels(vec![inst(90.0)], &both, DEFAULT_EPSILON);
        assert_eq!(out[0].label, Label::Ahi);
        assert_eq!(coll.len(), 1);
    }

    #[test]
    fn csv_round_trip_keeps_order() {
        let mut a = inst(19.5);
        a.segment = "the total, \"quoted\" index".into();
        let mut b = inst(26.0);
        b.ordinal = 1;
        let mut c = inst(3.0);
        c.report_id = "s".into();
        let rows = vec![a, b, c];
        let mut buf = Vec::new();
        write_instances_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("report_id,left,top,width,height,page,numeric_value,segment,label\n"));
        let back = read_instances_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }
}
