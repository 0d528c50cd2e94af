//! Scrubbing of patient names, medical record numbers and dates from OCR words.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocr::PageWords;

pub const NAME_PLACEHOLDER: &str = "[PATNAME]";
pub const MRN_PLACEHOLDER: &str = "[MRN]";
pub const DATE_PLACEHOLDER: &str = "[DATE]";

/// Identifying tokens for one report.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeidLookup {
    pub report_id: String,
    pub patient_name_tokens: Vec<String>,
    pub mrn_values: Vec<String>,
}

/// What to do when a report has no lookup row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingLookupPolicy {
    Strict,
    /// Only dates are scrubbed.
    #[default]
    Lenient,
}

/// Lookup rows keyed by report id.
#[derive(Clone, Debug, Default)]
pub struct LookupTable {
    rows: BTreeMap<String, DeidLookup>,
}

impl LookupTable {
    pub fn insert(&mut self, lookup: DeidLookup) -> Result<()> {
        if self.rows.contains_key(&lookup.report_id) {
            return Err(Error::invalid(format!(
                "duplicate lookup row for report `{}`",
                lookup.report_id
            )));
        }
        self.rows.insert(lookup.report_id.clone(), lookup);
        Ok(())
    }

    pub fn get(&self, report_id: &str) -> Option<&DeidLookup> {
        self.rows.get(report_id)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `report_id,name_tokens,mrn_values`; multi-values are `;`-separated.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["report_id", "name_tokens", "mrn_values"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(format!(
                "lookup header must be `{}`, got `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let split = |s: &str| -> Vec<String> {
            s.split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        };
        let mut table = LookupTable::default();
        for row in rdr.records() {
            let row = row?;
            table.insert(DeidLookup {
                report_id: row[0].trim().to_string(),
                patient_name_tokens: split(&row[1]),
                mrn_values: split(&row[2]),
            })?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["report_id", "name_tokens", "mrn_values"])?;
        for row in self.rows.values() {
            w.write_record([
                row.report_id.as_str(),
                &row.patient_name_tokens.join(";"),
                &row.mrn_values.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn date_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d{1,2}/\d{1,2}/(\d{2}|\d{4})$").expect("valid regex"))
}

fn strip_trailing_punct(token: &str) -> &str {
    token.trim_end_matches(|c: char| c.is_ascii_punctuation())
}

pub fn is_date_token(token: &str) -> bool {
    date_pattern().is_match(strip_trailing_punct(token))
}

/// Replaces name, MRN and date tokens in place of their text; boxes and order
/// are untouched. Matching is whole-token and case-insensitive.
pub fn deidentify(words: &PageWords, lookup: &DeidLookup) -> PageWords {
    let names: HashSet<String> = lookup
        .patient_name_tokens
        .iter()
        .map(|t| strip_trailing_punct(t).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    let mrns: HashSet<String> = lookup
        .mrn_values
        .iter()
        .map(|t| strip_trailing_punct(t).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect();
    scrub(words, &names, &mrns)
}

fn scrub(words: &PageWords, names: &HashSet<String>, mrns: &HashSet<String>) -> PageWords {
    let mut out = words.clone();
    for w in &mut out.words {
        let key = strip_trailing_punct(&w.text).to_lowercase();
        if names.contains(&key) || names.contains(&w.text.to_lowercase()) {
            w.text = NAME_PLACEHOLDER.to_string();
        } else if mrns.contains(&key) || mrns.contains(&w.text.to_lowercase()) {
            w.text = MRN_PLACEHOLDER.to_string();
        } else if is_date_token(&w.text) {
            w.text = DATE_PLACEHOLDER.to_string();
        }
    }
    out
}

/// De-identifies every page of a report, resolving its lookup row under `policy`.
pub fn deidentify_report(
    report_id: &str,
    pages: &[PageWords],
    table: &LookupTable,
    policy: MissingLookupPolicy,
) -> Result<Vec<PageWords>> {
    match (table.get(report_id), policy) {
        (Some(lookup), _) => Ok(pages.iter().map(|p| deidentify(p, lookup)).collect()),
        (None, MissingLookupPolicy::Strict) => Err(Error::MissingLookup(report_id.to_string())),
        (None, MissingLookupPolicy::Lenient) => {
            let empty = HashSet::new();
            Ok(pages.iter().map(|p| scrub(p, &empty, &empty)).collect())
        }
    }
}
