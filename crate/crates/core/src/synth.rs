//! Synthetic sleep-report word streams with known gold values.
//!
//! Reports are assembled from sentence templates (targets, numeric
//! distractors and fillers), laid out on a 300 dpi letter-size pixel grid and
//! optionally passed through a character-confusion noise model.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deid::{DeidLookup, LookupTable};
use crate::error::{Error, Result};
use crate::ocr::{write_word_table, OrderKey, PageWords, WordBox};
use crate::segment::GoldRecord;
use crate::util::rng_for;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LOOKUP_FILE: &str = "lookup.csv";

/// A sentence pattern; `{ahi}` and `{sao2}` mark the target values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub text: String,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Template {
    pub fn new(text: &str) -> Self {
        Self {
            text: text.to_string(),
            weight: 1.0,
        }
    }

    fn has_ahi(&self) -> bool {
        self.text.contains("{ahi}")
    }

    fn has_sao2(&self) -> bool {
        self.text.contains("{sao2}")
    }
}

pub fn default_templates() -> Vec<Template> {
    [
        "The total APNEA/HYPOPNEA INDEX (AHI) was {ahi} .",
        "The apnea-hypopnea index was {ahi} events per hour of sleep .",
        "Overall AHI was {ahi} per hour.",
        "The lowest oxygen saturation (SaO2) was {sao2} % .",
        "Minimum SaO2 during sleep was {sao2}% .",
        "The AHI was {ahi} and the SaO2 nadir was {sao2} % .",
    ]
    .into_iter()
    .map(Template::new)
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_reports: usize,
    /// Inclusive page-count range.
    pub pages_per_report: (u32, u32),
    pub templates: Vec<Template>,
    /// Distractor numeric tokens per page.
    pub distractor_density: f64,
    /// Per-character substitution probability.
    pub noise_rate: f64,
    /// Chance of an extra impression sentence restating the targets.
    pub repeat_prob: f64,
    /// Chance that a distractor number copies the gold AHI.
    pub collision_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_reports: 200,
            pages_per_report: (1, 4),
            templates: default_templates(),
            distractor_density: 4.0,
            noise_rate: 0.0,
            repeat_prob: 0.3,
            collision_prob: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reports == 0 {
            return Err(Error::invalid("n_reports must be >= 1"));
        }
        let (lo, hi) = self.pages_per_report;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("bad page range {lo}..={hi}")));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::invalid(format!("noise_rate {} outside [0, 1)", self.noise_rate)));
        }
        for (name, p) in [("repeat_prob", self.repeat_prob), ("collision_prob", self.collision_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} {p} outside [0, 1]")));
            }
        }
        if !(self.distractor_density >= 0.0) {
            return Err(Error::invalid("distractor_density must be >= 0"));
        }
        if self.templates.iter().any(|t| !(t.weight > 0.0)) {
            return Err(Error::invalid("template weights must be > 0"));
        }
        if !self.templates.iter().any(Template::has_ahi) || !self.templates.iter().any(Template::has_sao2) {
            return Err(Error::invalid("templates must mention both {ahi} and {sao2}"));
        }
        Ok(())
    }
}

/// Substitutions a scanner plausibly makes for `c`.
pub fn confusions(c: char) -> &'static [char] {
    match c {
        'l' => &['!', '|'],
        'S' => &['5'],
        '5' => &['S'],
        'O' => &['0'],
        '0' => &['O'],
        'i' => &['1'],
        _ => &[],
    }
}

/// Per character, with probability `rate`, swaps in a confusion. Boxes, order
/// and token count are untouched.
pub fn inject_ocr_noise(words: &PageWords, rate: f64, seed: u64) -> PageWords {
    let mut out = words.clone();
    if rate <= 0.0 {
        return out;
    }
    let mut rng = rng_for(seed, &format!("noise:{}", words.page));
    for w in &mut out.words {
        w.text = w
            .text
            .chars()
            .map(|c| {
                let subs = confusions(c);
                if !subs.is_empty() && rng.gen::<f64>() < rate {
                    subs[rng.gen_range(0..subs.len())]
                } else {
                    c
                }
            })
            .collect();
    }
    out
}

/// One generated report.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthReport {
    pub report_id: String,
    pub pages: Vec<PageWords>,
    pub gold: GoldRecord,
    pub lookup: DeidLookup,
}

const FIRST_NAMES: [&str; 12] = [
    "JOHN", "MARY", "ROBERT", "LINDA", "JAMES", "SUSAN", "DAVID", "KAREN", "WEI", "MARIA", "AHMED", "PRIYA",
];
const LAST_NAMES: [&str; 12] = [
    "SMITH", "JOHNSON", "GARCIA", "NGUYEN", "BROWN", "MILLER", "DAVIS", "LOPEZ", "CHEN", "PATEL", "WILSON", "KIM",
];

/// `{int:a-b}` or `{dec:a-b}` slots.
const DISTRACTORS: [&str; 9] = [
    "There were {int:20-300} hypopneas and {int:0-150} obstructive apneas .",
    "The apnea index was {dec:0-30} and the hypopnea index was {dec:0-60} .",
    "Sleep efficiency was {dec:50-99} % with a total sleep time of {int:180-480} minutes .",
    "Mean heart rate was {int:50-100} beats per minute .",
    "The patient had {int:0-60} respiratory event related arousals (RERA) .",
    "Periodic limb movement index was {dec:0-40} per hour .",
    "Time spent below 90 % saturation was {dec:0-60} minutes .",
    "Baseline oxygen saturation while awake was {int:90-99} % .",
    "Sleep latency was {dec:1-60} minutes and REM latency was {int:60-200} minutes .",
];

const FILLERS: [&str; 12] = [
    "The patient was studied with standard overnight polysomnography .",
    "Snoring was noted in all sleep positions .",
    "Recommend clinical correlation and follow up in the sleep clinic .",
    "EEG EOG EMG ECG airflow effort and oximetry were monitored .",
    "No significant cardiac arrhythmias were observed .",
    "Respiratory events were scored using the AASM rules .",
    "The study was technically adequate and well tolerated by the patient .",
    "Sleep architecture was fragmented with frequent awakenings during the night .",
    "Please see the attached summary for the full hypnogram and event listing .",
    "The patient reports daytime sleepiness and loud snoring per bed partner .",
    "Positional therapy and weight loss were discussed as treatment options .",
    "A follow up titration study may be considered if symptoms persist .",
];

fn format_date(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{:02}/{:02}/{}",
        rng.gen_range(1..=12),
        rng.gen_range(1..=28),
        rng.gen_range(1990..=2023)
    )
}

struct Draw {
    ahi: f64,
    ahi_text: String,
    sao2: f64,
    sao2_text: String,
}

fn draw_values(rng: &mut ChaCha8Rng) -> Draw {
    let ahi_tenths = rng.gen_range(5..=1200u32);
    let ahi = ahi_tenths as f64 / 10.0;
    let (sao2, sao2_text) = if rng.gen_bool(0.5) {
        let v = rng.gen_range(60..=100u32);
        (v as f64, v.to_string())
    } else {
        let t = rng.gen_range(600..=1000u32);
        (t as f64 / 10.0, format!("{:.1}", t as f64 / 10.0))
    };
    Draw {
        ahi,
        ahi_text: format!("{ahi:.1}"),
        sao2,
        sao2_text,
    }
}

/// Fills `{int:a-b}` / `{dec:a-b}` slots; returns the sentence and how many
/// numbers it holds.
fn fill_distractor(pattern: &str, draw: &Draw, collision_prob: f64, rng: &mut ChaCha8Rng) -> (String, usize) {
    let mut out = Vec::new();
    let mut numbers = 0;
    for tok in pattern.split_whitespace() {
        let Some(spec) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) else {
            if tok.chars().any(|c| c.is_ascii_digit()) {
                numbers += 1;
            }
            out.push(tok.to_string());
            continue;
        };
        let (kind, range) = spec.split_once(':').expect("slot kind");
        let (a, b) = range.split_once('-').expect("slot range");
        let (a, b): (u32, u32) = (a.parse().expect("slot lo"), b.parse().expect("slot hi"));
        numbers += 1;
        if rng.gen::<f64>() < collision_prob {
            out.push(draw.ahi_text.clone());
            continue;
        }
        out.push(match kind {
            "int" => rng.gen_range(a..=b).to_string(),
            _ => format!("{:.1}", rng.gen_range(a * 10..=b * 10) as f64 / 10.0),
        });
    }
    (out.join(" "), numbers)
}

fn fill_target(template: &Template, draw: &Draw) -> String {
    template
        .text
        .replace("{ahi}", &draw.ahi_text)
        .replace("{sao2}", &draw.sao2_text)
}

fn pick_weighted<'a>(templates: &'a [Template], rng: &mut ChaCha8Rng) -> &'a Template {
    templates
        .choose_weighted(rng, |t| t.weight)
        .expect("validated non-empty positive weights")
}

/// Target sentences covering both values.
fn target_sentences(templates: &[Template], draw: &Draw, rng: &mut ChaCha8Rng) -> Vec<String> {
    let (mut ahi, mut sao2) = (false, false);
    let mut out = Vec::new();
    while !(ahi && sao2) {
        let t = pick_weighted(templates, rng);
        if (t.has_ahi() && !ahi) || (t.has_sao2() && !sao2) {
            ahi |= t.has_ahi();
            sao2 |= t.has_sao2();
            out.push(fill_target(t, draw));
        }
    }
    out
}

const PAGE_LEFT: u32 = 150;
const PAGE_RIGHT: u32 = 2400;
const CHAR_W: u32 = 24;
const SPACE_W: u32 = 24;
const LINE_H: u32 = 50;
const TEXT_H: u32 = 32;

/// Lays sentences out as paragraphs (one block per page) with wrapping.
fn layout(page: u32, paragraphs: &[String], rng: &mut ChaCha8Rng) -> PageWords {
    let mut words = Vec::new();
    let mut top = 150;
    for (p, para) in paragraphs.iter().enumerate() {
        let mut left = PAGE_LEFT;
        let mut line = 1;
        let mut word = 0;
        for tok in para.split_whitespace() {
            let width = CHAR_W * tok.chars().count() as u32;
            if left + width > PAGE_RIGHT && word > 0 {
                line += 1;
                word = 0;
                left = PAGE_LEFT;
                top += LINE_H;
            }
            word += 1;
            words.push(WordBox {
                text: tok.to_string(),
                left,
                top,
                width,
                height: TEXT_H,
                page,
                order_key: OrderKey::new(1, p as u32 + 1, line, word),
                confidence: rng.gen_range(80.0..97.0f64).round(),
            });
            left += width + SPACE_W;
        }
        top += LINE_H + 20;
    }
    PageWords::new(page, words)
}

/// The noiseless report for `(config.seed, report_id)`.
pub fn generate_clean_report(config: &SynthConfig, report_id: &str) -> Result<SynthReport> {
    config.validate()?;
    let mut rng = rng_for(config.seed, &format!("report:{report_id}"));
    let draw = draw_values(&mut rng);
    let (lo, hi) = config.pages_per_report;
    let n_pages = rng.gen_range(lo..=hi);

    let first = *FIRST_NAMES.choose(&mut rng).expect("names");
    let last = *LAST_NAMES.choose(&mut rng).expect("names");
    let mrn = rng.gen_range(10_000_000..100_000_000u64).to_string();
    let physician = *LAST_NAMES.choose(&mut rng).expect("names");

    let mut pages: Vec<Vec<String>> = vec![Vec::new(); n_pages as usize];
    pages[0].push("SLEEP DISORDERS CENTER POLYSOMNOGRAPHY REPORT".into());
    pages[0].push(format!(
        "Patient: {first} {last} MRN: {mrn} DOB: {}",
        format_date(&mut rng)
    ));
    pages[0].push(format!(
        "Study date: {} Referring physician: Dr. {physician}",
        format_date(&mut rng)
    ));

    // Body sentences, each pinned to a page, then shuffled within the page.
    let mut body: Vec<Vec<String>> = vec![Vec::new(); n_pages as usize];
    for s in target_sentences(&config.templates, &draw, &mut rng) {
        body[rng.gen_range(0..n_pages as usize)].push(s);
    }
    if rng.gen::<f64>() < config.repeat_prob {
        body[n_pages as usize - 1].push(format!(
            "IMPRESSION: obstructive sleep apnea with AHI {} and oxygen nadir {} % .",
            draw.ahi_text, draw.sao2_text
        ));
    }
    for page in body.iter_mut() {
        let mut numbers = 0.0;
        while numbers < config.distractor_density {
            let pattern = DISTRACTORS.choose(&mut rng).expect("distractors");
            let (s, n) = fill_distractor(pattern, &draw, config.collision_prob, &mut rng);
            page.push(s);
            numbers += n as f64;
        }
        for _ in 0..rng.gen_range(2..=5) {
            page.push(FILLERS.choose(&mut rng).expect("fillers").to_string());
        }
        page.shuffle(&mut rng);
    }
    for (k, (head, sentences)) in pages.iter_mut().zip(body).enumerate() {
        head.extend(sentences);
        head.push(format!("Report page {} of {n_pages}", k + 1));
    }

    let pages = pages
        .iter()
        .enumerate()
        .map(|(k, paras)| layout(k as u32 + 1, paras, &mut rng))
        .collect();
    Ok(SynthReport {
        report_id: report_id.to_string(),
        pages,
        gold: GoldRecord {
            report_id: report_id.to_string(),
            ahi_values: vec![draw.ahi],
            sao2_values: vec![draw.sao2],
        },
        lookup: DeidLookup {
            report_id: report_id.to_string(),
            patient_name_tokens: vec![first.to_string(), last.to_string()],
            mrn_values: vec![mrn],
        },
    })
}

/// [`generate_clean_report`] followed by OCR-style noise at `config.noise_rate`.
pub fn generate_report(config: &SynthConfig, report_id: &str) -> Result<SynthReport> {
    let mut report = generate_clean_report(config, report_id)?;
    if config.noise_rate > 0.0 {
        let noise_seed = rng_for(config.seed, &format!("noise:{report_id}")).gen();
        for p in &mut report.pages {
            *p = inject_ocr_noise(p, config.noise_rate, noise_seed);
        }
    }
    Ok(report)
}

pub fn report_id(index: usize) -> String {
    format!("rpt{:05}", index + 1)
}

/// One manifest line. Page paths are relative to the manifest's directory
/// on disk and absolute once read back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub report_id: String,
    pub pages: Vec<PathBuf>,
    pub gold_ahi: Vec<f64>,
    pub gold_sao2: Vec<f64>,
}

impl ManifestEntry {
    pub fn gold(&self) -> GoldRecord {
        GoldRecord {
            report_id: self.report_id.clone(),
            ahi_values: self.gold_ahi.clone(),
            sao2_values: self.gold_sao2.clone(),
        }
    }
}

/// Writes word tables, `manifest.jsonl` and `lookup.csv` under `dir`.
pub fn write_corpus(config: &SynthConfig, dir: &Path) -> Result<Vec<ManifestEntry>> {
    config.validate()?;
    let reports: Vec<SynthReport> = (0..config.n_reports)
        .into_par_iter()
        .map(|i| generate_report(config, &report_id(i)))
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(reports.len());
    let mut lookup = LookupTable::default();
    for r in reports {
        let rel_dir = PathBuf::from("pages").join(&r.report_id);
        fs::create_dir_all(dir.join(&rel_dir))?;
        let mut pages = Vec::with_capacity(r.pages.len());
        for p in &r.pages {
            let rel = rel_dir.join(format!("page_{}.tsv", p.page));
            fs::write(dir.join(&rel), write_word_table(std::slice::from_ref(p)))?;
            pages.push(rel);
        }
        entries.push(ManifestEntry {
            report_id: r.report_id.clone(),
            pages,
            gold_ahi: r.gold.ahi_values,
            gold_sao2: r.gold.sao2_values,
        });
        lookup.insert(r.lookup)?;
    }
    write_manifest(&entries, &dir.join(MANIFEST_FILE))?;
    lookup.write_csv(fs::File::create(dir.join(LOOKUP_FILE))?)?;
    Ok(entries)
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a manifest, resolving relative page paths against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut e: ManifestEntry = serde_json::from_str(&line)
            .map_err(|err| Error::parse(format!("{} line {}: {err}", path.display(), n + 1)))?;
        for p in &mut e.pages {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = SynthConfig {
            noise_rate: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let only_ahi = SynthConfig {
            templates: vec![Template::new("AHI {ahi}")],
            ..Default::default()
        };
        assert!(only_ahi.validate().is_err());
    }

    #[test]
    fn distractor_slots_filled() {
        let mut rng = rng_for(1, "t");
        let draw = draw_values(&mut rng);
        let (s, n) = fill_distractor(DISTRACTORS[6], &draw, 0.0, &mut rng);
        assert_eq!(n, 2);
        assert!(!s.contains('{'));
    }
}
