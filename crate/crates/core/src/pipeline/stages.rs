//! Per-report stages up to labelled instances: preprocess → OCR (or a stored
//! word table) → de-identification → segmentation → labelling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::deid::{deidentify_report, LookupTable, MissingLookupPolicy};
use crate::error::{Error, Result};
use crate::image_prep::{apply_recipe, GrayImage, PrepRecipe};
use crate::ocr::{load_word_table, parse_word_table, run_ocr, write_word_table, OcrEngine, PageWords};
use crate::segment::{assign_labels, build_instances, GoldRecord, Instance, DEFAULT_EPSILON, DEFAULT_RADIUS};
use crate::synth::ManifestEntry;
use crate::util::sha256_hex;

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Labelled candidates of one report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportData {
    pub report_id: String,
    pub gold: GoldRecord,
    pub instances: Vec<Instance>,
}

pub struct StageContext<'a> {
    pub recipe: PrepRecipe,
    pub lookup: &'a LookupTable,
    pub policy: MissingLookupPolicy,
    /// Needed only when the manifest lists page images.
    pub engine: Option<&'a dyn OcrEngine>,
    /// Distinguishes engines in the OCR cache key.
    pub engine_tag: String,
    /// OCR results keyed by image hash, recipe and engine.
    pub cache_dir: Option<PathBuf>,
}

fn ocr_page(path: &Path, page: u32, ctx: &StageContext<'_>) -> Result<PageWords> {
    let bytes = fs::read(path)?;
    let key = sha256_hex(
        format!("{}\n{}\n{}\n", sha256_hex(&bytes), ctx.recipe.name(), ctx.engine_tag).as_bytes(),
    );
    let cached = ctx.cache_dir.as_ref().map(|d| d.join("ocr").join(format!("{key}.tsv")));
    if let Some(c) = cached.as_ref().filter(|c| c.exists()) {
        // the same image may sit at another page position in another report
        let mut words = parse_word_table(&fs::read_to_string(c)?)?.pop().map_or_else(Vec::new, |p| p.words);
        words.iter_mut().for_each(|w| w.page = page);
        let mut out = PageWords::new(page, words);
        out.source_image = Some(path.to_path_buf());
        return Ok(out);
    }
    let engine = ctx
        .engine
        .ok_or_else(|| Error::invalid(format!("{} is an image but no OCR engine is configured", path.display())))?;
    let image = GrayImage::load(path).map_err(|e| e.in_stage("preprocess"))?;
    let prepared = apply_recipe(&image, ctx.recipe);
    let mut words = run_ocr(&prepared, page, engine).map_err(|e| e.in_stage("ocr"))?;
    words.source_image = Some(path.to_path_buf());
    if let Some(c) = cached {
        let parent = c.parent().expect("cache subdir");
        fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        let table = PageWords::new(page, words.words.clone());
        tmp.write_all(write_word_table(&[table]).as_bytes())?;
        tmp.persist(&c).map_err(|e| e.error)?;
    }
    Ok(words)
}

/// Word lists of every page of a report, OCR-ing images as needed.
pub fn load_report_pages(entry: &ManifestEntry, ctx: &StageContext<'_>) -> Result<Vec<PageWords>> {
    let mut pages = Vec::new();
    for (k, path) in entry.pages.iter().enumerate() {
        if is_image_path(path) {
            pages.push(ocr_page(path, k as u32 + 1, ctx)?);
        } else {
            let mut loaded = load_word_table(path).map_err(|e| e.in_stage("ocr"))?;
            if loaded.is_empty() {
                loaded.push(PageWords::empty(k as u32 + 1));
            }
            pages.extend(loaded);
        }
    }
    Ok(pages)
}

pub fn prepare_report(entry: &ManifestEntry, ctx: &StageContext<'_>) -> Result<ReportData> {
    let id = &entry.report_id;
    let pages = load_report_pages(entry, ctx)?;
    let pages = deidentify_report(id, &pages, ctx.lookup, ctx.policy).map_err(|e| e.in_stage("deid"))?;
    let gold = entry.gold();
    let (instances, dropped) = build_instances(id, &pages, DEFAULT_RADIUS);
    if !dropped.is_empty() {
        log::debug!("{id}: {} unparseable candidates dropped", dropped.len());
    }
    let (instances, _) = assign_labels(instances, &gold, DEFAULT_EPSILON);
    Ok(ReportData {
        report_id: id.clone(),
        gold,
        instances,
    })
}

/// All reports in manifest order, prepared in parallel.
pub fn prepare_corpus(entries: &[ManifestEntry], ctx: &StageContext<'_>) -> Result<Vec<ReportData>> {
    entries
        .par_iter()
        .map(|e| {
            prepare_report(e, ctx).map_err(|err| match err {
                Error::Stage { stage, source } => Error::Stage {
                    stage: format!("{stage} ({})", e.report_id),
                    source,
                },
                other => other.in_stage(&format!("load ({})", e.report_id)),
            })
        })
        .collect()
}
