//! OCR word tables.
//!
//! The engine is driven as a subprocess that writes a 12-column tab-separated
//! word table (`level page_num block_num par_num line_num word_num left top
//! width height conf text`). Only level-5 rows are words; everything else is
//! page/block/paragraph/line structure and is skipped.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_prep::GrayImage;

pub const WORD_TABLE_HEADER: [&str; 12] = [
    "level", "page_num", "block_num", "par_num", "line_num", "word_num", "left", "top", "width",
    "height", "conf", "text",
];

/// Environment variable holding the OCR command line (engine path plus extra flags).
pub const OCR_CMD_ENV: &str = "SCANDOC_OCR_CMD";

/// Reading-order key: (block, paragraph, line, word).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderKey {
    pub block: u32,
    pub paragraph: u32,
    pub line: u32,
    pub word: u32,
}

impl OrderKey {
    pub fn new(block: u32, paragraph: u32, line: u32, word: u32) -> Self {
        Self {
            block,
            paragraph,
            line,
            word,
        }
    }
}

/// One recognized token with its pixel box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordBox {
    pub text: String,
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
    /// 1-based page index.
    pub page: u32,
    pub order_key: OrderKey,
    /// Engine confidence in percent; −1 marks structural rows.
    pub confidence: f64,
}

/// The words of one page, sorted by reading order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageWords {
    pub page: u32,
    pub words: Vec<WordBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_image: Option<PathBuf>,
}

impl PageWords {
    pub fn new(page: u32, mut words: Vec<WordBox>) -> Self {
        words.sort_by_key(|w| w.order_key);
        Self {
            page,
            words,
            source_image: None,
        }
    }

    pub fn empty(page: u32) -> Self {
        Self::new(page, Vec::new())
    }

    pub fn texts(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.text.as_str()).collect()
    }

    /// Lays `tokens` out left to right on one line; handy for fixtures.
    pub fn from_tokens(page: u32, tokens: &[&str]) -> Self {
        let mut left = 10;
        let words = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let width = 12 * t.chars().count().max(1) as u32;
                let w = WordBox {
                    text: t.to_string(),
                    left,
                    top: 10,
                    width,
                    height: 20,
                    page,
                    order_key: OrderKey::new(1, 1, 1, i as u32 + 1),
                    confidence: 95.0,
                };
                left += width + 8;
                w
            })
            .collect();
        Self::new(page, words)
    }
}

fn parse_u32(field: &str, column: &str, line_no: usize) -> Result<u32> {
    field.trim().parse::<u32>().map_err(|_| {
        Error::parse(format!(
            "line {line_no}: column `{column}` expects a non-negative integer, got `{field}`"
        ))
    })
}

/// Parses an engine word table into per-page word lists.
pub fn parse_word_table(tsv_text: &str) -> Result<Vec<PageWords>> {
    let mut lines = tsv_text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(Error::parse("word table is empty (missing header)")),
        }
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    for (i, expected) in WORD_TABLE_HEADER.iter().enumerate() {
        match cols.get(i) {
            Some(c) if c.trim() == *expected => {}
            Some(c) => {
                return Err(Error::parse(format!(
                    "header column {} is `{}`, expected `{}`",
                    i + 1,
                    c.trim(),
                    expected
                )))
            }
            None => {
                return Err(Error::parse(format!(
                    "header is missing column `{expected}`"
                )))
            }
        }
    }
    if cols.len() > WORD_TABLE_HEADER.len() {
        return Err(Error::parse(format!(
            "header has unexpected extra column `{}`",
            cols[WORD_TABLE_HEADER.len()]
        )));
    }

    let mut pages: BTreeMap<u32, Vec<WordBox>> = BTreeMap::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(12, '\t').collect();
        if fields.len() < 11 {
            return Err(Error::parse(format!(
                "line {line_no}: expected 12 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let level = parse_u32(fields[0], "level", line_no)?;
        let page = parse_u32(fields[1], "page_num", line_no)?;
        let key = OrderKey::new(
            parse_u32(fields[2], "block_num", line_no)?,
            parse_u32(fields[3], "par_num", line_no)?,
            parse_u32(fields[4], "line_num", line_no)?,
            parse_u32(fields[5], "word_num", line_no)?,
        );
        let left = parse_u32(fields[6], "left", line_no)?;
        let top = parse_u32(fields[7], "top", line_no)?;
        let width = parse_u32(fields[8], "width", line_no)?;
        let height = parse_u32(fields[9], "height", line_no)?;
        let confidence: f64 = fields[10].trim().parse().map_err(|_| {
            Error::parse(format!(
                "line {line_no}: column `conf` expects a number, got `{}`",
                fields[10]
            ))
        })?;
        if level != 5 {
            continue;
        }
        let text = fields.get(11).copied().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if width == 0 || height == 0 {
            log::warn!("line {line_no}: dropping zero-area word box `{text}`");
            continue;
        }
        pages.entry(page).or_default().push(WordBox {
            text: text.to_string(),
            left,
            top,
            width,
            height,
            page,
            order_key: key,
            confidence,
        });
    }
    Ok(pages
        .into_iter()
        .map(|(page, words)| PageWords::new(page, words))
        .collect())
}

/// Serializes pages back into the engine's word-table layout (level-5 rows only).
pub fn write_word_table(pages: &[PageWords]) -> String {
    let mut out = WORD_TABLE_HEADER.join("\t");
    out.push('\n');
    for page in pages {
        for w in &page.words {
            let k = w.order_key;
            let _ = writeln!(
                out,
                "5\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                page.page,
                k.block,
                k.paragraph,
                k.line,
                k.word,
                w.left,
                w.top,
                w.width,
                w.height,
                w.confidence,
                w.text
            );
        }
    }
    out
}

/// Reads a word-table file. A file holding a single page is the common case.
pub fn load_word_table(path: &Path) -> Result<Vec<PageWords>> {
    let text = std::fs::read_to_string(path)?;
    let mut pages = parse_word_table(&text)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
    for p in &mut pages {
        p.source_image = None;
    }
    Ok(pages)
}

/// Anything that turns a page image into words.
pub trait OcrEngine: Send + Sync {
    fn recognize(&self, image: &GrayImage, page: u32) -> Result<PageWords>;
}

/// Convenience wrapper matching the pipeline's stage naming.
pub fn run_ocr(image: &GrayImage, page: u32, engine: &dyn OcrEngine) -> Result<PageWords> {
    engine.recognize(image, page)
}

/// External engine invoked as `<engine> <image> <out-base> [flags..] tsv`.
#[derive(Clone, Debug)]
pub struct CommandEngine {
    pub program: String,
    pub extra_args: Vec<String>,
}

impl CommandEngine {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            extra_args: Vec::new(),
        }
    }

    /// Parses a whitespace-separated command line: program then pass-through flags
    /// (for example a page-segmentation mode).
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::invalid("empty OCR command line"))?;
        Ok(Self {
            program,
            extra_args: parts.collect(),
        })
    }

    /// Engine from `SCANDOC_OCR_CMD`, falling back to `tesseract` on the PATH.
    pub fn from_env() -> Result<Self> {
        match std::env::var(OCR_CMD_ENV) {
            Ok(cmd) if !cmd.trim().is_empty() => Self::from_command_line(&cmd),
            _ => Ok(Self::new("tesseract")),
        }
    }
}

impl OcrEngine for CommandEngine {
    fn recognize(&self, image: &GrayImage, page: u32) -> Result<PageWords> {
        let dir = tempfile::tempdir()?;
        let img_path = dir.path().join("page.png");
        image.save(&img_path)?;
        let out_base = dir.path().join("words");
        let output = Command::new(&self.program)
            .arg(&img_path)
            .arg(&out_base)
            .args(&self.extra_args)
            .arg("tsv")
            .output()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => {
                    Error::EngineNotFound(format!("`{}` is not on the PATH", self.program))
                }
                _ => Error::EngineNotFound(format!("`{}`: {e}", self.program)),
            })?;
        if !output.status.success() {
            return Err(Error::Engine {
                status: output.status.code().unwrap_or(-1),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        let tsv = std::fs::read_to_string(out_base.with_extension("tsv"))?;
        let words = parse_word_table(&tsv)?
            .into_iter()
            .flat_map(|p| p.words)
            .map(|mut w| {
                w.page = page;
                w
            })
            .collect();
        Ok(PageWords::new(page, words))
    }
}

/// Deterministic stand-in for a real engine.
///
/// Images registered with [`MockEngine::script`] return their scripted words.
/// Any other image is segmented into 8-connected components of dark pixels
/// (intensity < 128); each component becomes a word whose text is derived from
/// the image hash and the seed. A blank page yields no words.
#[derive(Clone, Debug, Default)]
pub struct MockEngine {
    seed: u64,
    scripted: HashMap<u64, Vec<WordBox>>,
}

impl MockEngine {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scripted: HashMap::new(),
        }
    }

    pub fn script(&mut self, image: &GrayImage, words: Vec<WordBox>) {
        self.scripted.insert(image.content_hash(), words);
    }

    fn components(image: &GrayImage) -> Vec<(u32, u32, u32, u32)> {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let data = image.data();
        let mut seen = vec![false; w * h];
        let mut boxes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if seen[start] || data[start] >= 128 {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if !seen[j] && data[j] < 128 {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            boxes.push((x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32));
        }
        boxes
    }
}

impl OcrEngine for MockEngine {
    fn recognize(&self, image: &GrayImage, page: u32) -> Result<PageWords> {
        let hash = image.content_hash();
        if let Some(words) = self.scripted.get(&hash) {
            let words = words
                .iter()
                .cloned()
                .map(|mut w| {
                    w.page = page;
                    w
                })
                .collect();
            return Ok(PageWords::new(page, words));
        }
        let mut boxes = Self::components(image);
        boxes.sort_by_key(|&(x, y, _, _)| (y, x));
        let words = boxes
            .into_iter()
            .enumerate()
            .map(|(i, (left, top, width, height))| {
                let tag = (hash ^ self.seed.rotate_left(17)).wrapping_mul(i as u64 + 1);
                WordBox {
                    text: format!("w{:06x}", tag & 0xff_ffff),
                    left,
                    top,
                    width,
                    height,
                    page,
                    order_key: OrderKey::new(1, 1, 1, i as u32 + 1),
                    confidence: 90.0,
                }
            })
            .collect();
        Ok(PageWords::new(page, words))
    }
}

/// Copy of `image` with a 1-pixel black rectangle traced around each word box.
/// Boxes are clipped to the image bounds.
pub fn render_overlay(image: &GrayImage, words: &PageWords) -> GrayImage {
    let mut out = image.clone();
    let (iw, ih) = (image.width(), image.height());
    if iw == 0 || ih == 0 {
        return out;
    }
    for w in &words.words {
        if w.left >= iw || w.top >= ih || w.width == 0 || w.height == 0 {
            continue;
        }
        let x0 = w.left;
        let y0 = w.top;
        let x1 = (w.left.saturating_add(w.width) - 1).min(iw - 1);
        let y1 = (w.top.saturating_add(w.height) - 1).min(ih - 1);
        for x in x0..=x1 {
            out.set(x, y0, 0);
            out.set(x, y1, 0);
        }
        for y in y0..=y1 {
            out.set(x0, y, 0);
            out.set(x1, y, 0);
        }
    }
    out
}

/// `page.png` → `page.overlay.png`, next to the source.
pub fn overlay_path(source: &Path) -> PathBuf {
    let stem = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "page".to_string());
    source.with_file_name(format!("{stem}.overlay.png"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext\n";

    #[test]
    fn header_only_is_empty() {
        assert!(parse_word_table(HEADER).unwrap().is_empty());
    }

    #[test]
    fn single_word_row() {
        let tsv = format!("{HEADER}5\t1\t2\t1\t3\t4\t735\t388\t61\t26\t96.1\t26\n");
        let pages = parse_word_table(&tsv).unwrap();
        assert_eq!(pages.len(), 1);
        let w = &pages[0].words[0];
        assert_eq!((w.left, w.top, w.width, w.height), (735, 388, 61, 26));
        assert_eq!(w.text, "26");
        assert_eq!(w.order_key, OrderKey::new(2, 1, 3, 4));
    }

    #[test]
    fn structural_rows_filtered() {
        let tsv = format!(
            "{HEADER}1\t1\t0\t0\t0\t0\t0\t0\t2550\t3300\t-1\t\n4\t1\t1\t1\t1\t0\t100\t100\t900\t40\t-1\t\n5\t1\t1\t1\t1\t1\t100\t100\t20\t40\t-1\t \n"
        );
        assert!(parse_word_table(&tsv).unwrap().is_empty());
    }

    #[test]
    fn header_errors_name_column() {
        let bad = HEADER.replace("left\ttop", "top\tleft");
        let err = parse_word_table(&bad).unwrap_err().to_string();
        assert!(err.contains("`top`") && err.contains("`left`"), "{err}");
        let short = "level\tpage_num\n";
        assert!(parse_word_table(short).unwrap_err().to_string().contains("block_num"));
    }

    #[test]
    fn geometry_errors_carry_line() {
        let tsv = format!("{HEADER}5\t1\t1\t1\t1\t1\t7.5\t3\t4\t5\t90\tx\n");
        let err = parse_word_table(&tsv).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("left"), "{err}");
    }

    #[test]
    fn mock_blank_page_is_empty() {
        let blank = GrayImage::filled(64, 32, 255);
        let words = run_ocr(&blank, 1, &MockEngine::new(7)).unwrap();
        assert!(words.words.is_empty());
    }

    #[test]
    fn mock_is_deterministic_and_finds_blobs() {
        let mut img = GrayImage::filled(40, 20, 255);
        for x in 5..12 {
            img.set(x, 5, 0);
            img.set(x, 6, 0);
        }
        img.set(30, 15, 10);
        let eng = MockEngine::new(3);
        let a = eng.recognize(&img, 2).unwrap();
        let b = eng.recognize(&img, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.words.len(), 2);
        assert_eq!((a.words[0].left, a.words[0].width, a.words[0].height), (5, 7, 2));
        assert!(a.words.iter().all(|w| w.page == 2));
    }

    #[test]
    fn overlay_draws_perimeter() {
        let img = GrayImage::filled(40, 30, 255);
        let empty = PageWords::empty(1);
        assert_eq!(render_overlay(&img, &empty), img);

        let mut page = PageWords::from_tokens(1, &["x"]);
        page.words[0].left = 10;
        page.words[0].top = 10;
        page.words[0].width = 5;
        page.words[0].height = 3;
        let out = render_overlay(&img, &page);
        let changed = img.data().iter().zip(out.data()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 12);

        page.words[0].left = 35;
        page.words[0].width = 20;
        let out = render_overlay(&img, &page);
        assert_eq!(out.get(39, 11), 0);
        assert_eq!(out.get(39, 10), 0);
        assert_eq!(out.get(34, 11), 255);
    }

    #[test]
    fn command_engine_missing_binary() {
        let eng = CommandEngine::new("/nonexistent/ocr-engine-binary");
        let img = GrayImage::filled(4, 4, 255);
        assert!(matches!(eng.recognize(&img, 1), Err(Error::EngineNotFound(_))));
    }

    #[test]
    fn overlay_path_suffix() {
        assert_eq!(
            overlay_path(Path::new("/a/b/page3.png")),
            PathBuf::from("/a/b/page3.overlay.png")
        );
    }
}
