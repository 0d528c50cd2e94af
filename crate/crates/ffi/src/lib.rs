//! C ABI over the scandoc library.
//!
//! Every fallible function returns a [`ScandocStatus`]; on failure the message
//! is kept per thread and read back with [`scandoc_last_error`]. Objects cross
//! the boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Strings handed out by the library are freed with
//! [`scandoc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use scandoc::eval::{bonferroni, delong, roc_auc};
use scandoc::image_prep::{apply_recipe, GrayImage, PrepRecipe};
use scandoc::ocr::{load_word_table, parse_word_table, PageWords};
use scandoc::segment::{build_instances, write_instances_csv};
use scandoc::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScandocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Degenerate = 5,
    Numeric = 6,
    Engine = 7,
    /// A Rust panic was caught at the boundary.
    Internal = 99,
}

/// Greyscale page image.
pub struct ScandocImage(GrayImage);

/// Pages of OCR words, in reading order.
pub struct ScandocPages(Vec<PageWords>);

/// Paired DeLong comparison of two score vectors.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScandocDelong {
    pub auc_a: f64,
    pub auc_b: f64,
    pub z: f64,
    pub p_value: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> ScandocStatus {
    match err {
        Error::InvalidInput(_) | Error::MissingLookup(_) => ScandocStatus::InvalidArgument,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => ScandocStatus::Parse,
        Error::Io(_) | Error::Image(_) => ScandocStatus::Io,
        Error::Degenerate(_) => ScandocStatus::Degenerate,
        Error::Numeric { .. } => ScandocStatus::Numeric,
        Error::Engine { .. } | Error::EngineNotFound(_) => ScandocStatus::Engine,
        Error::Stage { source, .. } => status_of(source),
    }
}

struct Fail(ScandocStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ScandocStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ScandocStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScandocStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ScandocStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ScandocStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn labels_of(labels: &[u8]) -> Vec<bool> {
    labels.iter().map(|&l| l != 0).collect()
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(ScandocStatus::Internal, "string contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library and valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn scandoc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn scandoc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn scandoc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Wraps `width * height` row-major bytes as an image.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_new(
    width: u32,
    height: u32,
    data: *const u8,
    len: usize,
    out: *mut *mut ScandocImage,
) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let data = slice_arg(data, len, "data")?;
        let img = GrayImage::new(width, height, data.to_vec())?;
        *out = Box::into_raw(Box::new(ScandocImage(img)));
        Ok(())
    })
}

/// Reads a PNG or PGM page, converting colour to grey.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_load(path: *const c_char, out: *mut *mut ScandocImage) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let img = GrayImage::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(ScandocImage(img)));
        Ok(())
    })
}

/// Writes the image; the format follows the extension.
///
/// # Safety
/// `img` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_save(img: *const ScandocImage, path: *const c_char) -> ScandocStatus {
    guard(|| {
        let img = img.as_ref().ok_or_else(|| null("img"))?;
        img.0.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Width in pixels, 0 for a null handle.
///
/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_width(img: *const ScandocImage) -> u32 {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// Height in pixels, 0 for a null handle.
///
/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_height(img: *const ScandocImage) -> u32 {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Borrowed pixel buffer, valid while the handle lives.
///
/// # Safety
/// `img` must be null or a live handle; `len` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_data(img: *const ScandocImage, len: *mut usize) -> *const u8 {
    let Some(img) = img.as_ref() else {
        return ptr::null();
    };
    if let Some(len) = len.as_mut() {
        *len = img.0.data().len();
    }
    img.0.data().as_ptr()
}

/// Applies a named preprocessing recipe (`gray`, `gray_de`, `gray_c20`,
/// `gray_c60`, `gray_de_c20`, `gray_de_c60`) into a new image.
///
/// # Safety
/// `img` must be a live handle, `recipe` a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_apply_recipe(
    img: *const ScandocImage,
    recipe: *const c_char,
    out: *mut *mut ScandocImage,
) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let img = img.as_ref().ok_or_else(|| null("img"))?;
        let recipe: PrepRecipe = str_arg(recipe, "recipe")?.parse()?;
        *out = Box::into_raw(Box::new(ScandocImage(apply_recipe(&img.0, recipe))));
        Ok(())
    })
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scandoc_image_free(img: *mut ScandocImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Parses a tab-separated OCR word table held in memory.
///
/// # Safety
/// `tsv` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_pages_parse(tsv: *const c_char, out: *mut *mut ScandocPages) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pages = parse_word_table(str_arg(tsv, "tsv")?)?;
        *out = Box::into_raw(Box::new(ScandocPages(pages)));
        Ok(())
    })
}

/// Reads an OCR word table from disk.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_pages_load(path: *const c_char, out: *mut *mut ScandocPages) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pages = load_word_table(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(ScandocPages(pages)));
        Ok(())
    })
}

/// Number of pages, 0 for a null handle.
///
/// # Safety
/// `pages` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scandoc_pages_count(pages: *const ScandocPages) -> usize {
    pages.as_ref().map_or(0, |p| p.0.len())
}

/// Words on the page at position `index`, 0 when out of range.
///
/// # Safety
/// `pages` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scandoc_pages_word_count(pages: *const ScandocPages, index: usize) -> usize {
    pages.as_ref().and_then(|p| p.0.get(index)).map_or(0, |p| p.words.len())
}

/// Numeric candidates with their context windows, as instance CSV text.
/// Labels are all `Other`; the caller frees the string.
///
/// # Safety
/// `pages` must be a live handle, `report_id` a nul-terminated string and
/// `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_pages_instances_csv(
    pages: *const ScandocPages,
    report_id: *const c_char,
    radius: usize,
    out_csv: *mut *mut c_char,
) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out_csv, "out_csv")?;
        let pages = pages.as_ref().ok_or_else(|| null("pages"))?;
        let (instances, _) = build_instances(str_arg(report_id, "report_id")?, &pages.0, radius);
        let mut buf = Vec::new();
        write_instances_csv(&instances, &mut buf)?;
        let text = String::from_utf8(buf).map_err(|e| Fail(ScandocStatus::Internal, e.to_string()))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// # Safety
/// `pages` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn scandoc_pages_free(pages: *mut ScandocPages) {
    if !pages.is_null() {
        drop(Box::from_raw(pages));
    }
}

/// Area under the ROC curve; `labels` holds 1 for positives, 0 otherwise.
///
/// # Safety
/// `scores` and `labels` must each point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let scores = slice_arg(scores, n, "scores")?;
        let labels = labels_of(slice_arg(labels, n, "labels")?);
        *out = roc_auc(scores, &labels)?;
        Ok(())
    })
}

/// Paired DeLong test of two score vectors over the same `n` labelled instances.
///
/// # Safety
/// `scores_a`, `scores_b` and `labels` must each point to `n` readable
/// elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scandoc_delong(
    scores_a: *const f64,
    scores_b: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut ScandocDelong,
) -> ScandocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let a = slice_arg(scores_a, n, "scores_a")?;
        let b = slice_arg(scores_b, n, "scores_b")?;
        let labels = labels_of(slice_arg(labels, n, "labels")?);
        let r = delong(a, b, &labels)?;
        *out = ScandocDelong {
            auc_a: r.auc_a,
            auc_b: r.auc_b,
            z: r.z,
            p_value: r.p_two_sided,
        };
        Ok(())
    })
}

/// Bonferroni-adjusted p-values, written to `out` (`n` slots, capped at 1).
///
/// # Safety
/// `p_values` must point to `n` readable and `out` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn scandoc_bonferroni(p_values: *const f64, n: usize, out: *mut f64) -> ScandocStatus {
    guard(|| {
        let p = slice_arg(p_values, n, "p_values")?;
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Fail(ScandocStatus::InvalidArgument, format!("p-value {bad} outside [0, 1]")));
        }
        if n == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, n).copy_from_slice(&bonferroni(p));
        Ok(())
    })
}
