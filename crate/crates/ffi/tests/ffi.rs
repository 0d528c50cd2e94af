use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use scandoc_ffi::*;

fn last_error() -> String {
    let p = scandoc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn image(width: u32, height: u32, data: &[u8]) -> *mut ScandocImage {
    let mut out = ptr::null_mut();
    let status = unsafe { scandoc_image_new(width, height, data.as_ptr(), data.len(), &mut out) };
    assert_eq!(status, ScandocStatus::Ok);
    out
}

#[test]
fn image_round_trip_and_recipe() {
    let mut data = vec![255u8; 49];
    data[24] = 0; // lone dark speck in the centre
    let img = image(7, 7, &data);
    unsafe {
        assert_eq!((scandoc_image_width(img), scandoc_image_height(img)), (7, 7));
        let recipe = CString::new("gray_de").unwrap();
        let mut cleaned = ptr::null_mut();
        assert_eq!(scandoc_image_apply_recipe(img, recipe.as_ptr(), &mut cleaned), ScandocStatus::Ok);
        let mut len = 0;
        let px = std::slice::from_raw_parts(scandoc_image_data(cleaned, &mut len), len);
        assert_eq!(len, 49);
        assert!(px.iter().all(|&v| v == 255));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.png").to_str().unwrap()).unwrap();
        assert_eq!(scandoc_image_save(img, path.as_ptr()), ScandocStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(scandoc_image_load(path.as_ptr(), &mut back), ScandocStatus::Ok);
        let mut n = 0;
        assert_eq!(std::slice::from_raw_parts(scandoc_image_data(back, &mut n), n), &data[..]);

        scandoc_image_free(back);
        scandoc_image_free(cleaned);
        scandoc_image_free(img);
        scandoc_image_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported_per_call() {
    unsafe {
        let mut out = ptr::null_mut();
        let short = [0u8; 3];
        assert_eq!(scandoc_image_new(2, 2, short.as_ptr(), 3, &mut out), ScandocStatus::InvalidArgument);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        let img = image(2, 2, &[1, 2, 3, 4]);
        assert!(scandoc_last_error().is_null(), "success clears the message");
        let bad = CString::new("sharpen").unwrap();
        assert_eq!(scandoc_image_apply_recipe(img, bad.as_ptr(), &mut out), ScandocStatus::InvalidArgument);
        assert!(last_error().contains("sharpen"));
        assert_eq!(scandoc_image_apply_recipe(img, ptr::null(), &mut out), ScandocStatus::NullPointer);
        scandoc_image_free(img);

        let missing = CString::new("/nonexistent/page.png").unwrap();
        assert_eq!(scandoc_image_load(missing.as_ptr(), &mut out), ScandocStatus::Io);
        assert_eq!(scandoc_image_width(ptr::null()), 0);
    }
}

const TABLE: &str = "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext\n\
5\t1\t1\t1\t1\t1\t10\t10\t30\t12\t96\tApnea\n\
5\t1\t1\t1\t1\t2\t50\t10\t30\t12\t96\tindex\n\
5\t1\t1\t1\t1\t3\t90\t10\t30\t12\t96\t19.5\n\
5\t1\t1\t1\t1\t4\t130\t10\t30\t12\t96\tevents\n\
5\t2\t1\t1\t1\t1\t10\t10\t30\t12\t96\tSaO2\n\
5\t2\t1\t1\t1\t2\t50\t10\t30\t12\t96\t88%\n";

#[test]
fn pages_and_instances() {
    unsafe {
        let tsv = CString::new(TABLE).unwrap();
        let mut pages = ptr::null_mut();
        assert_eq!(scandoc_pages_parse(tsv.as_ptr(), &mut pages), ScandocStatus::Ok);
        assert_eq!(scandoc_pages_count(pages), 2);
        assert_eq!((scandoc_pages_word_count(pages, 0), scandoc_pages_word_count(pages, 1)), (4, 2));
        assert_eq!(scandoc_pages_word_count(pages, 5), 0);

        let id = CString::new("r1").unwrap();
        let mut csv = ptr::null_mut();
        assert_eq!(scandoc_pages_instances_csv(pages, id.as_ptr(), 1, &mut csv), ScandocStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_string();
        scandoc_string_free(csv);
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3, "{text}");
        assert!(rows[1].contains("19.5") && rows[1].contains("index 19.5 events"), "{}", rows[1]);
        assert!(rows[2].contains("SaO2 88%"), "{}", rows[2]);
        scandoc_pages_free(pages);

        let junk = CString::new("not a table").unwrap();
        assert_eq!(scandoc_pages_parse(junk.as_ptr(), &mut pages), ScandocStatus::Parse);
    }
}

#[test]
fn statistics() {
    let labels = [1u8, 1, 1, 0, 0, 0];
    let a = [0.9, 0.8, 0.4, 0.5, 0.2, 0.1];
    let b = [0.9, 0.3, 0.7, 0.5, 0.6, 0.1];
    unsafe {
        let mut auc = 0.0;
        assert_eq!(scandoc_roc_auc(a.as_ptr(), labels.as_ptr(), 6, &mut auc), ScandocStatus::Ok);
        // 8 of 9 positive/negative pairs ordered correctly
        assert!((auc - 8.0 / 9.0).abs() < 1e-12);

        let mut d = ScandocDelong::default();
        assert_eq!(scandoc_delong(a.as_ptr(), a.as_ptr(), labels.as_ptr(), 6, &mut d), ScandocStatus::Ok);
        assert_eq!((d.z, d.p_value), (0.0, 1.0));
        assert_eq!(scandoc_delong(a.as_ptr(), b.as_ptr(), labels.as_ptr(), 6, &mut d), ScandocStatus::Ok);
        assert!((d.auc_a - 8.0 / 9.0).abs() < 1e-12 && (d.auc_b - 7.0 / 9.0).abs() < 1e-12);
        assert!(d.p_value > 0.0 && d.p_value <= 1.0);

        let one_class = [1u8; 6];
        assert_eq!(scandoc_roc_auc(a.as_ptr(), one_class.as_ptr(), 6, &mut auc), ScandocStatus::InvalidArgument);

        let p = [0.01, 0.2, 0.5];
        let mut adj = [0.0; 3];
        assert_eq!(scandoc_bonferroni(p.as_ptr(), 3, adj.as_mut_ptr()), ScandocStatus::Ok);
        assert_eq!(adj, [0.03, 0.6000000000000001, 1.0]);
        let bad = [1.5];
        assert_eq!(scandoc_bonferroni(bad.as_ptr(), 1, adj.as_mut_ptr()), ScandocStatus::InvalidArgument);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(scandoc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/scandoc.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["typedef struct ScandocImage ScandocImage;", "typedef struct ScandocPages ScandocPages;", "SCANDOC_STATUS_OK = 0"] {
        assert!(header.contains(ty), "{ty}");
    }
    // the header must stand alone as C
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(root.join("include/scandoc.h")).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
