use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;

use proptest::prelude::*;
use scandoc::image_prep::GrayImage;
use scandoc::ocr::*;
use scandoc::Error;

fn arb_word(page: u32) -> impl Strategy<Value = WordBox> {
    (
        "[A-Za-z0-9.,%()/:-]{1,10}",
        0u32..2000,
        0u32..3000,
        1u32..300,
        1u32..100,
        (1u32..4, 1u32..4, 1u32..30, 1u32..30),
        -1i32..=100,
    )
        .prop_map(move |(text, left, top, width, height, (b, p, l, w), conf)| WordBox {
            text,
            left,
            top,
            width,
            height,
            page,
            order_key: OrderKey::new(b, p, l, w),
            confidence: conf as f64,
        })
}

fn arb_pages() -> impl Strategy<Value = Vec<PageWords>> {
    (1u32..4).prop_flat_map(|n| {
        (1..=n)
            .map(|p| prop::collection::vec(arb_word(p), 1..20).prop_map(move |ws| PageWords::new(p, ws)))
            .collect::<Vec<_>>()
    })
}

proptest! {
    #[test]
    fn word_table_round_trip(pages in arb_pages()) {
        let text = write_word_table(&pages);
        let back = parse_word_table(&text).unwrap();
        prop_assert_eq!(back.len(), pages.len());
        for (a, b) in back.iter().zip(&pages) {
            prop_assert_eq!(a.page, b.page);
            // stable sort on equal keys keeps the written order
            prop_assert_eq!(&a.words, &b.words);
        }
    }

    #[test]
    fn mock_boxes_lie_inside(w in 4u32..40, h in 4u32..40, dots in prop::collection::vec((0u32..40, 0u32..40), 0..12), seed in 0u64..5) {
        let mut img = GrayImage::filled(w, h, 255);
        for (x, y) in dots {
            img.set(x % w, y % h, 0);
        }
        let engine = MockEngine::new(seed);
        let a = engine.recognize(&img, 2).unwrap();
        prop_assert_eq!(&a, &engine.recognize(&img, 2).unwrap());
        for word in &a.words {
            prop_assert!(word.width > 0 && word.height > 0);
            prop_assert!(word.left + word.width <= w && word.top + word.height <= h);
            prop_assert_eq!(word.page, 2);
        }
        let keys: Vec<OrderKey> = a.words.iter().map(|w| w.order_key).collect();
        prop_assert!(keys.windows(2).all(|k| k[0] < k[1]));
    }
}

#[test]
fn blank_page_has_no_words() {
    let img = GrayImage::filled(30, 20, 255);
    assert!(MockEngine::new(1).recognize(&img, 1).unwrap().words.is_empty());
}

#[test]
fn non_word_rows_are_skipped() {
    let text = format!(
        "{}\n1\t1\t0\t0\t0\t0\t0\t0\t800\t600\t-1\t\n5\t1\t1\t1\t1\t1\t10\t10\t30\t12\t96.5\tAHI\n\
         5\t1\t1\t1\t1\t2\t50\t10\t0\t12\t90\tzero\n5\t1\t1\t1\t1\t3\t90\t10\t20\t12\t91\t \n",
        WORD_TABLE_HEADER.join("\t")
    );
    let pages = parse_word_table(&text).unwrap();
    assert_eq!(pages.len(), 1);
    assert_eq!(pages[0].texts(), ["AHI"]);
}

#[test]
fn malformed_tables_rejected() {
    assert!(parse_word_table("").is_err());
    assert!(parse_word_table("level\tpage\n").is_err());
    let bad = format!("{}\n5\t1\t1\t1\t1\t1\tx\t10\t30\t12\t96\tAHI\n", WORD_TABLE_HEADER.join("\t"));
    let err = parse_word_table(&bad).unwrap_err().to_string();
    assert!(err.contains("left"), "{err}");
}

fn script(dir: &Path, body: &str) -> String {
    let path = dir.join("engine.sh");
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path.display().to_string()
}

#[test]
fn command_engine_reads_tsv_output() {
    let dir = tempfile::tempdir().unwrap();
    let header = WORD_TABLE_HEADER.join("\\t");
    // args: image, output base, extra flags.., "tsv"
    let program = script(
        dir.path(),
        &format!(
            "test -f \"$1\" || exit 3\n[ \"$3\" = --psm ] || exit 4\n\
             printf '{header}\\n5\\t1\\t1\\t1\\t1\\t1\\t5\\t6\\t7\\t8\\t95\\tAHI\\n5\\t1\\t1\\t1\\t1\\t2\\t20\\t6\\t7\\t8\\t95\\t12.5\\n' > \"$2.tsv\""
        ),
    );
    let engine = CommandEngine::from_command_line(&format!("{program} --psm 6")).unwrap();
    let words = run_ocr(&GrayImage::filled(10, 10, 255), 3, &engine).unwrap();
    assert_eq!(words.page, 3);
    assert_eq!(words.texts(), ["AHI", "12.5"]);
    assert!(words.words.iter().all(|w| w.page == 3));
    assert_eq!((words.words[0].left, words.words[0].height), (5, 8));
}

#[test]
fn command_engine_failures() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayImage::filled(4, 4, 255);
    let failing = CommandEngine::new(script(dir.path(), "echo broken >&2\nexit 2"));
    match failing.recognize(&img, 1) {
        Err(Error::Engine { status, stderr }) => {
            assert_eq!(status, 2);
            assert_eq!(stderr, "broken");
        }
        other => panic!("unexpected {other:?}"),
    }
    let missing = CommandEngine::new("/nonexistent/ocr-engine");
    assert!(matches!(missing.recognize(&img, 1), Err(Error::EngineNotFound(_))));
    assert!(CommandEngine::from_command_line("   ").is_err());
}

#[test]
fn overlay_traces_boxes() {
    let img = GrayImage::filled(20, 20, 255);
    let mut page = PageWords::from_tokens(1, &["x"]);
    let w = &mut page.words[0];
    (w.left, w.top, w.width, w.height) = (2, 3, 5, 4);
    let out = render_overlay(&img, &page);
    assert_eq!(out.get(2, 3), 0);
    assert_eq!(out.get(6, 6), 0);
    assert_eq!(out.get(4, 5), 255);
    assert_eq!(out.get(15, 15), 255);
    assert_eq!(overlay_path(Path::new("d/p1.png")), Path::new("d/p1.overlay.png"));
}
