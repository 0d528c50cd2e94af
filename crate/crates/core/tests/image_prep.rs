use proptest::prelude::*;
use scandoc::image_prep::*;

fn image(w: u32, h: u32, data: Vec<u8>) -> GrayImage {
    GrayImage::new(w, h, data).unwrap()
}

fn arb_image() -> impl Strategy<Value = GrayImage> {
    (1u32..14, 1u32..14).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h) as usize).prop_map(move |d| image(w, h, d))
    })
}

/// Direct square-window extreme with clamped borders.
fn brute_force(img: &GrayImage, op: MorphOp, kernel: u32) -> GrayImage {
    let r = (kernel / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut vals = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w - 1) as u32;
                    let sy = (y + dy).clamp(0, h - 1) as u32;
                    vals.push(img.get(sx, sy));
                }
            }
            let v = match op {
                MorphOp::Dilate => *vals.iter().max().unwrap(),
                MorphOp::Erode => *vals.iter().min().unwrap(),
            };
            out.set(x as u32, y as u32, v);
        }
    }
    out
}

proptest! {
    #[test]
    fn morph_matches_brute_force(img in arb_image(), k in prop::sample::select(vec![1u32, 3, 5]), iters in 0u32..3) {
        for op in [MorphOp::Dilate, MorphOp::Erode] {
            let mut want = img.clone();
            for _ in 0..iters {
                want = brute_force(&want, op, k);
            }
            prop_assert_eq!(morph(&img, op, k, iters).unwrap(), want);
        }
    }

    #[test]
    fn dilate_bounds_erode(img in arb_image()) {
        let d = morph(&img, MorphOp::Dilate, 3, 1).unwrap();
        let e = morph(&img, MorphOp::Erode, 3, 1).unwrap();
        for i in 0..img.data().len() {
            prop_assert!(d.data()[i] >= img.data()[i] && img.data()[i] >= e.data()[i]);
        }
    }

    #[test]
    fn contrast_is_monotone(img in arb_image(), pct in 0u32..150) {
        let out = adjust_contrast(&img, pct);
        let (a, b) = (img.data(), out.data());
        for i in 0..a.len() {
            for j in 0..a.len() {
                if a[i] <= a[j] {
                    prop_assert!(b[i] <= b[j]);
                }
            }
            if a[i] == 128 {
                prop_assert_eq!(b[i], 128);
            }
        }
    }

    #[test]
    fn recipes_keep_dimensions(img in arb_image()) {
        for r in PrepRecipe::ALL {
            let out = apply_recipe(&img, r);
            prop_assert_eq!((out.width(), out.height()), (img.width(), img.height()));
            prop_assert_eq!(&out, &apply_recipe(&img, r));
        }
    }

    #[test]
    fn isolated_specks_removed(w in 5u32..20, h in 5u32..20, specks in prop::collection::vec((0u32..20, 0u32..20), 1..6)) {
        let mut img = GrayImage::filled(w, h, 255);
        let mut placed: Vec<(u32, u32)> = Vec::new();
        for (x, y) in specks {
            let (x, y) = (x % w, y % h);
            // keep specks at least 3 pixels apart so none touches another
            if placed.iter().all(|&(px, py)| px.abs_diff(x) > 2 || py.abs_diff(y) > 2) {
                img.set(x, y, 0);
                placed.push((x, y));
            }
        }
        let out = apply_recipe(&img, PrepRecipe::GrayDe);
        prop_assert!(out.data().iter().all(|&p| p == 255));
    }
}

#[test]
fn solid_square_survives_opening() {
    let mut img = GrayImage::filled(15, 15, 255);
    for y in 5..10 {
        for x in 5..10 {
            img.set(x, y, 0);
        }
    }
    assert_eq!(apply_recipe(&img, PrepRecipe::GrayDe), img);
}

#[test]
fn contrast_reference_values() {
    let img = image(4, 1, vec![0, 100, 128, 200]);
    assert_eq!(adjust_contrast(&img, 0), img);
    // 128 + 1.2 * (100 - 128) = 94.4, 128 + 1.2 * 72 = 214.4
    assert_eq!(adjust_contrast(&img, 20).data(), &[0, 94, 128, 214]);
    // 128 + 1.6 * 72 = 243.2, 128 - 1.6 * 28 = 83.2
    assert_eq!(adjust_contrast(&img, 60).data(), &[0, 83, 128, 243]);
}

#[test]
fn even_kernel_rejected() {
    let img = GrayImage::filled(3, 3, 0);
    assert!(morph(&img, MorphOp::Dilate, 2, 1).is_err());
    assert!(morph(&img, MorphOp::Erode, 0, 1).is_err());
}

#[test]
fn recipe_names_round_trip() {
    for r in PrepRecipe::ALL {
        assert_eq!(r.name().parse::<PrepRecipe>().unwrap(), r);
    }
    assert!("sharpen".parse::<PrepRecipe>().is_err());
}

#[test]
fn png_and_pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(3, 2, vec![0, 50, 100, 150, 200, 255]);
    for name in ["a.png", "a.pgm"] {
        let p = dir.path().join(name);
        img.save(&p).unwrap();
        assert_eq!(GrayImage::load(&p).unwrap(), img);
    }
}
