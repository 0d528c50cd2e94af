//! Page-image preprocessing ahead of OCR.
//!
//! Every operation is a pure function from an immutable image to a new image
//! of identical dimensions. Morphology uses a square structuring element with
//! replicate-edge padding, so a white page never grows a dark border.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit single-channel raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// 24-bit RGB raster, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "gray image data has {} bytes, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Loads PNG or binary PGM/PPM; color inputs are converted with [`to_grayscale`].
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        match img {
            image::DynamicImage::ImageLuma8(buf) => {
                let (w, h) = buf.dimensions();
                GrayImage::new(w, h, buf.into_raw())
            }
            other => {
                let buf = other.to_rgb8();
                let (w, h) = buf.dimensions();
                to_grayscale(&RgbImage::new(w, h, buf.into_raw())?)
            }
        }
    }

    /// Writes PNG, or binary PGM (P5) when the extension is `.pgm`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm {
            let file = std::io::BufWriter::new(std::fs::File::create(path)?);
            PnmEncoder::new(file)
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .write_image(&self.data, self.width, self.height, ExtendedColorType::L8)?;
        } else {
            image::save_buffer(path, &self.data, self.width, self.height, ExtendedColorType::L8)?;
        }
        Ok(())
    }

    /// FNV-1a over dimensions and pixels; stable across runs and platforms.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        self.width.to_le_bytes().into_iter().for_each(&mut feed);
        self.height.to_le_bytes().into_iter().for_each(&mut feed);
        self.data.iter().copied().for_each(&mut feed);
        h
    }
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width as usize * height as usize {
            return Err(Error::invalid(format!(
                "rgb image data has {} bytes, expected 3x{}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = image::open(path)?.to_rgb8();
        let (w, h) = buf.dimensions();
        RgbImage::new(w, h, buf.into_raw())
    }

    /// Writes PNG, or binary PPM (P6) when the extension is `.ppm`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let is_ppm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if is_ppm {
            let file = std::io::BufWriter::new(std::fs::File::create(path)?);
            PnmEncoder::new(file)
                .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
                .write_image(&self.data, self.width, self.height, ExtendedColorType::Rgb8)?;
        } else {
            image::save_buffer(path, &self.data, self.width, self.height, ExtendedColorType::Rgb8)?;
        }
        Ok(())
    }
}

/// BT.601 luminance, rounded and clamped.
pub fn to_grayscale(image: &RgbImage) -> Result<GrayImage> {
    if image.width == 0 || image.height == 0 {
        return Err(Error::invalid("cannot convert a zero-dimension image"));
    }
    let data = image
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(GrayImage {
        width: image.width,
        height: image.height,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Dilate,
    Erode,
}

/// Sliding-window maximum (dilate) or minimum (erode) over a `kernel`×`kernel`
/// square, applied `iterations` times.
///
/// On a dark-text-on-white page dilation brightens, so isolated dark specks
/// vanish; erosion restores the surviving strokes to their original extent.
pub fn morph(img: &GrayImage, op: MorphOp, kernel: u32, iterations: u32) -> Result<GrayImage> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "morphology kernel must be odd and >= 1, got {kernel}"
        )));
    }
    let mut out = img.clone();
    if img.is_empty() {
        return Ok(out);
    }
    let radius = (kernel / 2) as i64;
    for _ in 0..iterations {
        // The square window is separable: 1-D pass along rows, then columns.
        let rows = window_pass(&out, op, radius, true);
        out = window_pass(&rows, op, radius, false);
    }
    Ok(out)
}

fn window_pass(img: &GrayImage, op: MorphOp, radius: i64, horizontal: bool) -> GrayImage {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut data = Vec::with_capacity(img.data.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = match op {
                MorphOp::Dilate => 0u8,
                MorphOp::Erode => 255u8,
            };
            for d in -radius..=radius {
                let (sx, sy) = if horizontal {
                    ((x + d).clamp(0, w - 1), y)
                } else {
                    (x, (y + d).clamp(0, h - 1))
                };
                let v = img.data[(sy * w + sx) as usize];
                acc = match op {
                    MorphOp::Dilate => acc.max(v),
                    MorphOp::Erode => acc.min(v),
                };
            }
            data.push(acc);
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Linear stretch about mid-gray: `p' = clamp(round(128 + (1 + percent/100)(p − 128)))`.
pub fn adjust_contrast(img: &GrayImage, percent: u32) -> GrayImage {
    let gain = 1.0 + percent as f64 / 100.0;
    let mut lut = [0u8; 256];
    for (p, slot) in lut.iter_mut().enumerate() {
        *slot = (128.0 + gain * (p as f64 - 128.0)).round().clamp(0.0, 255.0) as u8;
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&p| lut[p as usize]).collect(),
    }
}

/// The six preprocessing variants compared in the preprocessing ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepRecipe {
    Gray,
    GrayDe,
    GrayC20,
    GrayC60,
    GrayDeC20,
    GrayDeC60,
}

impl PrepRecipe {
    pub const ALL: [PrepRecipe; 6] = [
        PrepRecipe::Gray,
        PrepRecipe::GrayDe,
        PrepRecipe::GrayC20,
        PrepRecipe::GrayC60,
        PrepRecipe::GrayDeC20,
        PrepRecipe::GrayDeC60,
    ];

    pub fn dilate_erode(self) -> bool {
        matches!(
            self,
            PrepRecipe::GrayDe | PrepRecipe::GrayDeC20 | PrepRecipe::GrayDeC60
        )
    }

    pub fn contrast_percent(self) -> u32 {
        match self {
            PrepRecipe::Gray | PrepRecipe::GrayDe => 0,
            PrepRecipe::GrayC20 | PrepRecipe::GrayDeC20 => 20,
            PrepRecipe::GrayC60 | PrepRecipe::GrayDeC60 => 60,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrepRecipe::Gray => "gray",
            PrepRecipe::GrayDe => "gray_de",
            PrepRecipe::GrayC20 => "gray_c20",
            PrepRecipe::GrayC60 => "gray_c60",
            PrepRecipe::GrayDeC20 => "gray_de_c20",
            PrepRecipe::GrayDeC60 => "gray_de_c60",
        }
    }
}

impl fmt::Display for PrepRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrepRecipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrepRecipe::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preprocessing recipe `{s}`")))
    }
}

/// Dilate (3×3, once), erode (3×3, once), then contrast, as the recipe dictates.
pub fn apply_recipe(img: &GrayImage, recipe: PrepRecipe) -> GrayImage {
    let mut out = if recipe.dilate_erode() {
        let dilated = morph(img, MorphOp::Dilate, 3, 1).expect("3 is a valid kernel");
        morph(&dilated, MorphOp::Erode, 3, 1).expect("3 is a valid kernel")
    } else {
        img.clone()
    };
    let pct = recipe.contrast_percent();
    if pct > 0 {
        out = adjust_contrast(&out, pct);
    }
    out
}
