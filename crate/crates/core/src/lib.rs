//! # scandoc
//!
//! Extraction of labelled numeric fields (AHI and SaO₂) from scanned
//! sleep-study reports.
//!
//! The pipeline runs page images through gray-scale / morphology / contrast
//! preprocessing, an external OCR engine that emits word boxes, patient
//! de-identification, numeric-candidate segmentation into 21-word windows,
//! feature construction (six structured features plus tf-idf), and either a
//! classical bag-of-words classifier or a dual-branch neural network. The
//! highest-probability candidate per document is reported as the extracted
//! value and scored with segment metrics, AUROC with DeLong intervals, and
//! document accuracy.
//!
//! ## Modules
//!
//! - [`image_prep`] - gray-scale conversion, dilation/erosion, contrast recipes
//! - [`ocr`] - word-box tables, OCR engine backends, inspection overlays
//! - [`deid`] - name / MRN / date scrubbing
//! - [`segment`] - candidate detection, context windows, gold labelling
//! - [`features`] - tokenisation, tf-idf vocabulary, structured scaling
//! - [`classifiers`] - the seven bag-of-words classifiers and cross-validation
//! - [`neural`] - reverse-mode autodiff, CBOW, BiLSTM, the dual-branch network
//! - [`eval`] - segment metrics, ROC/DeLong, chi-square, document accuracy
//! - [`synth`] - synthetic report corpus with OCR-style noise
//! - [`pipeline`] - splits, experiment runs, ablations

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod deid;
pub mod error;
pub mod eval;
pub mod features;
pub mod image_prep;
pub mod neural;
pub mod ocr;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub(crate) mod util;

pub use error::{Error, Result};
pub use segment::{GoldRecord, Instance, Label};
