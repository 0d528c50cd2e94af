use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use scandoc::features::*;
use scandoc::segment::Instance;
use scandoc::Label;

fn segment_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            3 => "[A-Za-z]{1,7}[.,:]?",
            1 => "[0-9]{1,3}(\\.[0-9])?%?",
            1 => prop::sample::select(vec!["the", "of", "AND", "(AHI)", "-", "SaO2", "was"]).prop_map(str::to_string),
        ],
        0..25,
    )
    .prop_map(|t| t.join(" "))
}

fn instance(segment: &str, value: f64) -> Instance {
    Instance {
        report_id: "r".into(),
        left: 10,
        top: 20,
        width: 30,
        height: 12,
        page: 2,
        numeric_value: value,
        segment: segment.into(),
        label: Label::Other,
        ordinal: 0,
    }
}

proptest! {
    #[test]
    fn tokens_are_normalised(seg in segment_text()) {
        for t in tokenize_normalize(&seg) {
            prop_assert!(!t.is_empty());
            prop_assert_eq!(t.to_lowercase(), t.clone());
            prop_assert!(!is_stopword(&t));
            prop_assert!(t.chars().next().unwrap().is_alphanumeric());
            prop_assert!(t.chars().last().unwrap().is_alphanumeric());
        }
    }

    #[test]
    fn vocabulary_matches_counts(segs in prop::collection::vec(segment_text(), 1..20), cap in 1usize..30) {
        let docs: Vec<Vec<String>> = segs.iter().map(|s| tokenize_normalize(s)).collect();
        prop_assume!(docs.iter().any(|d| !d.is_empty()));
        let vocab = fit_vocab(&docs, cap).unwrap();
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for d in &docs {
            for t in d {
                *tf.entry(t).or_default() += 1;
            }
        }
        prop_assert_eq!(vocab.len(), cap.min(tf.len()));
        // every kept term is at least as frequent as every dropped one
        let kept: HashSet<&str> = vocab.terms().iter().map(String::as_str).collect();
        let min_kept = kept.iter().map(|t| tf[t]).min().unwrap();
        prop_assert!(tf.iter().filter(|(t, _)| !kept.contains(*t)).all(|(_, &c)| c <= min_kept));
        let n = docs.len() as f64;
        for (i, term) in vocab.terms().iter().enumerate() {
            let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
            let want = ((1.0 + n) / (1.0 + df)).ln() + 1.0;
            prop_assert!((vocab.idf()[i] - want).abs() < 1e-12);
            prop_assert_eq!(vocab.index_of(term), Some(i));
        }
    }

    #[test]
    fn tfidf_block_is_unit_or_empty(train in prop::collection::vec(segment_text(), 1..10), seg in segment_text()) {
        let docs: Vec<Vec<String>> = train.iter().map(|s| tokenize_normalize(s)).collect();
        prop_assume!(docs.iter().any(|d| !d.is_empty()));
        let vocab = fit_vocab(&docs, DEFAULT_VOCAB_CAP).unwrap();
        let v = vectorize(&instance(&seg, 4.5), &vocab);
        prop_assert_eq!(v.tfidf_dim, vocab.len());
        prop_assert_eq!(v.structured, [10.0, 20.0, 30.0, 12.0, 2.0, 4.5]);
        let idx: Vec<usize> = v.tfidf.iter().map(|e| e.0).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(idx.iter().all(|&i| i < vocab.len()));
        let norm: f64 = v.tfidf.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        let known = tokenize_normalize(&seg).iter().any(|t| vocab.index_of(t).is_some());
        if known {
            prop_assert!((norm - 1.0).abs() < 1e-12);
        } else {
            prop_assert!(v.tfidf.is_empty());
        }
        let dense = v.dense();
        prop_assert_eq!(dense.len(), v.dim());
        prop_assert_eq!(v.sparse().filter(|(_, x)| *x != 0.0).count(), dense.iter().filter(|x| **x != 0.0).count());
    }

    #[test]
    fn scaler_standardises_training_rows(rows in prop::collection::vec(prop::array::uniform6(-1e3f64..1e3), 2..30)) {
        let vs: Vec<FeatureVector> = rows
            .iter()
            .map(|&s| FeatureVector { structured: s, tfidf: vec![], tfidf_dim: 0 })
            .collect();
        let scaler = fit_scaler(&vs).unwrap();
        let out: Vec<FeatureVector> = vs.iter().map(|v| apply_scaler(v, &scaler)).collect();
        let n = out.len() as f64;
        for j in 0..STRUCTURED_DIM {
            if scaler.std[j] < 1e-9 {
                continue;
            }
            let mean = out.iter().map(|v| v.structured[j]).sum::<f64>() / n;
            let var = out.iter().map(|v| (v.structured[j] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn worked_tfidf_example() {
    let docs = vec![
        tokenize_normalize("apnea index was 19.5"),
        tokenize_normalize("the apnea hypopnea index"),
        tokenize_normalize("oxygen saturation"),
    ];
    let vocab = fit_vocab(&docs, 400).unwrap();
    // apnea, index (tf 2) first, then the tf-1 terms alphabetically
    assert_eq!(&vocab.terms()[..3], ["apnea", "index", "19.5"]);
    let v = vectorize_tokens([0.0; 6], &tokenize_normalize("apnea apnea oxygen"), &vocab);
    let idf_apnea = (4.0f64 / 3.0).ln() + 1.0;
    let idf_oxygen = 2.0f64.ln() + 1.0;
    let (a, o) = (2.0 * idf_apnea, idf_oxygen);
    let norm = (a * a + o * o).sqrt();
    let got: HashMap<usize, f64> = v.tfidf.iter().copied().collect();
    assert!((got[&vocab.index_of("apnea").unwrap()] - a / norm).abs() < 1e-12);
    assert!((got[&vocab.index_of("oxygen").unwrap()] - o / norm).abs() < 1e-12);
}

#[test]
fn degenerate_inputs_rejected() {
    assert!(fit_vocab(&[vec![], vec![]], 10).is_err());
    let one = FeatureVector {
        structured: [1.0; 6],
        tfidf: vec![],
        tfidf_dim: 0,
    };
    assert!(fit_scaler(std::slice::from_ref(&one)).is_err());
    let s = fit_scaler(&[one.clone(), one.clone()]).unwrap();
    assert_eq!(apply_scaler(&one, &s), one);
}
