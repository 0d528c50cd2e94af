use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scandoc::classifiers::*;
use scandoc::features::FeatureVector;
use scandoc::Label;

fn fv(structured: [f64; 6], tfidf: &[f64]) -> FeatureVector {
    FeatureVector {
        structured,
        tfidf: tfidf.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect(),
        tfidf_dim: tfidf.len(),
    }
}

/// Three separated clusters; the tf-idf block carries a weak class cue.
fn clusters(n_per_class: usize, seed: u64) -> (Vec<FeatureVector>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [(-3.0, 0.0), (3.0, 0.0), (0.0, 4.0)];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            let mut t = [0.0; 4];
            t[c] = rng.gen_range(0.3..1.0);
            t[3] = rng.gen_range(0.0..0.5);
            x.push(fv(
                [cx + rng.gen_range(-0.8..0.8), cy + rng.gen_range(-0.8..0.8), 0.0, 0.0, 1.0, 0.0],
                &t,
            ));
            y.push(Label::ALL[c]);
        }
    }
    (x, y)
}

fn all_specs() -> Vec<ClassifierSpec> {
    ClassifierKind::ALL
        .into_iter()
        .map(|k| match k {
            ClassifierKind::RandomForest => ClassifierSpec::new(k).with("trees", 15.0),
            _ => ClassifierSpec::new(k),
        })
        .collect()
}

#[test]
fn every_kind_learns_separated_clusters() {
    let (x, y) = clusters(25, 1);
    let (tx, ty) = clusters(15, 2);
    for spec in all_specs() {
        let m = train(&spec, &x, &y, 9).unwrap();
        let acc = m.accuracy(&tx, &ty).unwrap();
        assert!(acc >= 0.95, "{} accuracy {acc}", spec.kind);
        for v in &tx {
            let p = m.predict_proba(v).unwrap();
            assert!(p.iter().all(|&q| (0.0..=1.0).contains(&q)), "{}", spec.kind);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{}", spec.kind);
        }
    }
}

#[test]
fn training_is_deterministic_in_seed() {
    let (x, y) = clusters(12, 3);
    for spec in all_specs() {
        let a = train(&spec, &x, &y, 5).unwrap();
        let b = train(&spec, &x, &y, 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let back: TrainedClassifier = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        for v in &x {
            assert_eq!(back.predict_proba(v).unwrap(), a.predict_proba(v).unwrap());
        }
    }
}

#[test]
fn input_errors() {
    let (x, y) = clusters(5, 4);
    let lr = ClassifierSpec::new(ClassifierKind::Lr);
    assert!(train(&lr, &x, &y[1..], 0).is_err());
    let only_two: Vec<Label> = y.iter().map(|&l| if l == Label::Other { Label::Ahi } else { l }).collect();
    assert!(train(&lr, &x, &only_two, 0).is_err());
    // kNN and forests cope with a missing class
    assert!(train(&ClassifierSpec::new(ClassifierKind::Knn), &x, &only_two, 0).is_ok());
    let m = train(&lr, &x, &y, 0).unwrap();
    assert!(m.predict_proba(&fv([0.0; 6], &[0.0; 7])).is_err());
    assert!(ClassifierSpec::new(ClassifierKind::Knn).with("k", 0.0).validate().is_err());
    assert!(ClassifierSpec::new(ClassifierKind::Lr).with("depth", 1.0).validate().is_err());
}

#[test]
fn heavy_l1_zeroes_weights() {
    let (x, y) = clusters(20, 6);
    let spec = ClassifierSpec::new(ClassifierKind::Lasso).with("lambda", 0.05);
    let ModelParams::Linear(m) = train(&spec, &x, &y, 0).unwrap().params else {
        panic!("linear model expected")
    };
    let zeros = (0..10).flat_map(|f| (0..3).map(move |c| (f, c))).filter(|&(f, c)| m.weight(f, c) == 0.0).count();
    // the constant page column and the two always-zero structured columns at least
    assert!(zeros >= 9, "{zeros} exact zeros");
}

#[test]
fn single_unrestricted_tree_fits_training_set() {
    let (x, y) = clusters(15, 7);
    let spec = ClassifierSpec::new(ClassifierKind::RandomForest)
        .with("trees", 1.0)
        .with("bootstrap", 0.0)
        .with("max_features", 10.0);
    let m = train(&spec, &x, &y, 0).unwrap();
    for (v, l) in x.iter().zip(&y) {
        let p = m.predict_proba(v).unwrap();
        assert_eq!(p[l.index()], 1.0);
    }
}

#[test]
fn svm_probabilities_follow_decisions() {
    let (x, y) = clusters(15, 8);
    let m = train(&ClassifierSpec::new(ClassifierKind::Svm), &x, &y, 3).unwrap();
    let ModelParams::Svm(svm) = &m.params else { panic!("svm expected") };
    let (tx, _) = clusters(10, 9);
    for v in &tx {
        let d = svm.decision(v);
        let p = m.predict_proba(v).unwrap();
        // large margins saturate the softmax, so only the weak order survives
        for i in 0..3 {
            for j in 0..3 {
                if d[i] > d[j] {
                    assert!(p[i] >= p[j], "{d:?} {p:?}");
                }
            }
        }
        assert_eq!(argmax3(&p), argmax3(&d));
    }
}

fn dense_sq(a: &FeatureVector, b: &FeatureVector) -> f64 {
    a.dense().iter().zip(b.dense()).map(|(p, q)| (p - q) * (p - q)).sum()
}

proptest! {
    #[test]
    fn knn_matches_brute_force(
        pts in prop::collection::vec((prop::array::uniform2(-5i32..5), prop::array::uniform3(0u8..3), 0usize..3), 3..25),
        query in (prop::array::uniform2(-5i32..5), prop::array::uniform3(0u8..3)),
        k in 1usize..6,
    ) {
        let make = |s: [i32; 2], t: [u8; 3]| {
            fv([s[0] as f64, s[1] as f64, 0.0, 0.0, 0.0, 0.0], &t.map(|v| v as f64 * 0.5))
        };
        let x: Vec<FeatureVector> = pts.iter().map(|&(s, t, _)| make(s, t)).collect();
        let y: Vec<Label> = pts.iter().map(|&(_, _, c)| Label::ALL[c]).collect();
        let q = make(query.0, query.1);
        let m = train(&ClassifierSpec::new(ClassifierKind::Knn).with("k", k as f64), &x, &y, 0).unwrap();
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| dense_sq(&x[a], &q).total_cmp(&dense_sq(&x[b], &q)).then(a.cmp(&b)));
        order.truncate(k.min(x.len()));
        let ModelParams::Knn(knn) = &m.params else { panic!("knn expected") };
        prop_assert_eq!(&knn.neighbors(&q), &order);
        let mut want = [0.0; 3];
        for &i in &order {
            want[y[i].index()] += 1.0 / order.len() as f64;
        }
        let got = m.predict_proba(&q).unwrap();
        for c in 0..3 {
            prop_assert!((got[c] - want[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn report_folds_partition(n in 2usize..40, folds in 2usize..6, seed in 0u64..100) {
        let ids: Vec<String> = (0..n).map(|i| format!("r{}", i % (n / 2 + 1))).collect();
        let unique = n / 2 + 1;
        let out = assign_report_folds(&ids, folds, seed);
        if unique < folds {
            prop_assert!(out.is_err());
        } else {
            let out = out.unwrap();
            prop_assert_eq!(out.len(), unique);
            prop_assert!(out.values().all(|&f| f < folds));
            let mut sizes = vec![0usize; folds];
            for &f in out.values() {
                sizes[f] += 1;
            }
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(&out, &assign_report_folds(&ids, folds, seed).unwrap());
        }
    }
}

#[test]
fn cross_validation_prefers_the_better_spec() {
    let (x, y) = clusters(20, 10);
    let groups: Vec<String> = (0..x.len()).map(|i| format!("r{}", i / 3)).collect();
    // k = 59 votes with (almost) the whole training fold, so it cannot separate
    let grid = vec![
        ClassifierSpec::new(ClassifierKind::Knn).with("k", 59.0),
        ClassifierSpec::new(ClassifierKind::Knn).with("k", 3.0),
    ];
    let out = cross_validate(&grid, &x, &y, &groups, 5, 1).unwrap();
    assert_eq!(out.best.param("k"), 3.0);
    assert!(out.scores[1] > out.scores[0]);
    assert_eq!(out.model.n_train, x.len());
    assert!(cross_validate(&[], &x, &y, &groups, 5, 1).is_err());
    assert!(cross_validate(&grid, &x, &y, &groups[1..], 5, 1).is_err());
}
