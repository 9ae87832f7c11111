mod support;

use kgmm_core::datagen::{generate, unique_words, verify, SyntheticSpec};
use kgmm_core::eval::auroc;
use kgmm_core::{Config, Dataset, ModalityPool, Split};
use ndarray::{Array1, Array2};

fn spec(preset: &str, per_class: usize, seed: u64) -> SyntheticSpec {
    let mut c = Config::default();
    c.data.preset = preset.into();
    c.data.train_per_class = per_class;
    c.data.val_per_class = per_class / 5;
    c.data.test_per_class = per_class / 2;
    c.data.seed = seed;
    SyntheticSpec::from_config(&c.data, &c.model).unwrap()
}

#[test]
fn generation_is_deterministic_and_verified() {
    let s = spec("default", 5, 3);
    let a = generate(&s).unwrap();
    let b = generate(&s).unwrap();
    assert_eq!(a.store, b.store);
    assert_eq!(a.manifest, b.manifest);
    assert!(verify(&a).is_ok());
    assert_eq!(a.kb.len(), 4);
    for label in a.kb.labels() {
        assert_eq!(a.kb.descriptions(label).unwrap().len(), 4);
        assert!(unique_words(&a.kb, label).len() >= 2);
    }
    let c = generate(&spec("default", 5, 4)).unwrap();
    assert_ne!(a.store, c.store);
}

#[test]
fn verify_names_broken_records() {
    let mut data = generate(&spec("default", 5, 1)).unwrap();
    let first = data.manifest.records[0].id.clone();
    data.store.remove_hr(&first);
    let report = verify(&data);
    assert!(report.failures.iter().any(|f| f.contains(&first)), "{:?}", report.failures);

    let mut data = generate(&spec("default", 5, 1)).unwrap();
    data.manifest.records[1].label = "c99".into();
    let report = verify(&data);
    assert!(report.failures.iter().any(|f| f.contains("c99")), "{:?}", report.failures);
}

#[test]
fn saved_dataset_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&spec("default", 5, 2)).unwrap();
    data.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path(), 64, 3, 2).unwrap();
    assert_eq!(back.manifest, data.manifest);
    assert_eq!(back.kb, data.kb);
    assert_eq!(back.store, data.store);
}

/// 16×16 average-pooled pixels, a fixed linear map of the raw image.
fn features(data: &Dataset, split: Split, pool: ModalityPool) -> (Array2<f64>, Vec<usize>) {
    let records = data.manifest.select(split, pool);
    let mut x = Array2::zeros((records.len(), 16 * 16 * 3));
    let mut y = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let img = data.store.image(&r.id).unwrap().downsample(4).unwrap();
        for (j, v) in img.data.iter().enumerate() {
            x[[i, j]] = *v as f64;
        }
        y.push(r.label[1..].parse().unwrap());
    }
    (x, y)
}

/// Multinomial logistic regression, full-batch gradient descent on
/// standardized features.
fn linear_probe(x: &Array2<f64>, y: &[usize], test: &Array2<f64>, k: usize) -> Vec<Vec<f64>> {
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let sd = x.std_axis(ndarray::Axis(0), 0.0).mapv(|s| s.max(1e-6));
    let norm = |m: &Array2<f64>| (m - &mean) / &sd;
    let (xs, ts) = (norm(x), norm(test));
    let mut w = Array2::<f64>::zeros((xs.ncols(), k));
    let mut b = Array1::<f64>::zeros(k);
    let n = xs.nrows() as f64;
    for _ in 0..300 {
        let mut p = xs.dot(&w) + &b;
        for mut row in p.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        for (i, &label) in y.iter().enumerate() {
            p[[i, label]] -= 1.0;
        }
        let step = xs.t().dot(&p) / n + 1e-3 * &w;
        w -= &(0.1 * step);
        b -= &(0.1 * p.sum_axis(ndarray::Axis(0)) / n);
    }
    (ts.dot(&w) + &b).rows().into_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn easy_preset_is_linearly_separable_from_pixels() {
    let data = generate(&spec("easy", 100, 0)).unwrap();
    for pool in [ModalityPool::A, ModalityPool::B] {
        let (x, y) = features(&data, Split::Train, pool);
        let (tx, ty) = features(&data, Split::Test, pool);
        let score = auroc(&linear_probe(&x, &y, &tx, 4), &ty).unwrap();
        assert!(score >= 90.0, "modality {pool}: linear probe AUROC {score:.2}");
    }
}
