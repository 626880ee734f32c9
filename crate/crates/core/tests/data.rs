use condcomp::data::*;
use condcomp::{Error, Points};
use proptest::prelude::*;

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

#[test]
fn heteroscedastic_moments_are_within_clt_bands() {
    let p = HeteroscedasticParams::default();
    let n = 10_000;
    let d = gen_heteroscedastic(n, &p, 1).unwrap();
    let x = d.features.as_slice();
    let (mean, var) = moments(x);
    assert!(mean.abs() < 4.0 * (4.0 / n as f64).sqrt(), "{mean}");
    // SE of the sample variance of a normal: σ² sqrt(2/n).
    assert!((var - 4.0).abs() < 4.0 * 4.0 * (2.0 / n as f64).sqrt(), "{var}");
    let z: Vec<f64> =
        x.iter().zip(d.responses.as_slice()).map(|(&x, &y)| (y - p.mean(x)) / p.variance(x).sqrt()).collect();
    let (zm, zv) = moments(&z);
    assert!(zm.abs() < 4.0 / (n as f64).sqrt() && (zv - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(), "{zm} {zv}");
}

#[test]
fn heteroscedastic_reference_values() {
    let p = HeteroscedasticParams::default();
    let bumps = 3.0 * (-25.0f64).exp() - 3.0 * (-40.0f64).exp() + 6.0 * (-2.0f64).exp() - 6.0 * (-50.0f64).exp();
    assert!((p.mean(0.0) - bumps).abs() < 1e-15);
    assert!((p.mean(0.0) - 0.81201).abs() < 1e-5);
    assert_eq!(p.variance(0.0), 0.1);
    let bad = HeteroscedasticParams { b: [1.0, 0.0, 1.0, 1.0], ..p };
    assert!(gen_heteroscedastic(10, &bad, 0).is_err());
    let bad = HeteroscedasticParams { sigma1_2: -1.0, ..p };
    assert!(gen_heteroscedastic(10, &bad, 0).is_err());
    assert_eq!(gen_heteroscedastic(20, &p, 4).unwrap(), gen_heteroscedastic(20, &p, 4).unwrap());
}

#[test]
fn imbalanced_has_all_classes_and_is_deterministic() {
    let p = ImbalancedParams::default();
    for seed in 0..10 {
        let d = gen_imbalanced(2000, &p, seed).unwrap();
        assert!(d.discrete);
        assert_eq!(d.features.dim(), 2);
        for c in 0..4 {
            assert!(d.responses.as_slice().contains(&(c as f64)), "seed {seed} lacks class {c}");
        }
    }
    assert_eq!(gen_imbalanced(100, &p, 3).unwrap(), gen_imbalanced(100, &p, 3).unwrap());
    assert_ne!(gen_imbalanced(100, &p, 3).unwrap(), gen_imbalanced(100, &p, 4).unwrap());
}

#[test]
fn dominant_score_selects_its_class() {
    // Features stay in the positive quadrant, where class 2 dominates.
    let p = ImbalancedParams {
        beta: [[0.0, 0.0], [0.0, 0.0], [1e6, 1e6], [0.0, 0.0]],
        noise_var: 0.0,
        components: 3,
        half_width: 1.0,
        component_sd: 0.01,
    };
    let d = gen_imbalanced(500, &p, 0).unwrap();
    for (x, &y) in d.features.rows().zip(d.responses.as_slice()) {
        if x[0] + x[1] > 0.1 {
            assert_eq!(y, 2.0);
        } else if x[0] + x[1] < -0.1 {
            assert_ne!(y, 2.0);
        }
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let d = LabelledDataset::new(
        Points::from_rows(&[[0.1, -2.5e-17], [1.0 / 3.0, 4.0], [-7.25, 1e300]]).unwrap(),
        Points::from_scalars(&[std::f64::consts::PI, -0.0, 2.0]),
        false,
    )
    .unwrap();
    save_csv(&d, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = load_csv(&path, &["x0", "x1"], &["y"], false).unwrap();
    assert_eq!(back, d);
    save_csv(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn csv_errors_name_row_and_column() {
    let text = "a,b,label\n1,2,0\n3,oops,1\n";
    match read_csv(text.as_bytes(), &["a", "b"], &["label"], true) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "b")),
        other => panic!("{other:?}"),
    }
    let text = "a,label\n1,0\n3,1.5\n";
    assert!(matches!(read_csv(text.as_bytes(), &["a"], &["label"], true), Err(Error::InvalidInput(_))));
    assert!(read_csv(text.as_bytes(), &["a"], &["label"], false).is_ok());
    assert!(matches!(read_csv(text.as_bytes(), &["zz"], &["label"], false), Err(Error::InvalidInput(_))));
    assert!(matches!(load_csv("/nonexistent/file.csv", &["a"], &["b"], false), Err(Error::Io(_))));
}

fn toy(n: usize, seed: u64) -> LabelledDataset {
    gen_heteroscedastic(n, &HeteroscedasticParams::default(), seed).unwrap()
}

#[test]
fn standardised_data_has_zero_mean_unit_sd() {
    let s = standardize(&toy(500, 2), None).unwrap();
    for pts in [&s.features, &s.responses] {
        let (m, v) = moments(pts.as_slice());
        assert!(m.abs() < 1e-10 && (v.sqrt() - 1.0).abs() < 1e-10);
    }
    let again = standardize(&LabelledDataset { standardisation: None, ..s.clone() }, None).unwrap();
    let t = again.standardisation.unwrap();
    assert!(t.features.mean[0].abs() < 1e-8 && (t.features.sd[0] - 1.0).abs() < 1e-8);
    assert!(t.responses.mean[0].abs() < 1e-8 && (t.responses.sd[0] - 1.0).abs() < 1e-8);
}

#[test]
fn standardisation_inverts_and_uses_the_fit_split() {
    let raw = split(&toy(300, 3), [0.8, 0.1, 0.1], 1).unwrap();
    let s = standardize(&raw, Some(Split::Train)).unwrap();
    let (x, y) = s.unstandardised();
    for (a, b) in
        x.as_slice().iter().zip(raw.features.as_slice()).chain(y.as_slice().iter().zip(raw.responses.as_slice()))
    {
        assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }
    let train = s.part(Split::Train).unwrap();
    let (m, v) = moments(train.features.as_slice());
    assert!(m.abs() < 1e-10 && (v.sqrt() - 1.0).abs() < 1e-10);
    assert!(standardize(&toy(10, 0), Some(Split::Val)).is_err());
}

#[test]
fn discrete_labels_are_left_alone() {
    let d = gen_imbalanced(200, &ImbalancedParams::default(), 1).unwrap();
    let s = standardize(&d, None).unwrap();
    assert_eq!(s.responses, d.responses);
}

#[test]
fn split_sizes_and_seeds() {
    let d = toy(100, 4);
    let a = split(&d, [0.8, 0.1, 0.1], 1).unwrap();
    assert_eq!([Split::Train, Split::Val, Split::Test].map(|s| a.indices(s).len()), [80, 10, 10]);
    let b = split(&d, [0.8, 0.1, 0.1], 2).unwrap();
    assert_ne!(a.splits, b.splits);
    assert!(matches!(split(&d, [0.5, 0.1, 0.1], 1), Err(Error::InvalidInput(_))));
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 1usize..200, t in 0.0f64..1.0, v in 0.0f64..1.0, seed in 0u64..1000) {
        let v = v * (1.0 - t);
        let d = toy(n, 7);
        let s = split(&d, [t, v, 1.0 - t - v], seed).unwrap();
        let mut all: Vec<usize> = [Split::Train, Split::Val, Split::Test].iter().flat_map(|&p| s.indices(p)).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
