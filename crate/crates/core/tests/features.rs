use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use proptest::prelude::*;
use qcosa::beltrami::VertexField;
use qcosa::features::{
    deformation_index, extract_windows, feature_names, fold_argument, MixWeights, DEFAULT_WINDOW,
};
use qcosa::io::FeatureMatrix;
use qcosa::landmarks::{Label, Landmark, LandmarkSet};
use qcosa::measurements::{conventional_measurements, MEASUREMENT_NAMES};
use qcosa::phantom::PhantomSpec;
use qcosa::pipeline::SubjectFeatures;

fn weights() -> impl Strategy<Value = MixWeights> {
    (0.0f64..=0.5 * PI).prop_map(|t| MixWeights::from_angle(t).unwrap())
}

fn mu() -> impl Strategy<Value = Complex64> {
    (0.0f64..0.99, -PI..PI).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

#[test]
fn feature_counts() {
    assert_eq!(feature_names(&Landmark::WINDOWED, DEFAULT_WINDOW).unwrap().len(), 1218);
    assert_eq!(feature_names(&Landmark::WINDOWED, 1).unwrap().len(), 18);

    let spec = PhantomSpec::default();
    let lm = spec.base_landmarks();
    let field = VertexField::zeros(spec.width, spec.height);
    let centers = lm.select(&Landmark::WINDOWED);
    for (w, n) in [(9, 1218), (1, 18)] {
        let f = SubjectFeatures {
            windows: extract_windows(&field, &centers, w).unwrap(),
            distances: [1.0, 2.0, 3.0],
        };
        assert_eq!(f.vector(MixWeights::default(), [2.0, 2.0, 3.0]).unwrap().len(), n);
    }
}

#[test]
fn named_index_example() {
    let w = MixWeights::normalized(0.985, 0.173).unwrap();
    let v = deformation_index(Complex64::from_polar(0.5, PI / 3.0), w);
    let expect = (0.985 * 0.5 + 0.173 / 3.0) / 0.985f64.hypot(0.173);
    assert!((v - expect).abs() < 1e-12);
}

fn similarity(lm: &LandmarkSet, scale: f64, angle: f64, shift: Complex64) -> LandmarkSet {
    let a = Complex64::from_polar(scale, angle);
    lm.map(|p| a * p + shift)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn index_bounds(m in mu(), w in weights()) {
        let v = deformation_index(m, w);
        prop_assert!(v >= 0.0 && v <= w.alpha() + w.beta() + 1e-15);
        prop_assert!((0.0..=PI).contains(&fold_argument(m)));
    }

    #[test]
    fn index_monotone_in_modulus(r in 0.0f64..0.98, dr in 0.0f64..0.01, t in -PI..PI, w in weights()) {
        let a = deformation_index(Complex64::from_polar(r, t), w);
        let b = deformation_index(Complex64::from_polar(r + dr, t), w);
        prop_assert!(b >= a - 1e-15);
    }

    #[test]
    fn pure_modulus_weights_rank_by_modulus(ms in proptest::collection::vec(mu(), 2..20)) {
        let w = MixWeights::default();
        let by_index = (0..ms.len()).max_by(|&i, &j| deformation_index(ms[i], w).total_cmp(&deformation_index(ms[j], w)));
        let by_norm = (0..ms.len()).max_by(|&i, &j| ms[i].norm().total_cmp(&ms[j].norm()));
        prop_assert_eq!(by_index, by_norm);
    }

    #[test]
    fn window_round_trip(x in 0usize..20, y in 0usize..15, w in prop_oneof![Just(1usize), Just(3), Just(5)]) {
        let field = VertexField::new(
            20,
            15,
            (0..300).map(|i| Complex64::new(i as f64, -(i as f64))).collect(),
        ).unwrap();
        let p = Complex64::new(x as f64 + 0.3, y as f64 - 0.4);
        let win = extract_windows(&field, &[p], w).unwrap();
        prop_assert_eq!(win.len(), w * w);
        let r = (w / 2) as isize;
        let (cx, cy) = (x as isize, (p.im.round().max(0.0)) as isize);
        for (k, v) in win.iter().enumerate() {
            let dx = (k % w) as isize - r;
            let dy = (k / w) as isize - r;
            let xx = (cx + dx).clamp(0, 19) as usize;
            let yy = (cy + dy).clamp(0, 14) as usize;
            prop_assert_eq!(*v, field.at(xx, yy));
        }
    }

    #[test]
    fn measurements_similarity_invariant(
        scale in 0.5f64..2.0,
        angle in -PI..PI,
        sx in -50.0f64..50.0,
        sy in -50.0f64..50.0,
    ) {
        let lm = PhantomSpec::default().base_landmarks();
        let a = conventional_measurements(&lm).unwrap();
        let b = conventional_measurements(&similarity(&lm, scale, angle, Complex64::new(sx, sy))).unwrap();
        for (k, name) in MEASUREMENT_NAMES.iter().enumerate() {
            let expect = if k < 9 { a.values[k] * scale } else { a.values[k] };
            prop_assert!((b.values[k] - expect).abs() < 1e-9 * expect.abs().max(1.0), "{}", name);
        }
    }

    #[test]
    fn feature_matrix_round_trips(
        rows in proptest::collection::vec(proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 4), 1..6),
    ) {
        let m = FeatureMatrix {
            columns: vec!["N[0,0]".into(), "MP-H".into(), "H-Phw".into(), "ph1-ph2".into()],
            ids: (0..rows.len()).map(|i| format!("s{i}")).collect(),
            labels: (0..rows.len()).map(|i| if i % 2 == 0 { Some(Label::Control) } else { None }).collect(),
            rows,
            ..FeatureMatrix::default()
        };
        let back = FeatureMatrix::from_csv(&m.to_csv().unwrap(), Path::new("m.csv")).unwrap();
        prop_assert_eq!(back, m);
    }
}
