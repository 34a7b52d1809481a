use proptest::prelude::*;
use qcosa::landmarks::Label;
use qcosa::select::{bagged_p_values, select_top_k};
use qcosa::stats::{welch_t_p, welch_t_test};

/// `(a, b, t, df, p)` from an independent two-sided Welch implementation.
#[allow(clippy::type_complexity)]
const FIXTURES: [(&[f64], &[f64], f64, f64, f64); 10] = [
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0], -1.0, 8.0, 0.34659350708733416),
    (&[0.0, 0.0, 0.0, 0.0], &[10.0, 10.0, 10.0, 10.0001], -400001.0000009323, 3.0, 3.445779752871818e-17),
    (
        &[1.1, 2.3, 0.7, 1.9],
        &[3.2, 2.8, 4.1, 3.9, 3.3],
        -4.497337459658128,
        5.362815261835121,
        0.005416627241125303,
    ),
    (
        &[5.0, 5.5, 6.1, 4.8, 5.2, 5.9],
        &[5.1, 5.4, 6.0, 4.9],
        0.20965696734438571,
        6.8962358427714845,
        0.8399943179405581,
    ),
    (
        &[0.1, 0.4, -0.3],
        &[2.5, -1.0, 4.2, 0.3, 1.1, 3.8, -2.2],
        -1.2637123187014798,
        6.563871640172686,
        0.24936076112059732,
    ),
    (
        &[10.0, 12.0, 11.0, 13.0, 9.0, 10.5, 11.5, 12.5],
        &[14.0, 15.0, 13.5, 16.0, 14.5],
        -5.3447279899277005,
        10.626564802348327,
        0.00026515769100100064,
    ),
    (&[-1.0, -2.0, -3.0], &[1.0, 2.0, 3.0], -4.898979485566356, 4.0, 0.00804989310083772),
    (
        &[0.001, 0.002, 0.0015, 0.0012],
        &[0.0011, 0.0019, 0.0016, 0.0013, 0.0017],
        -0.36513713339635445,
        5.393693781058626,
        0.728894073462306,
    ),
    (
        &[100.0, 101.0, 99.0, 100.5, 100.2, 99.8, 100.1, 99.9, 100.3, 100.4],
        &[100.6, 100.9, 101.2, 100.7, 100.8, 101.0],
        -3.9873055852499464,
        12.965555943821336,
        0.00155640656135405,
    ),
    (
        &[1.0, 1.0, 1.0, 2.0],
        &[3.0, 3.0, 3.0, 3.0, 4.0, 4.0],
        -6.37058989297032,
        6.7390315980904765,
        0.00044132389363656875,
    ),
];

#[test]
fn welch_matches_reference_fixtures() {
    for (a, b, t, df, p) in FIXTURES {
        let w = welch_t_test(a, b).unwrap();
        assert!((w.p - p).abs() < 1e-6, "p {} vs {p} for {a:?} {b:?}", w.p);
        assert!((w.t - t).abs() <= 1e-9 * t.abs().max(1.0), "t {} vs {t}", w.t);
        assert!((w.df - df).abs() <= 1e-9 * df, "df {} vs {df}", w.df);
    }
    assert!(welch_t_p(&[0.0; 4], &[10.0, 10.0, 10.0, 10.0001]).unwrap() < 1e-6);
}

#[test]
fn welch_rejects_short_samples() {
    assert!(welch_t_p(&[1.0], &[1.0, 2.0]).is_err());
    assert!(welch_t_p(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
}

/// Leave-one-out minimum, written out directly from its definition.
fn brute_force_bagged(rows: &[Vec<f64>], labels: &[Label]) -> Vec<f64> {
    let width = rows[0].len();
    (0..width)
        .map(|k| {
            (0..rows.len())
                .map(|out| {
                    let pick = |class: Label| -> Vec<f64> {
                        (0..rows.len())
                            .filter(|&i| i != out && labels[i] == class)
                            .map(|i| rows[i][k])
                            .collect()
                    };
                    welch_t_p(&pick(Label::Control), &pick(Label::Osa)).unwrap()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn cohort() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Label>)> {
    (3usize..=5, 3usize..=5, 1usize..=6).prop_flat_map(|(nc, no, width)| {
        let labels: Vec<Label> = (0..nc + no)
            .map(|i| if i < nc { Label::Control } else { Label::Osa })
            .collect();
        (
            proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, width), nc + no),
            Just(labels),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bagged_equals_brute_force((rows, labels) in cohort()) {
        prop_assert_eq!(bagged_p_values(&rows, &labels).unwrap(), brute_force_bagged(&rows, &labels));
    }

    #[test]
    fn top_k_matches_sorted_enumeration(
        p in proptest::collection::vec(prop_oneof![0.0f64..1.0, Just(0.5)], 1..40),
        k_frac in 0.0f64..1.0,
    ) {
        let k = 1 + ((p.len() - 1) as f64 * k_frac) as usize;
        let sel = select_top_k(&p, k).unwrap();
        let mut pairs: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
        pairs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let expect: Vec<usize> = pairs[..k].iter().map(|&(_, i)| i).collect();
        prop_assert_eq!(sel.selected_indices, expect);
    }

    #[test]
    fn welch_symmetric_and_affine_invariant(
        a in proptest::collection::vec(-10.0f64..10.0, 2..12),
        b in proptest::collection::vec(-10.0f64..10.0, 2..12),
        shift in -100.0f64..100.0,
        scale in 0.1f64..10.0,
    ) {
        let p = welch_t_p(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - welch_t_p(&b, &a).unwrap()).abs() < 1e-12);
        let f = |s: &[f64]| s.iter().map(|v| v * scale + shift).collect::<Vec<_>>();
        let q = welch_t_p(&f(&a), &f(&b)).unwrap();
        prop_assert!((p - q).abs() < 1e-7, "{} vs {}", p, q);
    }
}
