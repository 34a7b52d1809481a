use proptest::prelude::*;
use qcosa::classifier::{l2_distance, optimal_threshold, threshold_correct, ThresholdModel};
use qcosa::landmarks::Label;
use qcosa::svm::{LinearSvm, SvmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cohort(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Label>) {
    let n = rng.gen_range(2..=50);
    let dim = rng.gen_range(1..=6);
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { Label::Osa } else { Label::Control })
        .collect();
    labels[0] = Label::Control;
    labels[1] = Label::Osa;
    let rows = labels
        .iter()
        .map(|l| {
            let shift = if l.is_osa() { 0.7 } else { 0.0 };
            (0..dim)
                // coarse values so that tied distances occur
                .map(|_| (rng.gen_range(-3.0f64..3.0) * 2.0).round() / 2.0 + shift)
                .collect()
        })
        .collect();
    (rows, labels)
}

/// Best accuracy over every threshold that changes the decision: each
/// distinct distance, and one below all of them.
fn exhaustive_best(d: &[f64], labels: &[Label]) -> usize {
    let lowest = d.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    d.iter()
        .copied()
        .chain([lowest])
        .map(|t| threshold_correct(d, labels, t))
        .max()
        .unwrap()
}

#[test]
fn threshold_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let (rows, labels) = random_cohort(&mut rng);
        let model = ThresholdModel::train(&rows, &labels).unwrap();
        let d: Vec<f64> = rows.iter().map(|r| l2_distance(r, &model.c_mean)).collect();
        let achieved = threshold_correct(&d, &labels, model.d_opt);
        assert_eq!(achieved, exhaustive_best(&d, &labels));
        assert_eq!(optimal_threshold(&d, &labels).1, achieved);
    }
}

#[test]
fn separated_example() {
    use Label::{Control as C, Osa as O};
    let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&d| vec![d]).collect();
    let (t, correct) = optimal_threshold(&[1.0, 2.0, 3.0, 4.0], &[C, C, O, O]);
    assert_eq!((t, correct), (2.5, 4));
    let m = ThresholdModel::train(&rows, &[C, C, O, O]).unwrap();
    let preds: Vec<Label> = rows.iter().map(|r| m.predict(r).unwrap()).collect();
    assert_eq!(preds, vec![C, C, O, O]);
}

#[test]
fn svm_separates_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..60 {
        let (c, l) = if i % 2 == 0 { (2.0, Label::Osa) } else { (-2.0, Label::Control) };
        rows.push(vec![c + rng.gen_range(-0.4..0.4), c + rng.gen_range(-0.4..0.4)]);
        labels.push(l);
    }
    let svm = LinearSvm::train(&rows, &labels, SvmParams::default()).unwrap();
    let correct = rows.iter().zip(&labels).filter(|(r, &l)| svm.predict(r).unwrap() == l).count();
    assert_eq!(correct, rows.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn training_is_permutation_invariant(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, labels) = random_cohort(&mut rng);
        let a = ThresholdModel::train(&rows, &labels).unwrap();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let rows2: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let labels2: Vec<Label> = order.iter().map(|&i| labels[i]).collect();
        let b = ThresholdModel::train(&rows2, &labels2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn d_opt_is_an_argmax(seed in any::<u64>(), probe in -20.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, labels) = random_cohort(&mut rng);
        let m = ThresholdModel::train(&rows, &labels).unwrap();
        let d: Vec<f64> = rows.iter().map(|r| l2_distance(r, &m.c_mean)).collect();
        prop_assert!(threshold_correct(&d, &labels, m.d_opt) >= threshold_correct(&d, &labels, probe));
    }
}
