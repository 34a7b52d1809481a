//! Unit-circle sweep of the mixing weights with stratified cross-validation.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MixWeights;
use crate::landmarks::Label;
use crate::pipeline::{fit_pipeline, SubjectFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Angular density: candidates sit at multiples of `rho * pi`.
    pub rho: f64,
    pub folds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { rho: 0.05, folds: 10 }
    }
}

/// `(cos k rho pi, sin k rho pi)` for `k = 0..=floor(1 / (2 rho))`.
pub fn candidate_weights(rho: f64) -> Result<Vec<MixWeights>> {
    if !(rho > 0.0 && rho <= 0.5) {
        return Err(Error::InvalidInput(format!("rho must lie in (0, 1/2], got {rho}")));
    }
    let steps = (1.0 / (2.0 * rho) + 1e-9).floor() as usize;
    (0..=steps)
        .map(|k| MixWeights::from_angle(k as f64 * rho * PI))
        .collect()
}

/// Fold index per subject. Each class is shuffled and dealt round-robin, so
/// every fold receives the same class counts up to one.
pub fn stratified_folds<R: Rng>(labels: &[Label], folds: usize, rng: &mut R) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Stratification(format!("need at least 2 folds, got {folds}")));
    }
    let mut assignment = vec![0; labels.len()];
    for class in [Label::Control, Label::Osa] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Stratification(format!(
                "{} {class} subjects cannot fill {folds} folds",
                members.len()
            )));
        }
        members.shuffle(rng);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Fraction of subjects classified correctly when each fold is predicted by
/// a model fitted on the others.
pub fn cross_validate(
    subjects: &[&SubjectFeatures],
    labels: &[Label],
    fold_of: &[usize],
    weights: MixWeights,
    k: usize,
) -> Result<f64> {
    let folds = fold_of.iter().copied().max().map_or(0, |m| m + 1);
    let mut correct = 0;
    for fold in 0..folds {
        let (mut train, mut train_labels) = (Vec::new(), Vec::new());
        for (i, s) in subjects.iter().enumerate() {
            if fold_of[i] != fold {
                train.push(*s);
                train_labels.push(labels[i]);
            }
        }
        let model = fit_pipeline(&train, &train_labels, weights, k)?;
        for (i, s) in subjects.iter().enumerate() {
            if fold_of[i] == fold && model.predict(s)? == labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / subjects.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub candidates: Vec<MixWeights>,
    pub accuracies: Vec<f64>,
    pub best: usize,
}

impl SweepOutcome {
    pub fn best_weights(&self) -> MixWeights {
        self.candidates[self.best]
    }

    pub fn best_accuracy(&self) -> f64 {
        self.accuracies[self.best]
    }
}

/// Cross-validated accuracy of every candidate on a fixed fold assignment;
/// the first maximizer wins.
pub fn sweep_weights(
    rho: f64,
    subjects: &[&SubjectFeatures],
    labels: &[Label],
    fold_of: &[usize],
    k: usize,
) -> Result<SweepOutcome> {
    let candidates = candidate_weights(rho)?;
    let accuracies = candidates
        .iter()
        .map(|&w| cross_validate(subjects, labels, fold_of, w, k))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &a) in accuracies.iter().enumerate() {
        if a > accuracies[best] {
            best = i;
        }
    }
    Ok(SweepOutcome {
        candidates,
        accuracies,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quarter_density_has_three_candidates() {
        let c = candidate_weights(0.25).unwrap();
        assert_eq!(c.len(), 3);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[1].alpha() - h).abs() < 1e-15 && (c[1].beta() - h).abs() < 1e-15);
        assert_eq!((c[0].alpha(), c[0].beta()), (1.0, 0.0));
        assert_eq!(candidate_weights(0.5).unwrap().len(), 2);
        assert_eq!(candidate_weights(0.1).unwrap().len(), 6);
        assert!(candidate_weights(0.0).is_err());
        assert!(candidate_weights(0.6).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<Label> = (0..23).map(|i| if i < 11 { Label::Control } else { Label::Osa }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = stratified_folds(&labels, 5, &mut rng).unwrap();
        for fold in 0..5 {
            let c = (0..23).filter(|&i| f[i] == fold && i < 11).count();
            let o = (0..23).filter(|&i| f[i] == fold && i >= 11).count();
            assert!((2..=3).contains(&c) && (2..=3).contains(&o));
        }
        assert!(matches!(
            stratified_folds(&labels, 12, &mut rng),
            Err(Error::Stratification(_))
        ));
    }
}
