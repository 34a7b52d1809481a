//! Feature selection plus threshold classification as one trainable model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::VertexField;
use crate::classifier::ThresholdModel;
use crate::error::{Error, Result};
use crate::features::{
    assemble_feature_vector, deformation_index, distance_features, distance_maxima,
    extract_windows, scale_distances, MixWeights, DISTANCE_COUNT,
};
use crate::landmarks::{Label, Landmark, SubjectRecord};
use crate::registration::{register, RegParams};
use crate::select::{bagged_p_values, select_top_k, SelectionResult};

/// Registration-derived inputs of one subject: the window values of its
/// Beltrami coefficient and its raw airway distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatures {
    pub windows: Vec<Complex64>,
    pub distances: [f64; DISTANCE_COUNT],
}

impl SubjectFeatures {
    /// Register `reference` onto `subject` and read the resulting Beltrami
    /// coefficient in `w`-windows around the reference landmarks. The
    /// reference itself gets the identity map, so all its windows are zero.
    pub fn extract(
        reference: &SubjectRecord,
        subject: &SubjectRecord,
        params: &RegParams,
        w: usize,
    ) -> Result<Self> {
        let centers = reference.landmarks.select(&Landmark::WINDOWED);
        let mu = if std::ptr::eq(reference, subject) {
            VertexField::zeros(reference.image.width(), reference.image.height())
        } else {
            let r = register(
                &reference.image,
                &subject.image,
                reference.landmarks.positions(),
                subject.landmarks.positions(),
                params,
            )?;
            r.mu.to_vertices()
        };
        Ok(SubjectFeatures {
            windows: extract_windows(&mu, &centers, w)?,
            distances: distance_features(&subject.landmarks)?,
        })
    }

    /// Full feature vector under `weights`, with distances scaled by `maxima`.
    pub fn vector(&self, weights: MixWeights, maxima: [f64; DISTANCE_COUNT]) -> Result<Vec<f64>> {
        assemble_feature_vector(&self.windows, weights, &scale_distances(self.distances, maxima))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub weights: MixWeights,
    pub selection: SelectionResult,
    pub dist_norm_maxima: [f64; DISTANCE_COUNT],
    pub c_mean: Vec<f64>,
    pub d_opt: f64,
}

impl TrainedModel {
    /// Selected deformation indices followed by the three scaled distances.
    pub fn trimmed(&self, s: &SubjectFeatures) -> Result<Vec<f64>> {
        let deform: Vec<f64> = s.windows.iter().map(|&m| deformation_index(m, self.weights)).collect();
        let mut row = self.selection.trim(&deform)?;
        row.extend(scale_distances(s.distances, self.dist_norm_maxima));
        Ok(row)
    }

    fn threshold(&self) -> ThresholdModel {
        ThresholdModel {
            c_mean: self.c_mean.clone(),
            d_opt: self.d_opt,
        }
    }

    /// Predicted label and distance to the control mean.
    pub fn decide(&self, s: &SubjectFeatures) -> Result<(Label, f64)> {
        let t = self.threshold();
        let d = t.distance(&self.trimmed(s)?)?;
        Ok((t.classify_distance(d), d))
    }

    pub fn predict(&self, s: &SubjectFeatures) -> Result<Label> {
        self.decide(s).map(|(l, _)| l)
    }
}

/// Normalize distances, rank deformation features by bagged p-value, keep
/// the best `k`, and fit the threshold classifier on the trimmed vectors.
pub fn fit_pipeline(
    subjects: &[&SubjectFeatures],
    labels: &[Label],
    weights: MixWeights,
    k: usize,
) -> Result<TrainedModel> {
    if subjects.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} subjects but {} labels",
            subjects.len(),
            labels.len()
        )));
    }
    let dists: Vec<[f64; DISTANCE_COUNT]> = subjects.iter().map(|s| s.distances).collect();
    let maxima = distance_maxima(&dists)?;
    let deform: Vec<Vec<f64>> = subjects
        .iter()
        .map(|s| s.windows.iter().map(|&m| deformation_index(m, weights)).collect())
        .collect();
    let scaled: Vec<[f64; DISTANCE_COUNT]> = dists.iter().map(|&d| scale_distances(d, maxima)).collect();
    fit_indices(&deform, &scaled, labels, weights, maxima, k)
}

/// Fit on precomputed deformation indices and already scaled distances;
/// `weights` and `maxima` are the values they were computed with.
pub fn fit_indices(
    deform: &[Vec<f64>],
    scaled: &[[f64; DISTANCE_COUNT]],
    labels: &[Label],
    weights: MixWeights,
    maxima: [f64; DISTANCE_COUNT],
    k: usize,
) -> Result<TrainedModel> {
    if deform.len() != labels.len() || scaled.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} index rows and {} distance rows for {} labels",
            deform.len(),
            scaled.len(),
            labels.len()
        )));
    }
    let p = bagged_p_values(deform, labels)?;
    let selection = select_top_k(&p, k)?;
    let rows = deform
        .iter()
        .zip(scaled)
        .map(|(d, s)| {
            let mut row = selection.trim(d)?;
            row.extend(s);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let threshold = ThresholdModel::train(&rows, labels)?;
    Ok(TrainedModel {
        weights,
        selection,
        dist_norm_maxima: maxima,
        c_mean: threshold.c_mean,
        d_opt: threshold.d_opt,
    })
}
