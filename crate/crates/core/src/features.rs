//! Window-based deformation-index features and the three airway distances.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::VertexField;
use crate::error::{Error, Result};
use crate::landmarks::{Landmark, LandmarkSet};

/// Default window size.
pub const DEFAULT_WINDOW: usize = 9;

/// Number of distance features appended to every vector.
pub const DISTANCE_COUNT: usize = 3;

pub const DISTANCE_NAMES: [&str; DISTANCE_COUNT] = ["MP-H", "H-Phw", "ph1-ph2"];

/// `|arg mu|` in `[0, pi]`; zero for `mu = 0`.
pub fn fold_argument(mu: Complex64) -> f64 {
    if mu == Complex64::new(0.0, 0.0) {
        0.0
    } else {
        mu.arg().abs()
    }
}

/// Mixing weights of the deformation index, on the closed first quadrant of
/// the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixWeights {
    alpha: f64,
    beta: f64,
}

impl MixWeights {
    pub const UNIT_TOLERANCE: f64 = 1e-9;

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "mixing weights must be nonnegative, got ({alpha}, {beta})"
            )));
        }
        if (alpha * alpha + beta * beta - 1.0).abs() > Self::UNIT_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "mixing weights ({alpha}, {beta}) are not on the unit circle"
            )));
        }
        Ok(MixWeights { alpha, beta })
    }

    /// Rescale any nonnegative, nonzero pair onto the unit circle.
    pub fn normalized(alpha: f64, beta: f64) -> Result<Self> {
        let r = alpha.hypot(beta);
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "cannot normalize mixing weights ({alpha}, {beta})"
            )));
        }
        MixWeights::new(alpha / r, beta / r)
    }

    /// The point at angle `theta` (radians, within `[0, pi/2]`).
    pub fn from_angle(theta: f64) -> Result<Self> {
        let (s, c) = theta.sin_cos();
        MixWeights::new(c.max(0.0), s.max(0.0))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for MixWeights {
    fn default() -> Self {
        MixWeights {
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

pub fn deformation_index(mu: Complex64, weights: MixWeights) -> f64 {
    weights.alpha * mu.norm() + weights.beta * fold_argument(mu) / PI
}

fn check_window(w: usize) -> Result<usize> {
    if w == 0 || w % 2 == 0 {
        return Err(Error::InvalidWindow(w));
    }
    Ok(w / 2)
}

fn snap(p: Complex64, width: usize, height: usize) -> (isize, isize) {
    let x = p.re.round().clamp(0.0, (width - 1) as f64) as isize;
    let y = p.im.round().clamp(0.0, (height - 1) as f64) as isize;
    (x, y)
}

/// `w x w` blocks of vertex values around each landmark, concatenated in the
/// given landmark order. Each block is scanned row by row from the top, left
/// to right within a row; vertices outside the grid repeat the border value.
pub fn extract_windows(
    mu: &VertexField,
    landmarks: &[Complex64],
    w: usize,
) -> Result<Vec<Complex64>> {
    let r = check_window(w)? as isize;
    let (width, height) = (mu.width(), mu.height());
    let mut out = Vec::with_capacity(landmarks.len() * w * w);
    for &p in landmarks {
        let (cx, cy) = snap(p, width, height);
        for dy in -r..=r {
            let y = (cy + dy).clamp(0, height as isize - 1) as usize;
            for dx in -r..=r {
                let x = (cx + dx).clamp(0, width as isize - 1) as usize;
                out.push(mu.at(x, y));
            }
        }
    }
    Ok(out)
}

/// Column headers of the deformation block: `"<landmark>[dx,dy]"`.
pub fn window_feature_names(landmarks: &[Landmark], w: usize) -> Result<Vec<String>> {
    let r = check_window(w)? as isize;
    let mut names = Vec::with_capacity(landmarks.len() * w * w);
    for l in landmarks {
        for dy in -r..=r {
            for dx in -r..=r {
                names.push(format!("{l}[{dx},{dy}]"));
            }
        }
    }
    Ok(names)
}

/// All column headers of a full feature vector.
pub fn feature_names(landmarks: &[Landmark], w: usize) -> Result<Vec<String>> {
    let mut names = window_feature_names(landmarks, w)?;
    names.extend(DISTANCE_NAMES.iter().map(|s| s.to_string()));
    Ok(names)
}

/// Perpendicular distance from `p` to the line through `a` and `b`.
pub(crate) fn line_distance(p: Complex64, a: Complex64, b: Complex64) -> Option<f64> {
    let d = b - a;
    let len = d.norm();
    if len < 1e-12 {
        return None;
    }
    Some(((p - a).conj() * d).im.abs() / len)
}

/// `(MP-H, H-Phw, ph1-ph2)` in pixels; the mandibular plane is the Go-Me line.
pub fn distance_features(lm: &LandmarkSet) -> Result<[f64; DISTANCE_COUNT]> {
    let mp_h = line_distance(lm.get(Landmark::H), lm.get(Landmark::Go), lm.get(Landmark::Me))
        .ok_or_else(|| Error::DegenerateLandmark("Go and Me coincide".into()))?;
    let h_phw = (lm.get(Landmark::H) - lm.get(Landmark::Phw)).norm();
    let ph = (lm.get(Landmark::Ph1) - lm.get(Landmark::Ph2)).norm();
    Ok([mp_h, h_phw, ph])
}

/// Column maxima of a distance table.
pub fn distance_maxima(cohort: &[[f64; DISTANCE_COUNT]]) -> Result<[f64; DISTANCE_COUNT]> {
    if cohort.is_empty() {
        return Err(Error::InvalidCohort("no subjects to normalize".into()));
    }
    let mut max = [0.0f64; DISTANCE_COUNT];
    for row in cohort {
        for (m, &d) in max.iter_mut().zip(row) {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid distance {d}")));
            }
            *m = m.max(d);
        }
    }
    if let Some(column) = max.iter().position(|&m| m <= 0.0) {
        return Err(Error::Normalization {
            column: DISTANCE_NAMES[column].into(),
            max: max[column],
        });
    }
    Ok(max)
}

pub fn scale_distances(d: [f64; DISTANCE_COUNT], maxima: [f64; DISTANCE_COUNT]) -> [f64; DISTANCE_COUNT] {
    [d[0] / maxima[0], d[1] / maxima[1], d[2] / maxima[2]]
}

/// Divide every column by its cohort maximum.
pub fn normalize_distances(cohort: &[[f64; DISTANCE_COUNT]]) -> Result<Vec<[f64; DISTANCE_COUNT]>> {
    let max = distance_maxima(cohort)?;
    Ok(cohort.iter().map(|&d| scale_distances(d, max)).collect())
}

/// Deformation indices of the window values followed by the normalized distances.
pub fn assemble_feature_vector(
    windows: &[Complex64],
    weights: MixWeights,
    norm_dists: &[f64],
) -> Result<Vec<f64>> {
    if norm_dists.len() != DISTANCE_COUNT {
        return Err(Error::InvalidInput(format!(
            "expected {DISTANCE_COUNT} distances, got {}",
            norm_dists.len()
        )));
    }
    let mut v: Vec<f64> = windows.iter().map(|&m| deformation_index(m, weights)).collect();
    v.extend_from_slice(norm_dists);
    Ok(v)
}

/// Pointwise complex mean of control fields.
pub fn template_mu(fields: &[VertexField]) -> Result<VertexField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidInput("template needs at least one field".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut acc = vec![Complex64::new(0.0, 0.0); w * h];
    for f in fields {
        if (f.width(), f.height()) != (w, h) {
            return Err(Error::InvalidInput(format!(
                "field is {}x{}, expected {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        for (a, v) in acc.iter_mut().zip(f.values()) {
            *a += v;
        }
    }
    let n = fields.len() as f64;
    VertexField::new(w, h, acc.into_iter().map(|a| a / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn folding() {
        assert_eq!(fold_argument(c(0.3, 0.0)), 0.0);
        assert_abs_diff_eq!(fold_argument(c(0.0, 0.5)), PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fold_argument(c(0.0, -0.5)), PI / 2.0, epsilon = 1e-15);
        assert_eq!(fold_argument(c(0.0, 0.0)), 0.0);
        assert_abs_diff_eq!(fold_argument(c(-0.2, 0.0)), PI, epsilon = 1e-15);
    }

    #[test]
    fn index_examples() {
        let w = MixWeights::normalized(0.985, 0.173).unwrap();
        // the listed weights sit on the unit circle only to three decimals
        let raw = 0.985 * 0.5 + 0.173 * 0.5;
        assert_abs_diff_eq!(raw, 0.579, epsilon = 1e-12);
        assert_abs_diff_eq!(deformation_index(c(0.0, 0.5), w), raw / 0.985f64.hypot(0.173), epsilon = 1e-12);
        assert_eq!(deformation_index(c(0.0, 0.0), w), 0.0);
        assert_eq!(deformation_index(c(0.5, 0.0), MixWeights::new(1.0, 0.0).unwrap()), 0.5);
    }

    #[test]
    fn weights_validation() {
        assert!(MixWeights::new(0.6, 0.8).is_ok());
        assert!(MixWeights::new(0.6, 0.6).is_err());
        assert!(MixWeights::new(-0.6, 0.8).is_err());
        let w = MixWeights::from_angle(PI / 2.0).unwrap();
        assert_abs_diff_eq!(w.alpha(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn windows_and_names() {
        let field = VertexField::new(
            5,
            4,
            (0..20).map(|k| c(k as f64, 0.0)).collect(),
        )
        .unwrap();
        assert!(matches!(extract_windows(&field, &[c(1.0, 1.0)], 2), Err(Error::InvalidWindow(2))));
        assert_eq!(extract_windows(&field, &[c(2.0, 1.0)], 1).unwrap(), vec![c(7.0, 0.0)]);
        // corner, clamped
        let v = extract_windows(&field, &[c(0.0, 0.0)], 3).unwrap();
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0, 6.0]);
        let names = window_feature_names(&[Landmark::N, Landmark::S], 3).unwrap();
        assert_eq!(names.len(), 18);
        assert_eq!(names[0], "N[-1,-1]");
        assert_eq!(names[17], "S[1,1]");
    }

    #[test]
    fn distances() {
        let mut pos = [c(1.0, 1.0); 18];
        pos[Landmark::Go.index()] = c(0.0, 0.0);
        pos[Landmark::Me.index()] = c(10.0, 0.0);
        pos[Landmark::H.index()] = c(5.0, 4.0);
        pos[Landmark::Phw.index()] = c(5.0, 7.0);
        pos[Landmark::Ph1.index()] = c(3.0, 4.0);
        pos[Landmark::Ph2.index()] = c(0.0, 0.0);
        let d = distance_features(&LandmarkSet::new(pos).unwrap()).unwrap();
        assert_abs_diff_eq!(d[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], 5.0, epsilon = 1e-12);
        pos[Landmark::Me.index()] = c(0.0, 0.0);
        assert!(matches!(
            distance_features(&LandmarkSet::new(pos).unwrap()),
            Err(Error::DegenerateLandmark(_))
        ));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_distances(&[[2.0, 4.0, 8.0]]).unwrap(), vec![[1.0; 3]]);
        let n = normalize_distances(&[[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [4.0, 1.0, 1.0]]).unwrap();
        let col: Vec<f64> = n.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.25, 0.5, 1.0]);
        assert!(matches!(
            normalize_distances(&[[1.0, 0.0, 1.0]]),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn assembly() {
        let v = assemble_feature_vector(&vec![c(0.0, 0.0); 1215], MixWeights::default(), &[1.0; 3]).unwrap();
        assert_eq!(v.len(), 1218);
        assert!(v[..1215].iter().all(|&x| x == 0.0));
        assert_eq!(&v[1215..], &[1.0; 3]);
        assert!(assemble_feature_vector(&[], MixWeights::default(), &[1.0; 2]).is_err());
    }

    #[test]
    fn template() {
        let a = VertexField::new(2, 2, vec![c(0.2, 0.1); 4]).unwrap();
        let b = VertexField::new(2, 2, vec![c(0.4, -0.1); 4]).unwrap();
        let t = template_mu(&[a.clone(), b]).unwrap();
        for v in t.values() {
            assert_abs_diff_eq!(v.re, 0.3, epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        }
        assert_eq!(template_mu(&[a.clone()]).unwrap(), a);
        assert!(template_mu(&[a, VertexField::zeros(3, 2)]).is_err());
    }
}
