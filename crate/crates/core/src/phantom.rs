//! Synthetic cephalogram-like cohorts with known deformations.
//!
//! A fixed base image carries all eighteen landmarks. Every subject is the base
//! pushed forward by `S ∘ g`, where `S` is a small random similarity and `g`
//! is a sum of localized anisotropic bumps
//!
//! ```text
//! g(z) = z + Σ_k c_k · conj(z - p_k) · exp(-|z - p_k|² / 2r²) · Π_{j≠k} m_j(z)
//! ```
//!
//! centred on landmarks `p_k`. The factor `conj(z - p_k)` makes the bump
//! vanish at its own landmark with `∂g/∂zbar = c_k` there, and the masks
//! `m_j(z) = 1 - exp(-|z - p_j|² / 2s²)` pin every other landmark, so the
//! class signal is a local anisotropy that leaves all landmark positions
//! unchanged. OSA subjects get bumps of amplitude `warp_amplitude` around
//! the configured landmarks; every subject gets weak random bumps of
//! amplitude up to `local_jitter` at all landmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{QCMap, TriGrid};
use crate::image::ImageGray;
use crate::landmarks::{Label, Landmark, LandmarkSet, SubjectRecord, LANDMARK_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Standard deviation of additive Gaussian intensity noise, as a fraction of
    /// the calibrated intensity range.
    pub noise: f64,
    /// `|mu|` injected at each warp landmark of OSA subjects.
    pub warp_amplitude: f64,
    /// Relative spread of the per-subject warp amplitude (uniform, ±).
    pub warp_spread: f64,
    /// Gaussian radius of each bump, in pixels.
    pub warp_radius: f64,
    pub warp_landmarks: Vec<Landmark>,
    /// Direction `arg(mu)` of the OSA bumps, in radians.
    pub warp_angle: f64,
    /// Upper bound of the random `|mu|` bump placed at every landmark of every subject.
    pub local_jitter: f64,
    pub rotation_deg: f64,
    pub scale_jitter: f64,
    pub shift_px: f64,
    /// Standard deviation of landmark annotation noise, in pixels.
    pub landmark_noise: f64,
    /// Downward displacement of H in OSA subjects, in pixels (a landmark-visible signal).
    pub hyoid_drop: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            width: 65,
            height: 65,
            per_class: 30,
            seed: 7,
            noise: 0.01,
            warp_amplitude: 0.3,
            warp_spread: 0.25,
            warp_radius: 4.0,
            warp_landmarks: vec![
                Landmark::H,
                Landmark::Go,
                Landmark::Me,
                Landmark::Ph1,
                Landmark::Ph2,
            ],
            warp_angle: 0.0,
            local_jitter: 0.05,
            rotation_deg: 2.0,
            scale_jitter: 0.02,
            shift_px: 1.0,
            landmark_noise: 0.0,
            hyoid_drop: 0.0,
        }
    }
}

/// Landmark layout on the unit square (x to the right, y downwards), facing right.
const LAYOUT: [(f64, f64); LANDMARK_COUNT] = [
    (0.80, 0.14), // N
    (0.45, 0.22), // S
    (0.28, 0.44), // Ba
    (0.82, 0.40), // ANS
    (0.55, 0.42), // PNS
    (0.78, 0.48), // A
    (0.74, 0.68), // B
    (0.76, 0.81), // Gn
    (0.69, 0.87), // Me
    (0.36, 0.74), // Go
    (0.33, 0.52), // Ar
    (0.57, 0.91), // H
    (0.68, 0.58), // Tant
    (0.52, 0.54), // u1
    (0.50, 0.78), // Va
    (0.40, 0.90), // Phw
    (0.50, 0.66), // ph1
    (0.41, 0.65), // ph2
];

/// One bump `c · conj(z - p) · exp(-|z-p|²/2r²)`, masked at the other landmarks.
#[derive(Debug, Clone, Copy)]
struct Bump {
    center: Complex64,
    coeff: Complex64,
    radius: f64,
}

const MASK_RADIUS: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct Warp {
    bumps: Vec<Bump>,
    anchors: Vec<Complex64>,
}

impl Warp {
    fn displacement(&self, z: Complex64) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for b in &self.bumps {
            let w = z - b.center;
            let r2 = w.norm_sqr();
            let envelope = (-r2 / (2.0 * b.radius * b.radius)).exp();
            if envelope < 1e-12 {
                continue;
            }
            let mut mask = 1.0;
            for &a in &self.anchors {
                if (a - b.center).norm_sqr() < 1e-18 {
                    continue;
                }
                mask *= 1.0 - (-(z - a).norm_sqr() / (2.0 * MASK_RADIUS * MASK_RADIUS)).exp();
            }
            total += b.coeff * w.conj() * envelope * mask;
        }
        total
    }

    pub fn forward(&self, z: Complex64) -> Complex64 {
        z + self.displacement(z)
    }

    /// Fixed-point inverse `z = p - d(z)`.
    pub fn inverse(&self, p: Complex64) -> Complex64 {
        let mut z = p;
        for _ in 0..60 {
            let next = p - self.displacement(z);
            if (next - z).norm() < 1e-12 {
                return next;
            }
            z = next;
        }
        z
    }
}

/// Similarity `z -> center + s e^{i theta} (z - center) + t`.
#[derive(Debug, Clone, Copy)]
struct Similarity {
    center: Complex64,
    factor: Complex64,
    shift: Complex64,
}

impl Similarity {
    fn apply(&self, z: Complex64) -> Complex64 {
        self.center + self.factor * (z - self.center) + self.shift
    }

    fn invert(&self, p: Complex64) -> Complex64 {
        self.center + (p - self.shift - self.center) / self.factor
    }
}

/// Ground-truth deformation of one subject: base coordinates to subject coordinates.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub id: String,
    pub map: QCMap,
}

#[derive(Debug, Clone)]
pub struct PhantomCohort {
    pub base: SubjectRecord,
    pub subjects: Vec<SubjectRecord>,
    pub truths: Vec<GroundTruth>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Generation(format!(
                "phantom grid {}x{} is too small (minimum 16x16)",
                self.width, self.height
            )));
        }
        let nonneg = [
            ("noise", self.noise),
            ("warp_amplitude", self.warp_amplitude),
            ("warp_spread", self.warp_spread),
            ("local_jitter", self.local_jitter),
            ("rotation_deg", self.rotation_deg),
            ("scale_jitter", self.scale_jitter),
            ("shift_px", self.shift_px),
            ("landmark_noise", self.landmark_noise),
            ("hyoid_drop", self.hyoid_drop),
        ];
        if let Some((name, v)) = nonneg.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Generation(format!("{name} must be >= 0, got {v}")));
        }
        if !(self.warp_radius > 0.0) {
            return Err(Error::Generation("warp_radius must be positive".into()));
        }
        if self.warp_spread >= 1.0 || self.scale_jitter >= 0.5 {
            return Err(Error::Generation(
                "warp_spread must be < 1 and scale_jitter < 0.5".into(),
            ));
        }
        Ok(())
    }

    pub fn base_landmarks(&self) -> LandmarkSet {
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        let mut positions = [Complex64::new(0.0, 0.0); LANDMARK_COUNT];
        for (p, &(x, y)) in positions.iter_mut().zip(&LAYOUT) {
            *p = Complex64::new((x * w).round(), (y * h).round());
        }
        LandmarkSet::new(positions).expect("layout is finite")
    }

    /// Skull-like base image: bone strokes between landmarks, a dark airway,
    /// a soft-tissue tongue, distinct blobs around each landmark and a weak
    /// background texture so every region carries intensity gradients.
    pub fn base_image(&self) -> ImageGray {
        let field = self.intensity_field();
        ImageGray::from_fn(self.width, self.height, |x, y| {
            calibrated(field(Complex64::new(x, y)))
        })
        .expect("phantom dimensions validated")
    }

    /// Raw base intensity at any point of the plane. Two calibration objects
    /// (a bright rod and a dark air pocket) saturate in every subject, which
    /// keeps per-image min-max normalization consistent across the cohort.
    fn intensity_field(&self) -> impl Fn(Complex64) -> f64 {
        let lm = self.base_landmarks();
        let scale = (self.width.min(self.height) - 1) as f64 / 64.0;
        let strokes: [(Landmark, Landmark, f64); 9] = [
            (Landmark::Ba, Landmark::S, 0.8),
            (Landmark::S, Landmark::N, 0.8),
            (Landmark::Pns, Landmark::Ans, 0.7),
            (Landmark::Ans, Landmark::A, 0.6),
            (Landmark::Ar, Landmark::Go, 0.9),
            (Landmark::Go, Landmark::Me, 0.9),
            (Landmark::Me, Landmark::Gn, 0.9),
            (Landmark::Gn, Landmark::B, 0.8),
            (Landmark::Ba, Landmark::Ar, 0.5),
        ];
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        let centre = Complex64::new(0.5 * w, 0.45 * h);
        let radii = (0.42 * w, 0.40 * h);
        let rod = Complex64::new(0.1 * w, 0.1 * h);
        let pocket = Complex64::new(0.1 * w, 0.9 * h);
        move |z: Complex64| {
            let mut v = 0.15;
            // cranial vault outline
            let q = z - centre;
            let ell = ((q.re / radii.0).powi(2) + (q.im / radii.1).powi(2)).sqrt();
            v += 0.35 * (-((ell - 1.0) * 10.0).powi(2)).exp();
            for &(a, b, amp) in &strokes {
                let d = segment_distance(z, lm.get(a), lm.get(b)) / scale;
                v += amp * (-d * d / 6.0).exp();
            }
            // tongue
            let t = (z - 0.5 * (lm.get(Landmark::Tant) + lm.get(Landmark::Va))) / scale;
            v += 0.3 * (-(t.re * t.re / 60.0 + t.im * t.im / 30.0)).exp();
            // airway
            let d = segment_distance(z, lm.get(Landmark::U1), lm.get(Landmark::Phw)) / scale;
            v -= 0.25 * (-d * d / 8.0).exp();
            // hyoid
            let hd = (z - lm.get(Landmark::H)).norm() / scale;
            v += 0.6 * (-hd * hd / 6.0).exp();
            // landmark blobs at distinct offsets
            for (k, (_, p)) in lm.iter().enumerate() {
                let ang = 2.0 * PI * (k as f64 * 0.381_966);
                let off = Complex64::from_polar(2.5 * scale, ang);
                let d1 = (z - p - off).norm_sqr() / (scale * scale);
                let d2 = (z - p + off * Complex64::new(0.0, 1.0)).norm_sqr() / (scale * scale);
                v += 0.35 * (-d1 / 4.0).exp() - 0.2 * (-d2 / 4.0).exp();
            }
            // background texture
            let (u, w) = (z.re / scale, z.im / scale);
            v += 0.15 * (0.55 * u + 0.25 * w).sin() * (0.4 * w - 0.2 * u).cos()
                + 0.08 * (0.3 * u - 0.65 * w).sin();
            // calibration objects
            v += 6.0 * (-(z - rod).norm_sqr() / (18.0 * scale * scale)).exp();
            v -= 3.0 * (-(z - pocket).norm_sqr() / (18.0 * scale * scale)).exp();
            v
        }
    }

    fn similarity(&self, rng: &mut ChaCha8Rng) -> Similarity {
        let theta = (self.rotation_deg * PI / 180.0) * rng.gen_range(-1.0..=1.0);
        let scale = 1.0 + self.scale_jitter * rng.gen_range(-1.0..=1.0);
        let shift = Complex64::new(
            self.shift_px * rng.gen_range(-1.0..=1.0),
            self.shift_px * rng.gen_range(-1.0..=1.0),
        );
        Similarity {
            center: Complex64::new(
                0.5 * (self.width - 1) as f64,
                0.5 * (self.height - 1) as f64,
            ),
            factor: Complex64::from_polar(scale, theta),
            shift,
        }
    }

    fn warp(&self, lm: &LandmarkSet, label: Label, rng: &mut ChaCha8Rng) -> Warp {
        let mut bumps = Vec::new();
        let radius = self.warp_radius * (self.width.min(self.height) - 1) as f64 / 64.0;
        for (l, p) in lm.iter() {
            let r = self.local_jitter * rng.gen::<f64>();
            let ang = 2.0 * PI * rng.gen::<f64>();
            if r > 0.0 {
                bumps.push(Bump {
                    center: p,
                    coeff: Complex64::from_polar(r, ang),
                    radius,
                });
            }
            let spread = 1.0 + self.warp_spread * rng.gen_range(-1.0..=1.0);
            if label == Label::Osa && self.warp_amplitude > 0.0 && self.warp_landmarks.contains(&l)
            {
                bumps.push(Bump {
                    center: p,
                    coeff: Complex64::from_polar(self.warp_amplitude * spread, self.warp_angle),
                    radius,
                });
            }
        }
        Warp {
            bumps,
            anchors: lm.positions().to_vec(),
        }
    }

    /// Generate `per_class` controls followed by `per_class` OSA subjects.
    pub fn generate(&self) -> Result<PhantomCohort> {
        self.validate()?;
        let grid = Arc::new(TriGrid::new(self.width, self.height)?);
        let base_lm = self.base_landmarks();
        let base_img = self.base_image();
        let base = SubjectRecord::new("base", base_img.clone(), base_lm, Some(Label::Control))?;
        let field = self.intensity_field();
        let noise = Normal::new(0.0, 1.0)
            .map_err(|e| Error::Generation(e.to_string()))?;
        let lm_noise = Normal::new(0.0, self.landmark_noise.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Generation(e.to_string()))?;

        let mut subjects = Vec::with_capacity(2 * self.per_class);
        let mut truths = Vec::with_capacity(2 * self.per_class);
        for (class_idx, label) in [Label::Control, Label::Osa].into_iter().enumerate() {
            for i in 0..self.per_class {
                let id = format!("{}{:03}", label.as_str(), i);
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream((class_idx * 1_000_000 + i) as u64);

                let sim = self.similarity(&mut rng);
                let warp = self.warp(&base_lm, label, &mut rng);
                let truth = QCMap::from_fn(grid.clone(), |z| sim.apply(warp.forward(z)))?;
                let folded = truth.folded_faces();
                if !folded.is_empty() {
                    return Err(Error::Generation(format!(
                        "subject {id}: warp folds {} triangles; lower warp_amplitude or local_jitter",
                        folded.len()
                    )));
                }

                let (lo, hi) = CALIBRATION_RANGE;
                let sigma = self.noise * (hi - lo);
                let mut data = Vec::with_capacity(self.width * self.height);
                for y in 0..self.height {
                    for x in 0..self.width {
                        let p = Complex64::new(x as f64, y as f64);
                        let mut raw = field(warp.inverse(sim.invert(p)));
                        if self.noise > 0.0 {
                            raw += sigma * noise.sample(&mut rng);
                        }
                        data.push(calibrated(raw));
                    }
                }
                let image = ImageGray::new(self.width, self.height, data)?;

                let mut lm = base_lm.map(|p| sim.apply(warp.forward(p)));
                if label == Label::Osa && self.hyoid_drop > 0.0 {
                    let mut pos = *lm.positions();
                    pos[Landmark::H.index()] += Complex64::new(0.0, self.hyoid_drop);
                    lm = LandmarkSet::new(pos)?;
                }
                if self.landmark_noise > 0.0 {
                    lm = lm.map(|p| {
                        p + Complex64::new(lm_noise.sample(&mut rng), lm_noise.sample(&mut rng))
                    });
                }
                let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
                lm = lm.map(|p| Complex64::new(p.re.clamp(0.0, w), p.im.clamp(0.0, h)));

                subjects.push(SubjectRecord::new(id.clone(), image, lm, Some(label))?);
                truths.push(GroundTruth { id, map: truth });
            }
        }
        Ok(PhantomCohort {
            base,
            subjects,
            truths,
        })
    }
}

const CALIBRATION_RANGE: (f64, f64) = (-0.4, 2.4);

/// Clip to the calibration range and rescale to `[0, 1]`.
fn calibrated(raw: f64) -> f64 {
    let (lo, hi) = CALIBRATION_RANGE;
    (raw.clamp(lo, hi) - lo) / (hi - lo)
}

fn segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let t = ((z - a).re * ab.re + (z - a).im * ab.im) / ab.norm_sqr().max(1e-12);
    (z - (a + ab * t.clamp(0.0, 1.0))).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beltrami::beltrami_of_map;

    fn quiet() -> PhantomSpec {
        PhantomSpec {
            per_class: 2,
            noise: 0.0,
            warp_amplitude: 0.0,
            local_jitter: 0.0,
            rotation_deg: 0.0,
            scale_jitter: 0.0,
            shift_px: 0.0,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn empty_cohort() {
        let spec = PhantomSpec {
            per_class: 0,
            ..PhantomSpec::default()
        };
        let c = spec.generate().unwrap();
        assert!(c.subjects.is_empty() && c.truths.is_empty());
    }

    #[test]
    fn zero_amplitude_gives_base_copies() {
        let c = quiet().generate().unwrap();
        assert_eq!(c.subjects.len(), 4);
        for s in &c.subjects {
            assert_eq!(s.landmarks, c.base.landmarks);
            for (a, b) in s.image.data().iter().zip(c.base.image.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn warp_fixes_all_landmarks_and_injects_mu() {
        let spec = PhantomSpec {
            rotation_deg: 0.0,
            scale_jitter: 0.0,
            shift_px: 0.0,
            local_jitter: 0.0,
            warp_spread: 0.0,
            ..PhantomSpec::default()
        };
        let lm = spec.base_landmarks();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let warp = spec.warp(&lm, Label::Osa, &mut rng);
        for (_, p) in lm.iter() {
            assert!((warp.forward(p) - p).norm() < 1e-9);
        }
        let grid = Arc::new(TriGrid::new(spec.width, spec.height).unwrap());
        let map = QCMap::from_fn(grid.clone(), |z| warp.forward(z)).unwrap();
        let mu = beltrami_of_map(&map).unwrap().to_vertices();
        let h = grid.nearest_vertex(lm.get(Landmark::H));
        assert!((mu.values()[h].norm() - spec.warp_amplitude).abs() < 0.08);
        let n = grid.nearest_vertex(lm.get(Landmark::N));
        assert!(mu.values()[n].norm() < 1e-3);
    }

    #[test]
    fn inverse_undoes_forward() {
        let spec = PhantomSpec::default();
        let lm = spec.base_landmarks();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let warp = spec.warp(&lm, Label::Osa, &mut rng);
        for k in 0..50 {
            let z = Complex64::new(10.0 + k as f64, 60.0 - k as f64);
            assert!((warp.inverse(warp.forward(z)) - z).norm() < 1e-9);
        }
    }

    #[test]
    fn deterministic_generation() {
        let spec = PhantomSpec {
            per_class: 2,
            ..PhantomSpec::default()
        };
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        for (x, y) in a.subjects.iter().zip(&b.subjects) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.landmarks, y.landmarks);
        }
    }

    #[test]
    fn excessive_amplitude_is_rejected() {
        let spec = PhantomSpec {
            per_class: 1,
            warp_amplitude: 3.0,
            ..PhantomSpec::default()
        };
        assert!(matches!(spec.generate(), Err(Error::Generation(_))));
    }

    #[test]
    fn landmarks_are_distinct_vertices() {
        let spec = PhantomSpec::default();
        let grid = TriGrid::new(spec.width, spec.height).unwrap();
        let lm = spec.base_landmarks();
        let mut ids: Vec<_> = lm.iter().map(|(_, p)| grid.nearest_vertex(p)).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), LANDMARK_COUNT);
    }
}
