//! Landmark-constrained intensity registration by alternating minimization of
//!
//! ```text
//! E(mu, nu, f) = ∫|∇nu|² + alpha ∫|nu|² + sigma ∫|nu - mu|² + beta ∫(I_ref - I_subj∘f)²
//! ```
//!
//! where `mu` is the Beltrami coefficient of `f` and `nu` is the splitting
//! variable. One outer iteration runs an intensity descent step on `f`,
//! solves the Euler-Lagrange equation of `nu` given the coefficient of the
//! descended map, and projects back onto maps that hit every landmark with the
//! Linear Beltrami Solver using `nu` as the prescribed coefficient. Iterations
//! that would increase the energy are rejected and the descent step halved;
//! accepted ones double it, starting from `intensity_step`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::{beltrami_of_map, clamped_beltrami, BeltramiField, VertexField};
use crate::error::{Error, Result};
use crate::grid::{QCMap, TriGrid};
use crate::image::ImageGray;
use crate::lbs::{LbsOptions, LbsSystem, Pins};
use crate::sparse::{conjugate_gradient, CgOptions, CsrMatrix};

/// How boundary vertices are constrained during the landmark projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Pinned to their own position.
    Identity,
    /// Pinned to the least-squares affine map carrying the reference
    /// landmarks onto the subject landmarks.
    #[default]
    LandmarkAffine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegParams {
    pub reg_alpha: f64,
    pub reg_beta: f64,
    pub reg_sigma: f64,
    pub outer_iters: usize,
    pub intensity_step: f64,
    pub mu_cap: f64,
    pub tol: f64,
    pub boundary: BoundaryMode,
}

impl Default for RegParams {
    fn default() -> Self {
        RegParams {
            reg_alpha: 1.0,
            reg_beta: 100.0,
            reg_sigma: 10.0,
            outer_iters: 30,
            intensity_step: 1e-2,
            mu_cap: 0.99,
            tol: 1e-6,
            boundary: BoundaryMode::LandmarkAffine,
        }
    }
}

impl RegParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.reg_alpha, self.reg_beta, self.reg_sigma];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "registration weights must be finite and nonnegative, got {weights:?}"
            )));
        }
        if !(self.mu_cap > 0.0 && self.mu_cap < 1.0) {
            return Err(Error::InvalidInput(format!(
                "mu_cap must lie in (0, 1), got {}",
                self.mu_cap
            )));
        }
        if !(self.intensity_step > 0.0 && self.tol > 0.0) {
            return Err(Error::InvalidInput(
                "intensity_step and tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Individual terms of the registration energy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub smoothness: f64,
    pub magnitude: f64,
    pub coupling: f64,
    pub intensity: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.smoothness + self.magnitude + self.coupling + self.intensity
    }
}

#[derive(Debug, Clone)]
pub struct RegResult {
    pub map: QCMap,
    pub mu: BeltramiField,
    pub nu: VertexField,
    pub energy_trace: Vec<f64>,
    pub final_terms: EnergyTerms,
    /// Largest distance between a mapped reference landmark and its target, in pixels.
    pub landmark_residual: f64,
    pub accepted_steps: usize,
}

/// Discrete energy: gradients face-wise, all other integrals with lumped
/// vertex areas, `I_subj ∘ f` by bilinear interpolation.
pub fn registration_energy_terms(
    map: &QCMap,
    nu: &VertexField,
    reference: &ImageGray,
    subject: &ImageGray,
    params: &RegParams,
) -> Result<EnergyTerms> {
    let grid = map.grid();
    check_shapes(grid, nu, reference, subject)?;
    let mu_v = clamped_beltrami(map, params.mu_cap).to_vertices();
    let nuv = nu.values();

    let mut smoothness = 0.0;
    for ((tri, g), &area) in grid
        .faces()
        .iter()
        .zip(grid.basis_gradients())
        .zip(grid.face_areas())
    {
        let mut grad = [Complex64::new(0.0, 0.0); 2];
        for k in 0..3 {
            grad[0] += nuv[tri[k]] * g[k][0];
            grad[1] += nuv[tri[k]] * g[k][1];
        }
        smoothness += area * (grad[0].norm_sqr() + grad[1].norm_sqr());
    }

    let (mut magnitude, mut coupling, mut intensity) = (0.0, 0.0, 0.0);
    for (v, &a) in grid.vertex_areas().iter().enumerate() {
        magnitude += a * nuv[v].norm_sqr();
        coupling += a * (nuv[v] - mu_v.values()[v]).norm_sqr();
        let diff = reference.data()[v] - subject.sample(map.targets()[v]);
        intensity += a * diff * diff;
    }
    Ok(EnergyTerms {
        smoothness,
        magnitude: params.reg_alpha * magnitude,
        coupling: params.reg_sigma * coupling,
        intensity: params.reg_beta * intensity,
    })
}

pub fn registration_energy(
    map: &QCMap,
    nu: &VertexField,
    reference: &ImageGray,
    subject: &ImageGray,
    params: &RegParams,
) -> Result<f64> {
    registration_energy_terms(map, nu, reference, subject, params).map(|t| t.total())
}

fn check_shapes(
    grid: &TriGrid,
    nu: &VertexField,
    reference: &ImageGray,
    subject: &ImageGray,
) -> Result<()> {
    let dims = (grid.width(), grid.height());
    for (what, d) in [
        ("splitting field", (nu.width(), nu.height())),
        ("reference image", (reference.width(), reference.height())),
        ("subject image", (subject.width(), subject.height())),
    ] {
        if d != dims {
            return Err(Error::InvalidInput(format!(
                "{what} is {}x{}, grid is {}x{}",
                d.0, d.1, dims.0, dims.1
            )));
        }
    }
    Ok(())
}

/// Least-squares affine map `z -> a z + b zbar + c` taking `from` onto `to`.
/// Returns the identity when fewer than three correspondences are given.
pub fn fit_affine(from: &[Complex64], to: &[Complex64]) -> Result<[Complex64; 3]> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    if from.len() < 3 {
        return Ok([one, zero, zero]);
    }
    // Normal equations for rows [x, y, 1] -> target x and target y.
    let mut ata = [[0.0; 3]; 3];
    let mut atx = [0.0; 3];
    let mut aty = [0.0; 3];
    for (p, q) in from.iter().zip(to) {
        let row = [p.re, p.im, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atx[i] += row[i] * q.re;
            aty[i] += row[i] * q.im;
        }
    }
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&ata);
    let scale = ata[0][0].max(ata[1][1]).max(1.0);
    if det.abs() <= 1e-12 * scale * scale * ata[2][2] {
        return Err(Error::DegenerateLandmark(
            "landmarks are collinear; cannot fit a global affine map".into(),
        ));
    }
    let solve = |rhs: &[f64; 3]| {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut m = ata;
            for i in 0..3 {
                m[i][k] = rhs[i];
            }
            *o = det3(&m) / det;
        }
        out
    };
    let [ux, uy, u0] = solve(&atx);
    let [vx, vy, v0] = solve(&aty);
    if ux * vy - uy * vx <= 0.0 {
        return Err(Error::DegenerateLandmark(
            "landmark correspondence reverses orientation".into(),
        ));
    }
    Ok([
        Complex64::new(0.5 * (ux + vy), 0.5 * (vx - uy)),
        Complex64::new(0.5 * (ux - vy), 0.5 * (vx + uy)),
        Complex64::new(u0, v0),
    ])
}

/// Landmark and boundary constraints used by every projection step.
fn build_pins(
    grid: &TriGrid,
    ref_landmarks: &[Complex64],
    subj_landmarks: &[Complex64],
    boundary: BoundaryMode,
) -> Result<(Pins, Vec<bool>)> {
    let [a, b, c] = match boundary {
        BoundaryMode::Identity => [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ],
        BoundaryMode::LandmarkAffine => fit_affine(ref_landmarks, subj_landmarks)?,
    };
    // A landmark is carried to its nearest vertex through the linear part of
    // the boundary map, so off-grid landmarks do not bias the projection.
    let mut landmark_targets = std::collections::BTreeMap::new();
    for (k, (&p, &q)) in ref_landmarks.iter().zip(subj_landmarks).enumerate() {
        let v = grid.nearest_vertex(p);
        let offset = grid.vertices()[v] - p;
        let target = q + a * offset + b * offset.conj();
        if let Some(prev) = landmark_targets.insert(v, target) {
            if (prev - target).norm() > 1e-9 {
                return Err(Error::InvalidLandmark {
                    name: format!("#{k}"),
                    reason: format!("snaps to vertex {v} already pinned to a different target"),
                });
            }
        }
    }
    let mut pins = Pins::new();
    let mut pinned = vec![false; grid.vertex_count()];
    for v in grid.boundary_vertices() {
        if !landmark_targets.contains_key(&v) {
            let z = grid.vertices()[v];
            pins.pin(v, a * z + b * z.conj() + c)?;
            pinned[v] = true;
        }
    }
    for (&v, &q) in &landmark_targets {
        pins.pin(v, q)?;
        pinned[v] = true;
    }
    Ok((pins, pinned))
}

/// Solver for the splitting variable: `(K + (alpha + sigma) M) nu = sigma M mu`
/// with the P1 stiffness `K` (the five-point Laplacian on this mesh, natural
/// boundary conditions) and lumped mass `M`.
struct NuSolver {
    matrix: CsrMatrix,
    lumped: Vec<f64>,
    sigma: f64,
}

impl NuSolver {
    fn new(grid: &TriGrid, alpha: f64, sigma: f64) -> Self {
        let mut triplets = Vec::with_capacity(9 * grid.face_count() + grid.vertex_count());
        for ((tri, g), &area) in grid
            .faces()
            .iter()
            .zip(grid.basis_gradients())
            .zip(grid.face_areas())
        {
            for i in 0..3 {
                for j in 0..3 {
                    let k = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    triplets.push((tri[i], tri[j], k));
                }
            }
        }
        for (v, &a) in grid.vertex_areas().iter().enumerate() {
            triplets.push((v, v, (alpha + sigma) * a));
        }
        NuSolver {
            matrix: CsrMatrix::from_triplets(grid.vertex_count(), triplets),
            lumped: grid.vertex_areas().to_vec(),
            sigma,
        }
    }

    fn solve(&self, mu: &VertexField, warm: &VertexField) -> Result<VertexField> {
        let solve_part = |part: fn(&Complex64) -> f64| -> Result<Vec<f64>> {
            if self.sigma == 0.0 {
                return Ok(vec![0.0; self.lumped.len()]);
            }
            let rhs: Vec<f64> = mu
                .values()
                .iter()
                .zip(&self.lumped)
                .map(|(m, &a)| self.sigma * a * part(m))
                .collect();
            let mut x: Vec<f64> = warm.values().iter().map(part).collect();
            conjugate_gradient(
                &self.matrix,
                &rhs,
                &mut x,
                CgOptions {
                    rel_tol: INNER_CG_TOL,
                    ..CgOptions::default()
                },
            )?;
            Ok(x)
        };
        let re = solve_part(|z| z.re)?;
        let im = solve_part(|z| z.im)?;
        let values = re
            .into_iter()
            .zip(im)
            .map(|(re, im)| Complex64::new(re, im))
            .collect();
        VertexField::new(mu.width(), mu.height(), values)
    }
}

/// Accepted iterations enlarge the descent step, rejected ones halve it.
const STEP_GROWTH: f64 = 2.0;
const MAX_STEP_RATIO: f64 = 1e4;
const INNER_STEPS: usize = 4;
const MAX_BACKTRACKS: usize = 6;
/// Gaussian width (pixels) applied to the intensity force before each step.
const FORCE_SMOOTHING: f64 = 2.5;
const INNER_CG_TOL: f64 = 1e-5;

struct State {
    map: QCMap,
    nu: VertexField,
    terms: EnergyTerms,
}

/// Register `reference` onto `subject`: the returned map sends reference grid
/// vertices to subject image coordinates, with every reference landmark
/// (snapped to its nearest vertex) sent exactly to the matching subject
/// landmark.
pub fn register(
    reference: &ImageGray,
    subject: &ImageGray,
    ref_landmarks: &[Complex64],
    subj_landmarks: &[Complex64],
    params: &RegParams,
) -> Result<RegResult> {
    params.validate()?;
    if (reference.width(), reference.height()) != (subject.width(), subject.height()) {
        return Err(Error::InvalidInput(format!(
            "image sizes differ: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            subject.width(),
            subject.height()
        )));
    }
    if ref_landmarks.len() != subj_landmarks.len() {
        return Err(Error::InvalidInput(format!(
            "{} reference landmarks but {} subject landmarks",
            ref_landmarks.len(),
            subj_landmarks.len()
        )));
    }
    for (which, img, set) in [
        ("reference", reference, ref_landmarks),
        ("subject", subject, subj_landmarks),
    ] {
        if let Some(k) = set.iter().position(|&p| !img.contains(p)) {
            return Err(Error::InvalidLandmark {
                name: format!("#{k}"),
                reason: format!("{which} landmark {} lies outside the image", set[k]),
            });
        }
    }

    let reference = reference.normalized();
    let subject = subject.normalized();
    let grid = Arc::new(TriGrid::new(reference.width(), reference.height())?);
    let (pins, pinned) = build_pins(&grid, ref_landmarks, subj_landmarks, params.boundary)?;
    let lbs_opts = LbsOptions {
        epsilon: 1.0 - params.mu_cap,
        cg: CgOptions {
            rel_tol: INNER_CG_TOL,
            ..CgOptions::default()
        },
    };
    let nu_solver = NuSolver::new(&grid, params.reg_alpha, params.reg_sigma);
    let subject_grad = subject.gradient();

    // Start from the harmonic interpolation of the constraints.
    let zero = BeltramiField::constant(grid.clone(), Complex64::new(0.0, 0.0));
    let system = LbsSystem::new(grid.clone(), &pins)?;
    let map = system.solve(&zero, None, lbs_opts)?;
    let nu0 = VertexField::zeros(grid.width(), grid.height());
    let nu = nu_solver.solve(&clamped_beltrami(&map, params.mu_cap).to_vertices(), &nu0)?;
    let terms = registration_energy_terms(&map, &nu, &reference, &subject, params)?;
    let mut state = State { map, nu, terms };
    let mut trace = vec![state.terms.total()];
    let mut step = params.intensity_step;
    let mut accepted = 0;

    'outer: for _ in 0..params.outer_iters {
        let prev = state.terms.total();
        let mut backtracks = 0;
        // Backtrack until the energy does not increase; a failed step keeps the iterate.
        loop {
            let candidate = outer_step(
                &state,
                &reference,
                &subject,
                &subject_grad,
                &system,
                &pinned,
                &nu_solver,
                step,
                params,
                lbs_opts,
            );
            match candidate {
                Ok(next) if next.terms.total() <= prev => {
                    let decrease = (prev - next.terms.total()) / prev.max(f64::MIN_POSITIVE);
                    state = next;
                    accepted += 1;
                    step = (step * STEP_GROWTH).min(params.intensity_step * MAX_STEP_RATIO);
                    trace.push(state.terms.total());
                    if decrease < params.tol {
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    step *= 0.5;
                    backtracks += 1;
                    if backtracks > MAX_BACKTRACKS {
                        trace.push(prev);
                        break 'outer;
                    }
                }
            }
        }
    }

    let mu = beltrami_of_map(&state.map).map_err(|e| {
        Error::RegistrationFailure(format!("final map is not a homeomorphism: {e}"))
    })?;
    let landmark_residual = ref_landmarks
        .iter()
        .zip(subj_landmarks)
        .map(|(&p, &q)| state.map.eval(p).map_or(f64::INFINITY, |fp| (fp - q).norm()))
        .fold(0.0, f64::max);
    Ok(RegResult {
        map: state.map,
        mu,
        nu: state.nu,
        energy_trace: trace,
        final_terms: state.terms,
        landmark_residual,
        accepted_steps: accepted,
    })
}

#[allow(clippy::too_many_arguments)]
fn outer_step(
    state: &State,
    reference: &ImageGray,
    subject: &ImageGray,
    subject_grad: &crate::image::ImageGradient,
    system: &LbsSystem,
    pinned: &[bool],
    nu_solver: &NuSolver,
    step: f64,
    params: &RegParams,
    lbs_opts: LbsOptions,
) -> Result<State> {
    let grid = state.map.grid();
    let areas = grid.vertex_areas();
    let mut targets = state.map.targets().to_vec();
    for _ in 0..INNER_STEPS {
        let force: Vec<Complex64> = targets
            .iter()
            .enumerate()
            .map(|(v, &t)| {
                let diff = reference.data()[v] - subject.sample(t);
                subject_grad.sample(t) * (2.0 * params.reg_beta * areas[v] * diff)
            })
            .collect();
        let force = smooth_field(&force, grid.width(), grid.height(), FORCE_SMOOTHING);
        let next: Vec<Complex64> = targets
            .iter()
            .zip(&force)
            .enumerate()
            .map(|(v, (&t, &g))| if pinned[v] { t } else { t + g * step })
            .collect();
        let trial = QCMap::new(grid.clone(), next)?;
        if !trial.is_orientation_preserving() {
            break;
        }
        targets = trial.into_targets();
    }
    let descended = QCMap::new(grid.clone(), targets)?;
    let mu = clamped_beltrami(&descended, params.mu_cap).to_vertices();
    let nu = nu_solver.solve(&mu, &state.nu)?;
    let prescribed = nu.to_faces(grid)?.clamped(params.mu_cap);
    let map = system.solve(&prescribed, Some(&descended), lbs_opts)?;
    if !map.is_orientation_preserving() {
        return Err(Error::RegistrationFailure(format!(
            "projection produced {} folded faces",
            map.folded_faces().len()
        )));
    }
    let terms = registration_energy_terms(&map, &nu, reference, subject, params)?;
    Ok(State { map, nu, terms })
}

/// Separable Gaussian blur of a vertex field, truncated at three widths and
/// renormalized at the border.
fn smooth_field(values: &[Complex64], width: usize, height: usize, sigma: f64) -> Vec<Complex64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |src: &[Complex64], along_x: bool| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
        for y in 0..height {
            for x in 0..width {
                let (mut acc, mut wsum) = (Complex64::new(0.0, 0.0), 0.0);
                for (k, &wk) in (-radius..=radius).zip(&kernel) {
                    let (xx, yy) = if along_x {
                        (x as isize + k, y as isize)
                    } else {
                        (x as isize, y as isize + k)
                    };
                    if xx < 0 || yy < 0 || xx >= width as isize || yy >= height as isize {
                        continue;
                    }
                    acc += src[yy as usize * width + xx as usize] * wk;
                    wsum += wk;
                }
                out[y * width + x] = acc / wsum;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn affine_fit_recovers_exact_affine() {
        let (a, b, t) = (c(1.1, 0.1), c(0.2, -0.05), c(3.0, -2.0));
        let from = [c(0.0, 0.0), c(10.0, 1.0), c(3.0, 8.0), c(7.0, 7.0)];
        let to: Vec<_> = from.iter().map(|&z| a * z + b * z.conj() + t).collect();
        let [fa, fb, ft] = fit_affine(&from, &to).unwrap();
        assert!((fa - a).norm() < 1e-10 && (fb - b).norm() < 1e-10 && (ft - t).norm() < 1e-9);
    }

    #[test]
    fn affine_fit_rejects_collinear() {
        let from = [c(0.0, 0.0), c(1.0, 1.0), c(2.0, 2.0)];
        assert!(matches!(
            fit_affine(&from, &from),
            Err(Error::DegenerateLandmark(_))
        ));
    }

    #[test]
    fn energy_vanishes_for_identity() {
        let img = ImageGray::from_fn(8, 6, |x, y| (x * 0.4).sin() + y * 0.1).unwrap();
        let g = Arc::new(TriGrid::new(8, 6).unwrap());
        let e = registration_energy(
            &QCMap::identity(g),
            &VertexField::zeros(8, 6),
            &img,
            &img,
            &RegParams::default(),
        )
        .unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn energy_shape_mismatch() {
        let img = ImageGray::from_fn(8, 6, |x, _| x).unwrap();
        let g = Arc::new(TriGrid::new(8, 6).unwrap());
        assert!(matches!(
            registration_energy(
                &QCMap::identity(g),
                &VertexField::zeros(8, 5),
                &img,
                &img,
                &RegParams::default()
            ),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn landmark_outside_is_rejected() {
        let img = ImageGray::from_fn(10, 10, |x, y| x + y).unwrap();
        let lm = [c(2.0, 2.0), c(12.0, 5.0)];
        assert!(matches!(
            register(&img, &img, &lm, &lm, &RegParams::default()),
            Err(Error::InvalidLandmark { .. })
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = RegParams {
            mu_cap: 1.0,
            ..RegParams::default()
        };
        assert!(p.validate().is_err());
        let p = RegParams {
            reg_alpha: -1.0,
            ..RegParams::default()
        };
        assert!(p.validate().is_err());
    }
}
