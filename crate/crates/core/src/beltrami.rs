//! Wirtinger derivatives and Beltrami coefficients of piecewise-linear maps.
//!
//! Derivatives use the conventional half factors,
//! `f_z = (f_x - i f_y) / 2` and `f_zbar = (f_x + i f_y) / 2`. The Beltrami
//! coefficient is a ratio of the two and does not depend on that choice.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{QCMap, TriGrid};

/// Per-face Wirtinger derivatives of a piecewise-linear map.
#[derive(Debug, Clone)]
pub struct ComplexDeriv {
    pub fz: Vec<Complex64>,
    pub fzbar: Vec<Complex64>,
}

/// One complex coefficient per face.
#[derive(Debug, Clone)]
pub struct BeltramiField {
    grid: Arc<TriGrid>,
    values: Vec<Complex64>,
}

/// One complex value per vertex (vertex-averaged coefficients, splitting variable).
#[derive(Debug, Clone, PartialEq)]
pub struct VertexField {
    width: usize,
    height: usize,
    values: Vec<Complex64>,
}

/// Principal directions and stretch factors of the infinitesimal ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionAxes {
    pub magnify_angle: f64,
    pub magnify_factor: f64,
    pub contract_angle: f64,
    pub contract_factor: f64,
}

/// Jacobian `(u_x, u_y, v_x, v_y)` of every face of `map`.
fn face_jacobians(map: &QCMap) -> impl Iterator<Item = [f64; 4]> + '_ {
    let grid = map.grid();
    let t = map.targets();
    grid.faces()
        .iter()
        .zip(grid.basis_gradients())
        .map(move |(tri, g)| {
            let mut jac = [0.0; 4];
            for (k, &v) in tri.iter().enumerate() {
                jac[0] += t[v].re * g[k][0];
                jac[1] += t[v].re * g[k][1];
                jac[2] += t[v].im * g[k][0];
                jac[3] += t[v].im * g[k][1];
            }
            jac
        })
}

#[inline]
fn wirtinger_from_jacobian([ux, uy, vx, vy]: [f64; 4]) -> (Complex64, Complex64) {
    (
        Complex64::new(0.5 * (ux + vy), 0.5 * (vx - uy)),
        Complex64::new(0.5 * (ux - vy), 0.5 * (vx + uy)),
    )
}

pub fn wirtinger_derivatives(map: &QCMap) -> ComplexDeriv {
    let (fz, fzbar) = face_jacobians(map).map(wirtinger_from_jacobian).unzip();
    ComplexDeriv { fz, fzbar }
}

/// Beltrami coefficient of an orientation-preserving map.
///
/// Fails with the list of offending faces when some face has a non-positive
/// Jacobian, i.e. `|f_z| <= |f_zbar|`.
pub fn beltrami_of_map(map: &QCMap) -> Result<BeltramiField> {
    let d = wirtinger_derivatives(map);
    let bad: Vec<usize> = d
        .fz
        .iter()
        .zip(&d.fzbar)
        .enumerate()
        .filter(|(_, (fz, fzb))| !(fz.norm_sqr() - fzb.norm_sqr() > 0.0))
        .map(|(f, _)| f)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonHomeomorphism { faces: bad });
    }
    let values = d.fz.iter().zip(&d.fzbar).map(|(fz, fzb)| fzb / fz).collect();
    Ok(BeltramiField {
        grid: map.grid().clone(),
        values,
    })
}

/// `f_zbar / f_z` on every face, with `|mu|` clamped to `cap`.
///
/// Folded faces produce coefficients with modulus above one, which the clamp
/// pulls back inside the unit disk. A face with `f_z = 0` gets `cap` along
/// the direction of `f_zbar`.
pub fn clamped_beltrami(map: &QCMap, cap: f64) -> BeltramiField {
    let d = wirtinger_derivatives(map);
    let values = d
        .fz
        .iter()
        .zip(&d.fzbar)
        .map(|(fz, fzb)| {
            let mu = if fz.norm_sqr() > 0.0 {
                fzb / fz
            } else if fzb.norm_sqr() > 0.0 {
                fzb / fzb.norm() * cap
            } else {
                Complex64::new(0.0, 0.0)
            };
            clamp_modulus(mu, cap)
        })
        .collect();
    BeltramiField {
        grid: map.grid().clone(),
        values,
    }
}

#[inline]
pub fn clamp_modulus(mu: Complex64, cap: f64) -> Complex64 {
    let r = mu.norm();
    if r > cap {
        mu * (cap / r)
    } else {
        mu
    }
}

pub fn distortion_axes(mu: Complex64) -> Result<DistortionAxes> {
    let r = mu.norm();
    if !(r < 1.0) {
        return Err(Error::NotQuasiConformal { modulus: r });
    }
    let theta = mu.arg();
    Ok(DistortionAxes {
        magnify_angle: theta / 2.0,
        magnify_factor: 1.0 + r,
        contract_angle: (theta - PI) / 2.0,
        contract_factor: 1.0 - r,
    })
}

impl BeltramiField {
    pub fn new(grid: Arc<TriGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.face_count() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {} faces",
                values.len(),
                grid.face_count()
            )));
        }
        Ok(BeltramiField { grid, values })
    }

    pub fn from_fn(grid: Arc<TriGrid>, f: impl Fn(Complex64) -> Complex64) -> Self {
        let values = grid
            .faces()
            .iter()
            .map(|tri| {
                let c = tri.iter().map(|&v| grid.vertices()[v]).sum::<Complex64>() / 3.0;
                f(c)
            })
            .collect();
        BeltramiField { grid, values }
    }

    pub fn constant(grid: Arc<TriGrid>, mu: Complex64) -> Self {
        let values = vec![mu; grid.face_count()];
        BeltramiField { grid, values }
    }

    pub fn grid(&self) -> &Arc<TriGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    pub fn clamped(&self, cap: f64) -> BeltramiField {
        BeltramiField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&m| clamp_modulus(m, cap)).collect(),
        }
    }

    /// Area-weighted average of the incident faces at every vertex.
    pub fn to_vertices(&self) -> VertexField {
        let g = &self.grid;
        let mut acc = vec![Complex64::new(0.0, 0.0); g.vertex_count()];
        let mut weight = vec![0.0; g.vertex_count()];
        for ((tri, &area), &mu) in g.faces().iter().zip(g.face_areas()).zip(&self.values) {
            for &v in tri {
                acc[v] += mu * area;
                weight[v] += area;
            }
        }
        let values = acc.iter().zip(&weight).map(|(a, w)| a / w).collect();
        VertexField {
            width: g.width(),
            height: g.height(),
            values,
        }
    }
}

impl VertexField {
    pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "vertex field has {} values for a {width}x{height} grid",
                values.len()
            )));
        }
        Ok(VertexField {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        VertexField {
            width,
            height,
            values: vec![Complex64::new(0.0, 0.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Complex64 {
        self.values[y * self.width + x]
    }

    /// Face values obtained by averaging the three corners of every face.
    pub fn to_faces(&self, grid: &Arc<TriGrid>) -> Result<BeltramiField> {
        if grid.width() != self.width || grid.height() != self.height {
            return Err(Error::InvalidInput("vertex field does not match grid".into()));
        }
        let values = grid
            .faces()
            .iter()
            .map(|tri| tri.iter().map(|&v| self.values[v]).sum::<Complex64>() / 3.0)
            .collect();
        BeltramiField::new(grid.clone(), values)
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Arc<TriGrid> {
        Arc::new(TriGrid::new(n, n).unwrap())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_and_dilation_derivatives() {
        let g = grid(5);
        let d = wirtinger_derivatives(&QCMap::identity(g.clone()));
        assert!(d.fz.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-14));
        assert!(d.fzbar.iter().all(|z| z.norm() < 1e-14));

        let d = wirtinger_derivatives(&QCMap::from_fn(g, |z| z * 2.0).unwrap());
        assert!(d.fz.iter().all(|z| (z - c(2.0, 0.0)).norm() < 1e-14));
        assert!(d.fzbar.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn affine_derivatives() {
        let g = grid(4);
        let map = QCMap::from_fn(g, |z| z + z.conj() * 0.3).unwrap();
        let d = wirtinger_derivatives(&map);
        for (fz, fzb) in d.fz.iter().zip(&d.fzbar) {
            assert!((fz - c(1.0, 0.0)).norm() < 1e-14);
            assert!((fzb - c(0.3, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn beltrami_examples() {
        let g = grid(6);
        let mu = beltrami_of_map(&QCMap::identity(g.clone())).unwrap();
        assert_eq!(mu.max_modulus(), 0.0);

        let mu = beltrami_of_map(&QCMap::from_fn(g.clone(), |z| z + z.conj() * 0.3).unwrap())
            .unwrap();
        assert!(mu.values().iter().all(|m| (m - c(0.3, 0.0)).norm() < 1e-14));

        let mu = beltrami_of_map(&QCMap::from_fn(g, |z| z + c(0.0, 0.5) * z.conj()).unwrap())
            .unwrap();
        for m in mu.values() {
            assert_abs_diff_eq!(m.norm(), 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(m.arg(), PI / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn folded_map_reports_faces() {
        let g = grid(3);
        let mut t = g.vertices().to_vec();
        // push the centre vertex across its neighbours
        t[4] = c(3.0, 1.0);
        let map = QCMap::new(g, t).unwrap();
        match beltrami_of_map(&map) {
            Err(Error::NonHomeomorphism { faces }) => {
                assert_eq!(faces, map.folded_faces());
                assert!(!faces.is_empty());
            }
            other => panic!("expected non-homeomorphism, got {other:?}"),
        }
    }

    #[test]
    fn reflection_is_rejected() {
        let g = grid(3);
        let map = QCMap::from_fn(g, |z| z.conj()).unwrap();
        assert!(beltrami_of_map(&map).is_err());
    }

    #[test]
    fn axes_examples() {
        let a = distortion_axes(c(0.0, 0.0)).unwrap();
        assert_eq!((a.magnify_factor, a.contract_factor), (1.0, 1.0));

        let a = distortion_axes(c(0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(a.magnify_angle, 0.0);
        assert_abs_diff_eq!(a.magnify_factor, 1.5);
        assert_abs_diff_eq!(a.contract_angle, -PI / 2.0);
        assert_abs_diff_eq!(a.contract_factor, 0.5);

        let a = distortion_axes(c(0.0, 0.5)).unwrap();
        assert_abs_diff_eq!(a.magnify_angle, PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.contract_angle, -PI / 4.0, epsilon = 1e-15);

        assert!(matches!(
            distortion_axes(c(0.6, 0.8)),
            Err(Error::NotQuasiConformal { .. })
        ));
    }

    #[test]
    fn vertex_average_of_constant_is_constant() {
        let g = grid(5);
        let f = BeltramiField::constant(g.clone(), c(0.2, -0.1));
        let v = f.to_vertices();
        assert!(v.values().iter().all(|m| (m - c(0.2, -0.1)).norm() < 1e-15));
        let back = v.to_faces(&g).unwrap();
        assert!(back.values().iter().all(|m| (m - c(0.2, -0.1)).norm() < 1e-15));
    }

    #[test]
    fn clamp_pulls_inside_disk() {
        assert_abs_diff_eq!(clamp_modulus(c(3.0, 4.0), 0.99).norm(), 0.99, epsilon = 1e-15);
        assert_eq!(clamp_modulus(c(0.1, 0.0), 0.99), c(0.1, 0.0));
    }
}
