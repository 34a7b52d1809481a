//! Triangulated pixel grids and piecewise-linear maps defined on them.
//!
//! Vertices sit at integer pixel coordinates and are stored as complex numbers
//! `x + iy`. Every pixel cell `(x, y)-(x+1, y+1)` is split along the diagonal
//! joining `(x, y)` and `(x+1, y+1)` into the counterclockwise triangles
//! `[(x,y), (x+1,y), (x+1,y+1)]` and `[(x,y), (x+1,y+1), (x,y+1)]`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Twice the signed area of the triangle `(a, b, c)`.
#[inline]
pub fn cross(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let e1 = b - a;
    let e2 = c - a;
    e1.re * e2.im - e1.im * e2.re
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriGrid {
    width: usize,
    height: usize,
    vertices: Vec<Complex64>,
    faces: Vec<[usize; 3]>,
    areas: Vec<f64>,
    /// Gradients of the three P1 hat functions of each face, as `(d/dx, d/dy)`.
    basis: Vec<[[f64; 2]; 3]>,
    lumped: Vec<f64>,
}

impl TriGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidDimension { width, height });
        }
        let vertices = (0..height)
            .flat_map(|y| (0..width).map(move |x| Complex64::new(x as f64, y as f64)))
            .collect::<Vec<_>>();
        let mut faces = Vec::with_capacity(2 * (width - 1) * (height - 1));
        for y in 0..height - 1 {
            for x in 0..width - 1 {
                let a = y * width + x;
                let b = a + 1;
                let c = a + width + 1;
                let d = a + width;
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }

        let mut areas = Vec::with_capacity(faces.len());
        let mut basis = Vec::with_capacity(faces.len());
        for (f, tri) in faces.iter().enumerate() {
            let [p0, p1, p2] = tri.map(|v| vertices[v]);
            let twice = cross(p0, p1, p2);
            if twice <= 0.0 {
                return Err(Error::DegenerateFace { face: f });
            }
            areas.push(0.5 * twice);
            // grad(phi_i) = rot90(opposite edge) / (2 * area)
            let grad = |pa: Complex64, pb: Complex64| {
                let e = pb - pa;
                [-e.im / twice, e.re / twice]
            };
            basis.push([grad(p1, p2), grad(p2, p0), grad(p0, p1)]);
        }

        let mut lumped = vec![0.0; vertices.len()];
        for (tri, &area) in faces.iter().zip(&areas) {
            for &v in tri {
                lumped[v] += area / 3.0;
            }
        }

        Ok(TriGrid {
            width,
            height,
            vertices,
            faces,
            areas,
            basis,
            lumped,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn basis_gradients(&self) -> &[[[f64; 2]; 3]] {
        &self.basis
    }

    /// Lumped (barycentric) vertex areas: one third of every incident face.
    pub fn vertex_areas(&self) -> &[f64] {
        &self.lumped
    }

    pub fn total_area(&self) -> f64 {
        ((self.width - 1) * (self.height - 1)) as f64
    }

    #[inline]
    pub fn vertex_id(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        let (x, y) = (v % self.width, v / self.width);
        x == 0 || y == 0 || x == self.width - 1 || y == self.height - 1
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count())
            .filter(|&v| self.is_boundary(v))
            .collect()
    }

    /// Nearest grid vertex to `p`, clamped into the grid.
    pub fn nearest_vertex(&self, p: Complex64) -> usize {
        let x = p.re.round().clamp(0.0, (self.width - 1) as f64) as usize;
        let y = p.im.round().clamp(0.0, (self.height - 1) as f64) as usize;
        self.vertex_id(x, y)
    }

    /// Face containing `p` together with its barycentric coordinates, or
    /// `None` if `p` lies outside the grid.
    pub fn locate(&self, p: Complex64) -> Option<(usize, [f64; 3])> {
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(p.re >= 0.0 && p.re <= w && p.im >= 0.0 && p.im <= h) {
            return None;
        }
        let cx = (p.re.floor() as usize).min(self.width - 2);
        let cy = (p.im.floor() as usize).min(self.height - 2);
        let (fx, fy) = (p.re - cx as f64, p.im - cy as f64);
        let cell = 2 * (cy * (self.width - 1) + cx);
        if fx >= fy {
            // [a, b, c]: a = (0,0), b = (1,0), c = (1,1)
            Some((cell, [1.0 - fx, fx - fy, fy]))
        } else {
            // [a, c, d]: d = (0,1)
            Some((cell + 1, [1.0 - fy, fx, fy - fx]))
        }
    }
}

/// A piecewise-linear map of a grid: one target position per vertex.
#[derive(Debug, Clone)]
pub struct QCMap {
    grid: Arc<TriGrid>,
    targets: Vec<Complex64>,
}

impl QCMap {
    pub fn new(grid: Arc<TriGrid>, targets: Vec<Complex64>) -> Result<Self> {
        if targets.len() != grid.vertex_count() {
            return Err(Error::InvalidInput(format!(
                "map has {} targets for {} vertices",
                targets.len(),
                grid.vertex_count()
            )));
        }
        if let Some(v) = targets.iter().position(|t| !(t.re.is_finite() && t.im.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite target at vertex {v}")));
        }
        Ok(QCMap { grid, targets })
    }

    pub fn identity(grid: Arc<TriGrid>) -> Self {
        let targets = grid.vertices().to_vec();
        QCMap { grid, targets }
    }

    /// Map every vertex `z` to `f(z)`.
    pub fn from_fn(grid: Arc<TriGrid>, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        let targets = grid.vertices().iter().map(|&z| f(z)).collect();
        QCMap::new(grid, targets)
    }

    pub fn grid(&self) -> &Arc<TriGrid> {
        &self.grid
    }

    pub fn targets(&self) -> &[Complex64] {
        &self.targets
    }

    pub fn into_targets(self) -> Vec<Complex64> {
        self.targets
    }

    /// Twice the signed area of every image triangle.
    pub fn image_signed_areas(&self) -> Vec<f64> {
        self.grid
            .faces()
            .iter()
            .map(|&[a, b, c]| cross(self.targets[a], self.targets[b], self.targets[c]))
            .collect()
    }

    pub fn folded_faces(&self) -> Vec<usize> {
        self.image_signed_areas()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a <= 0.0)
            .map(|(f, _)| f)
            .collect()
    }

    pub fn is_orientation_preserving(&self) -> bool {
        self.image_signed_areas().iter().all(|&a| a > 0.0)
    }

    /// Evaluate the piecewise-linear map at an arbitrary domain point.
    pub fn eval(&self, p: Complex64) -> Option<Complex64> {
        let (f, bary) = self.grid.locate(p)?;
        let tri = self.grid.faces()[f];
        Some(
            tri.iter()
                .zip(bary)
                .map(|(&v, w)| self.targets[v] * w)
                .sum(),
        )
    }

    /// Post-compose with `g`, i.e. the map `z -> g(f(z))`.
    pub fn post_compose(&self, g: impl Fn(Complex64) -> Complex64) -> Result<QCMap> {
        QCMap::new(self.grid.clone(), self.targets.iter().map(|&t| g(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grids() {
        let g = TriGrid::new(2, 2).unwrap();
        assert_eq!((g.vertex_count(), g.face_count()), (4, 2));
        let g = TriGrid::new(3, 2).unwrap();
        assert_eq!((g.vertex_count(), g.face_count()), (6, 4));
        let g = TriGrid::new(9, 9).unwrap();
        assert_eq!((g.vertex_count(), g.face_count()), (81, 2 * 8 * 8));
    }

    #[test]
    fn rejects_thin_grids() {
        assert!(matches!(
            TriGrid::new(1, 5),
            Err(Error::InvalidDimension { width: 1, height: 5 })
        ));
        assert!(TriGrid::new(4, 0).is_err());
    }

    #[test]
    fn row_major_ids_and_positive_faces() {
        let g = TriGrid::new(5, 4).unwrap();
        for (v, z) in g.vertices().iter().enumerate() {
            assert_eq!(g.vertex_id(z.re as usize, z.im as usize), v);
        }
        for tri in g.faces() {
            let [a, b, c] = tri.map(|v| g.vertices()[v]);
            assert!(cross(a, b, c) > 0.0);
        }
        assert!((g.face_areas().iter().sum::<f64>() - g.total_area()).abs() < 1e-12);
        assert!((g.vertex_areas().iter().sum::<f64>() - g.total_area()).abs() < 1e-12);
    }

    #[test]
    fn locate_reproduces_points() {
        let g = Arc::new(TriGrid::new(6, 5).unwrap());
        let id = QCMap::identity(g.clone());
        for &p in &[
            Complex64::new(0.0, 0.0),
            Complex64::new(2.3, 1.7),
            Complex64::new(2.7, 1.3),
            Complex64::new(5.0, 4.0),
            Complex64::new(4.5, 4.0),
        ] {
            let q = id.eval(p).unwrap();
            assert!((q - p).norm() < 1e-12, "{p} -> {q}");
        }
        assert!(id.eval(Complex64::new(-0.1, 1.0)).is_none());
    }

    #[test]
    fn boundary_count() {
        let g = TriGrid::new(5, 4).unwrap();
        assert_eq!(g.boundary_vertices().len(), 2 * 5 + 2 * 2);
    }
}
