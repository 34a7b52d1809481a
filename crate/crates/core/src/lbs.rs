//! Linear Beltrami Solver: reconstruct a map from a prescribed Beltrami
//! coefficient under point constraints.
//!
//! Writing `mu = rho + i tau` on a face, both coordinate functions of the map
//! satisfy `div(A grad u) = 0` with the per-face tensor
//!
//! ```text
//!     A = 1/(1 - rho^2 - tau^2) [ (rho-1)^2 + tau^2     -2 tau          ]
//!                               [ -2 tau                (1+rho)^2 + tau^2 ]
//! ```
//!
//! which is symmetric positive definite with unit determinant whenever
//! `|mu| < 1`. The equation is discretised with P1 elements and the pinned
//! values are eliminated as Dirichlet data.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use crate::beltrami::{clamp_modulus, BeltramiField};
use crate::error::{Error, Result};
use crate::grid::{QCMap, TriGrid};
use crate::sparse::{conjugate_gradient, CgOptions, CsrMatrix};

#[derive(Debug, Clone, Copy)]
pub struct LbsOptions {
    /// Coefficients are clamped to `|mu| <= 1 - epsilon` before assembly.
    pub epsilon: f64,
    pub cg: CgOptions,
}

impl Default for LbsOptions {
    fn default() -> Self {
        LbsOptions {
            epsilon: 1e-2,
            cg: CgOptions::default(),
        }
    }
}

/// Point constraints, possibly on a single coordinate of a vertex.
#[derive(Debug, Clone, Default)]
pub struct Pins {
    u: BTreeMap<usize, f64>,
    v: BTreeMap<usize, f64>,
}

impl Pins {
    pub fn new() -> Self {
        Pins::default()
    }

    /// Pin both coordinates of each listed vertex.
    pub fn from_points(points: &[(usize, Complex64)]) -> Result<Self> {
        let mut pins = Pins::new();
        for &(v, t) in points {
            pins.pin(v, t)?;
        }
        Ok(pins)
    }

    pub fn pin(&mut self, vertex: usize, target: Complex64) -> Result<()> {
        self.pin_u(vertex, target.re)?;
        self.pin_v(vertex, target.im)
    }

    pub fn pin_u(&mut self, vertex: usize, value: f64) -> Result<()> {
        insert_pin(&mut self.u, vertex, value, "x")
    }

    pub fn pin_v(&mut self, vertex: usize, value: f64) -> Result<()> {
        insert_pin(&mut self.v, vertex, value, "y")
    }

    /// Boundary sliding conditions for a rectangle mapped onto itself: the
    /// left and right sides keep their x coordinate, the bottom and top sides
    /// keep their y coordinate, and the tangential coordinate is free.
    pub fn sliding_rectangle(grid: &TriGrid) -> Self {
        let mut pins = Pins::new();
        let (w, h) = (grid.width(), grid.height());
        for y in 0..h {
            for x in [0, w - 1] {
                pins.u.insert(grid.vertex_id(x, y), x as f64);
            }
        }
        for x in 0..w {
            for y in [0, h - 1] {
                pins.v.insert(grid.vertex_id(x, y), y as f64);
            }
        }
        pins
    }

    pub fn len(&self) -> usize {
        self.u.len().max(self.v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty() && self.v.is_empty()
    }
}

fn insert_pin(map: &mut BTreeMap<usize, f64>, vertex: usize, value: f64, axis: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidConstraint(format!(
            "non-finite {axis} target for vertex {vertex}"
        )));
    }
    match map.insert(vertex, value) {
        Some(old) if (old - value).abs() > 1e-9 => Err(Error::InvalidConstraint(format!(
            "vertex {vertex} pinned to conflicting {axis} targets {old} and {value}"
        ))),
        _ => Ok(()),
    }
}

/// Per-face diffusion tensor `[a11, a12, a22]` of the clamped coefficient.
#[inline]
pub fn beltrami_tensor(mu: Complex64) -> [f64; 3] {
    let (rho, tau) = (mu.re, mu.im);
    let denom = 1.0 - rho * rho - tau * tau;
    [
        ((rho - 1.0).powi(2) + tau * tau) / denom,
        -2.0 * tau / denom,
        ((1.0 + rho).powi(2) + tau * tau) / denom,
    ]
}

/// Element stiffness matrices `area * grad(phi_i)' A grad(phi_j)` of every face.
fn element_matrices(grid: &TriGrid, mu: &[Complex64], cap: f64) -> Vec<[[f64; 3]; 3]> {
    grid.basis_gradients()
        .iter()
        .zip(grid.face_areas())
        .zip(mu)
        .map(|((g, &area), &m)| {
            let [a11, a12, a22] = beltrami_tensor(clamp_modulus(m, cap));
            let mut k = [[0.0; 3]; 3];
            for i in 0..3 {
                let ag = [
                    a11 * g[i][0] + a12 * g[i][1],
                    a12 * g[i][0] + a22 * g[i][1],
                ];
                for j in 0..3 {
                    k[i][j] = area * (ag[0] * g[j][0] + ag[1] * g[j][1]);
                }
            }
            k
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Matrix(usize),
    /// Column of a pinned vertex: moves to the right-hand side of `row`.
    Rhs { row: usize, vertex: usize },
    Skip,
}

/// Reduced system of one coordinate: pinned vertices are eliminated and every
/// local element entry knows where it is accumulated.
#[derive(Debug, Clone)]
struct Component {
    values: Vec<Option<f64>>,
    free: Vec<usize>,
    matrix: CsrMatrix,
    slots: Vec<Slot>,
}

impl Component {
    fn new(grid: &TriGrid, pins: &BTreeMap<usize, f64>, axis: &str) -> Result<Self> {
        if pins.is_empty() {
            return Err(Error::InvalidConstraint(format!(
                "no {axis} constraint: the system is singular"
            )));
        }
        let n = grid.vertex_count();
        let mut values = vec![None; n];
        for (&v, &val) in pins {
            values[v] = Some(val);
        }
        let mut index = vec![usize::MAX; n];
        let mut free = Vec::new();
        for v in 0..n {
            if values[v].is_none() {
                index[v] = free.len();
                free.push(v);
            }
        }
        let mut entries = Vec::with_capacity(9 * grid.face_count());
        let mut positions = Vec::with_capacity(9 * grid.face_count());
        let mut slots = vec![Slot::Skip; 9 * grid.face_count()];
        for (f, tri) in grid.faces().iter().enumerate() {
            for i in 0..3 {
                let row = index[tri[i]];
                if row == usize::MAX {
                    continue;
                }
                for j in 0..3 {
                    let col = index[tri[j]];
                    if col == usize::MAX {
                        slots[9 * f + 3 * i + j] = Slot::Rhs {
                            row,
                            vertex: tri[j],
                        };
                    } else {
                        entries.push((row, col));
                        positions.push(9 * f + 3 * i + j);
                    }
                }
            }
        }
        let (matrix, entry_slots) = CsrMatrix::with_pattern(free.len(), &entries);
        for (pos, slot) in positions.into_iter().zip(entry_slots) {
            slots[pos] = Slot::Matrix(slot);
        }
        Ok(Component {
            values,
            free,
            matrix,
            slots,
        })
    }

    /// Solve with the given element matrices; `x` carries the initial guess.
    fn solve(&self, elements: &[[[f64; 3]; 3]], x: &mut [f64], cg: CgOptions, axis: &str) -> Result<()> {
        for (xv, val) in x.iter_mut().zip(&self.values) {
            if let Some(val) = val {
                *xv = *val;
            }
        }
        if self.free.is_empty() {
            return Ok(());
        }
        let mut matrix = self.matrix.clone();
        let mut rhs = vec![0.0; self.free.len()];
        {
            let values = matrix.values_mut();
            for (k, slot) in elements.iter().flatten().flatten().zip(&self.slots) {
                match *slot {
                    Slot::Matrix(s) => values[s] += k,
                    Slot::Rhs { row, vertex } => rhs[row] -= k * x[vertex],
                    Slot::Skip => {}
                }
            }
        }
        let mut sol: Vec<f64> = self.free.iter().map(|&v| x[v]).collect();
        conjugate_gradient(&matrix, &rhs, &mut sol, cg)
            .map_err(|e| Error::SolverFailure(format!("{axis} coordinate: {e}")))?;
        for (&v, s) in self.free.iter().zip(sol) {
            x[v] = s;
        }
        Ok(())
    }
}

/// Pre-assembled sparsity for repeated solves on one grid with fixed pins.
#[derive(Debug, Clone)]
pub struct LbsSystem {
    grid: Arc<TriGrid>,
    u: Component,
    v: Component,
}

impl LbsSystem {
    pub fn new(grid: Arc<TriGrid>, pins: &Pins) -> Result<Self> {
        let n = grid.vertex_count();
        if let Some(&v) = pins.u.keys().chain(pins.v.keys()).find(|&&v| v >= n) {
            return Err(Error::InvalidConstraint(format!(
                "vertex id {v} out of range for {n} vertices"
            )));
        }
        let u = Component::new(&grid, &pins.u, "x")?;
        let v = Component::new(&grid, &pins.v, "y")?;
        Ok(LbsSystem { grid, u, v })
    }

    pub fn grid(&self) -> &Arc<TriGrid> {
        &self.grid
    }

    /// Reconstruct the map for `mu`; `initial` seeds the iterative solver.
    pub fn solve(&self, mu: &BeltramiField, initial: Option<&QCMap>, opts: LbsOptions) -> Result<QCMap> {
        let grid = &self.grid;
        let n = grid.vertex_count();
        if mu.values().len() != grid.face_count() {
            return Err(Error::InvalidInput(format!(
                "coefficient has {} faces, grid has {}",
                mu.values().len(),
                grid.face_count()
            )));
        }
        let elements = element_matrices(grid, mu.values(), 1.0 - opts.epsilon);
        let start: Vec<Complex64> = match initial {
            Some(m) if m.targets().len() == n => m.targets().to_vec(),
            _ => grid.vertices().to_vec(),
        };
        let mut u: Vec<f64> = start.iter().map(|z| z.re).collect();
        let mut v: Vec<f64> = start.iter().map(|z| z.im).collect();
        self.u.solve(&elements, &mut u, opts.cg, "x")?;
        self.v.solve(&elements, &mut v, opts.cg, "y")?;
        let targets = u
            .into_iter()
            .zip(v)
            .map(|(x, y)| Complex64::new(x, y))
            .collect();
        QCMap::new(grid.clone(), targets)
    }
}

/// Reconstruct the map whose coordinates solve the Beltrami-Laplace equations
/// for `mu`, with `pins` imposed exactly. `initial` seeds the iterative solver.
pub fn lbs_solve_pins(
    mu: &BeltramiField,
    pins: &Pins,
    initial: Option<&QCMap>,
    opts: LbsOptions,
) -> Result<QCMap> {
    LbsSystem::new(mu.grid().clone(), pins)?.solve(mu, initial, opts)
}

/// Reconstruct a map from `mu` with the listed vertices pinned to their targets.
pub fn lbs_solve(
    mu: &BeltramiField,
    constraints: &[(usize, Complex64)],
    opts: LbsOptions,
) -> Result<QCMap> {
    lbs_solve_pins(mu, &Pins::from_points(constraints)?, None, opts)
}

/// Every boundary vertex pinned to `f` of its own position.
pub fn boundary_constraints(
    grid: &TriGrid,
    f: impl Fn(Complex64) -> Complex64,
) -> Vec<(usize, Complex64)> {
    grid.boundary_vertices()
        .into_iter()
        .map(|v| (v, f(grid.vertices()[v])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beltrami::beltrami_of_map;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn tensor_has_unit_determinant() {
        for mu in [c(0.0, 0.0), c(0.3, 0.0), c(-0.2, 0.5), c(0.0, -0.9)] {
            let [a, b, d] = beltrami_tensor(mu);
            assert!((a * d - b * b - 1.0).abs() < 1e-12);
            assert!(a > 0.0 && d > 0.0);
        }
        assert_eq!(beltrami_tensor(c(0.0, 0.0)), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_mu_with_identity_boundary_is_identity() {
        let g = Arc::new(TriGrid::new(9, 7).unwrap());
        let mu = BeltramiField::constant(g.clone(), c(0.0, 0.0));
        let map = lbs_solve(&mu, &boundary_constraints(&g, |z| z), LbsOptions::default()).unwrap();
        for (t, z) in map.targets().iter().zip(g.vertices()) {
            assert!((t - z).norm() < 1e-8);
        }
    }

    #[test]
    fn constant_mu_recovers_affine_map() {
        let g = Arc::new(TriGrid::new(12, 10).unwrap());
        let affine = |z: Complex64| z + z.conj() * 0.3;
        let mu = BeltramiField::constant(g.clone(), c(0.3, 0.0));
        let map = lbs_solve(&mu, &boundary_constraints(&g, affine), LbsOptions::default()).unwrap();
        for (t, &z) in map.targets().iter().zip(g.vertices()) {
            assert!((t - affine(z)).norm() < 1e-8);
        }
        let back = beltrami_of_map(&map).unwrap();
        assert!(back.values().iter().all(|m| (m - c(0.3, 0.0)).norm() < 1e-8));
    }

    #[test]
    fn complex_constant_with_interior_pin() {
        let g = Arc::new(TriGrid::new(10, 10).unwrap());
        let a = c(1.1, 0.2);
        let b = c(-0.1, 0.25);
        let affine = move |z: Complex64| a * z + b * z.conj() + c(3.0, -1.0);
        let mu = BeltramiField::constant(g.clone(), b / a);
        let mut cons = boundary_constraints(&g, affine);
        let inner = g.vertex_id(4, 5);
        cons.push((inner, affine(g.vertices()[inner])));
        let map = lbs_solve(&mu, &cons, LbsOptions::default()).unwrap();
        for (t, &z) in map.targets().iter().zip(g.vertices()) {
            assert!((t - affine(z)).norm() < 1e-8);
        }
    }

    #[test]
    fn constraint_errors() {
        let g = Arc::new(TriGrid::new(4, 4).unwrap());
        let mu = BeltramiField::constant(g.clone(), c(0.0, 0.0));
        assert!(matches!(
            lbs_solve(&mu, &[(99, c(0.0, 0.0))], LbsOptions::default()),
            Err(Error::InvalidConstraint(_))
        ));
        assert!(matches!(
            lbs_solve(&mu, &[], LbsOptions::default()),
            Err(Error::InvalidConstraint(_))
        ));
        assert!(matches!(
            lbs_solve(&mu, &[(0, c(0.0, 0.0)), (0, c(1.0, 0.0))], LbsOptions::default()),
            Err(Error::InvalidConstraint(_))
        ));
    }
}
