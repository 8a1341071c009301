//! P1 finite elements on [`TriMesh`]: fields, assembly and linear solvers.

mod solve;
mod sparse;

use std::ops::Deref;

pub use solve::{
    linear_solve, solve_dirichlet_zero, solve_neumann_zero_mean, DirichletSolver, NeumannSolution,
    NeumannSolver, SolverKind, SolverOptions,
};
pub use sparse::{pcg, CgReport, CsrMatrix, EnvelopeCholesky};

use crate::error::FemError;
use crate::mesh::{BoundaryParam, TriMesh};

/// One value per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: &TriMesh, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != mesh.num_vertices() {
            return Err(FemError::DimensionMismatch {
                expected: mesh.num_vertices(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FemError::NonFiniteValue(i));
        }
        Ok(NodalField { values })
    }

    pub fn zeros(mesh: &TriMesh) -> Self {
        NodalField {
            values: vec![0.0; mesh.num_vertices()],
        }
    }

    pub fn from_fn(mesh: &TriMesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        NodalField {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        NodalField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        NodalField {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Deref for NodalField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Three-point edge-midpoint rule, exact for quadratics on triangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadRule {
    /// Barycentric coordinates of each point.
    pub points: [[f64; 3]; 3],
    /// Weights on the reference simplex; multiply by the triangle area.
    pub weights: [f64; 3],
}

/// Point `k` is the midpoint of local edge `(k, k+1)`.
pub const EDGE_MIDPOINT_RULE: QuadRule = QuadRule {
    points: [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    weights: [1.0 / 3.0; 3],
};

/// A scalar coefficient evaluated at quadrature points.
pub trait Coefficient {
    /// Value at quadrature point `point` of `triangle`, located at `x`.
    fn value(&self, triangle: usize, point: usize, x: [f64; 2]) -> f64;
}

impl Coefficient for f64 {
    fn value(&self, _: usize, _: usize, _: [f64; 2]) -> f64 {
        *self
    }
}

/// Piecewise constant coefficient, one value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct PerTriangle(pub Vec<f64>);

impl Coefficient for PerTriangle {
    fn value(&self, triangle: usize, _: usize, _: [f64; 2]) -> f64 {
        self.0[triangle]
    }
}

/// Coefficient given by a function of position.
pub struct FnCoefficient<F>(pub F);

impl<F: Fn([f64; 2]) -> f64> Coefficient for FnCoefficient<F> {
    fn value(&self, _: usize, _: usize, x: [f64; 2]) -> f64 {
        (self.0)(x)
    }
}

/// Cached element geometry and the shared sparsity pattern of a mesh.
#[derive(Debug, Clone)]
pub struct P1Space<'m> {
    mesh: &'m TriMesh,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// Storage index of local entry `(a, b)` at `slots[t][3 * a + b]`.
    slots: Vec<[usize; 9]>,
}

impl<'m> P1Space<'m> {
    pub fn new(mesh: &'m TriMesh) -> Result<Self, FemError> {
        let n = mesh.num_vertices();
        let mut areas = Vec::with_capacity(mesh.num_triangles());
        let mut grads = Vec::with_capacity(mesh.num_triangles());
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.triangle_points(t);
            let area = mesh.triangle_area(t);
            if !(area > 0.0) {
                return Err(FemError::DegenerateTriangle(t));
            }
            let s = 1.0 / (2.0 * area);
            grads.push([
                [(b[1] - c[1]) * s, (c[0] - b[0]) * s],
                [(c[1] - a[1]) * s, (a[0] - c[0]) * s],
                [(a[1] - b[1]) * s, (b[0] - a[0]) * s],
            ]);
            areas.push(area);
        }

        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in mesh.triangles() {
            for &i in tri {
                adj[i].extend_from_slice(tri);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut s = [0; 9];
                for a in 0..3 {
                    let r = row_ptr[tri[a]]..row_ptr[tri[a] + 1];
                    for b in 0..3 {
                        let k = col_idx[r.clone()]
                            .binary_search(&tri[b])
                            .expect("pattern contains element couplings");
                        s[3 * a + b] = r.start + k;
                    }
                }
                s
            })
            .collect();
        Ok(P1Space {
            mesh,
            areas,
            grads,
            row_ptr,
            col_idx,
            slots,
        })
    }

    pub fn mesh(&self) -> &'m TriMesh {
        self.mesh
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Gradients of the three barycentric hat functions on triangle `t`.
    pub fn hat_gradients(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.grads[t]
    }

    /// Constant gradient of a P1 field on triangle `t`.
    pub fn field_gradient(&self, t: usize, u: &[f64]) -> [f64; 2] {
        let tri = self.mesh.triangles()[t];
        let g = &self.grads[t];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += u[tri[k]] * g[k][0];
            out[1] += u[tri[k]] * g[k][1];
        }
        out
    }

    /// Physical coordinates of the quadrature points of triangle `t`.
    pub fn quad_points(&self, t: usize) -> [[f64; 2]; 3] {
        let p = self.mesh.triangle_points(t);
        EDGE_MIDPOINT_RULE.points.map(|bary| {
            [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ]
        })
    }

    /// Values of a P1 field at every quadrature point.
    pub fn interpolate_at_quad(&self, u: &[f64]) -> Vec<[f64; 3]> {
        self.mesh
            .triangles()
            .iter()
            .map(|tri| {
                EDGE_MIDPOINT_RULE
                    .points
                    .map(|bary| bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]])
            })
            .collect()
    }

    fn empty_matrix_values(&self) -> Vec<f64> {
        vec![0.0; self.col_idx.len()]
    }

    fn finish(&self, values: Vec<f64>) -> CsrMatrix {
        CsrMatrix::from_raw(
            self.mesh.num_vertices(),
            self.row_ptr.clone(),
            self.col_idx.clone(),
            values,
        )
    }

    /// Stiffness matrix given the quadrature-averaged coefficient of every triangle.
    pub fn stiffness_from_element_means(&self, sigma_mean: &[f64]) -> CsrMatrix {
        let mut values = self.empty_matrix_values();
        for (t, slots) in self.slots.iter().enumerate() {
            let g = &self.grads[t];
            let scale = self.areas[t] * sigma_mean[t];
            for a in 0..3 {
                for b in 0..3 {
                    values[slots[3 * a + b]] += scale * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
        self.finish(values)
    }

    /// `A_ij = sum_t area_t * (sum_p w_p sigma(x_p)) * grad(phi_i) . grad(phi_j)`.
    pub fn stiffness<C: Coefficient + ?Sized>(&self, coeff: &C) -> Result<CsrMatrix, FemError> {
        let mut means = Vec::with_capacity(self.areas.len());
        for t in 0..self.areas.len() {
            let pts = self.quad_points(t);
            let mut mean = 0.0;
            for (p, x) in pts.iter().enumerate() {
                let v = coeff.value(t, p, *x);
                if !v.is_finite() {
                    return Err(FemError::NonFiniteCoefficient { triangle: t, value: v });
                }
                mean += EDGE_MIDPOINT_RULE.weights[p] * v;
            }
            means.push(mean);
        }
        Ok(self.stiffness_from_element_means(&means))
    }

    /// Consistent P1 mass matrix.
    pub fn mass(&self) -> CsrMatrix {
        let mut values = self.empty_matrix_values();
        for (t, slots) in self.slots.iter().enumerate() {
            let a12 = self.areas[t] / 12.0;
            for a in 0..3 {
                for b in 0..3 {
                    values[slots[3 * a + b]] += if a == b { 2.0 * a12 } else { a12 };
                }
            }
        }
        self.finish(values)
    }

    /// Boundary mass with the same sparsity pattern as the volume matrices.
    pub fn boundary_mass(&self, bparam: &BoundaryParam) -> CsrMatrix {
        let mut values = self.empty_matrix_values();
        let n = bparam.len();
        for k in 0..n {
            let i = bparam.vertices[k];
            let j = bparam.vertices[(k + 1) % n];
            let l = bparam.edge_lengths[k];
            for (r, c, v) in [(i, i, l / 3.0), (j, j, l / 3.0), (i, j, l / 6.0), (j, i, l / 6.0)] {
                let range = self.row_ptr[r]..self.row_ptr[r + 1];
                let pos = self.col_idx[range.clone()]
                    .binary_search(&c)
                    .expect("boundary edge belongs to a triangle");
                values[range.start + pos] += v;
            }
        }
        self.finish(values)
    }
}

pub fn assemble_stiffness<C: Coefficient + ?Sized>(mesh: &TriMesh, coeff: &C) -> Result<CsrMatrix, FemError> {
    P1Space::new(mesh)?.stiffness(coeff)
}

pub fn assemble_mass(mesh: &TriMesh) -> Result<CsrMatrix, FemError> {
    Ok(P1Space::new(mesh)?.mass())
}

pub fn assemble_boundary_mass(mesh: &TriMesh, bparam: &BoundaryParam) -> Result<CsrMatrix, FemError> {
    Ok(P1Space::new(mesh)?.boundary_mass(bparam))
}

/// `L(v) = int g v ds` with the per-edge trapezoid rule, `g` given as a
/// function of the polar angle.
pub fn assemble_boundary_load(mesh: &TriMesh, bparam: &BoundaryParam, g: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_vertices()];
    let n = bparam.len();
    for k in 0..n {
        let l = bparam.edge_lengths[k];
        let (a, b) = (k, (k + 1) % n);
        load[bparam.vertices[a]] += 0.5 * l * g(bparam.angles[a]);
        load[bparam.vertices[b]] += 0.5 * l * g(bparam.angles[b]);
    }
    load
}

/// Discrete `||grad u||_{L2}` (square root of `u^T K u` with unit coefficient).
pub fn dirichlet_seminorm(space: &P1Space<'_>, u: &[f64]) -> f64 {
    (0..space.mesh().num_triangles())
        .map(|t| {
            let g = space.field_gradient(t, u);
            space.area(t) * (g[0] * g[0] + g[1] * g[1])
        })
        .sum::<f64>()
        .sqrt()
}
