use super::sparse::{dot, pcg, CsrMatrix, EnvelopeCholesky};
use super::NodalField;
use crate::error::FemError;
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Envelope Cholesky under reverse Cuthill-McKee ordering.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// `None` picks [`SolverKind::Direct`] up to `direct_limit` unknowns.
    pub kind: Option<SolverKind>,
    pub tol: f64,
    /// Defaults to ten times the dimension.
    pub max_iter: Option<usize>,
    pub direct_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: None,
            tol: 1e-10,
            max_iter: None,
            direct_limit: 50_000,
        }
    }
}

impl SolverOptions {
    pub fn resolve(&self, n: usize) -> SolverKind {
        self.kind.unwrap_or(if n <= self.direct_limit {
            SolverKind::Direct
        } else {
            SolverKind::ConjugateGradient
        })
    }

    fn iterations(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(1))
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Direct(EnvelopeCholesky),
    Iterative(CsrMatrix),
}

impl Backend {
    fn solve(&self, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>, FemError> {
        match self {
            Backend::Direct(chol) => Ok(chol.solve(b)),
            Backend::Iterative(a) => pcg(a, b, opts.tol, opts.iterations(a.dim())).map(|(x, _)| x),
        }
    }
}

/// Conjugate-gradient solve of an SPD system with a relative-residual target.
pub fn linear_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, FemError> {
    pcg(a, b, tol, max_iter).map(|(x, _)| x)
}

/// Result of a zero-boundary-mean Neumann solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannSolution {
    pub u: NodalField,
    /// Net flux `sum(rhs)` removed from the load before solving.
    pub removed_flux: f64,
}

/// Solves `A u = b` for a stiffness matrix with constant nullspace, subject to
/// `sum_i w_i u_i = 0`.
///
/// This is the bordered system `[A w; w^T 0] [u; mu] = [b; 0]`: the
/// multiplier is `mu = sum(b) / sum(w)`, so the load is first made compatible
/// as `b - mu w`. The direct path then pins one vertex, solves the SPD
/// remainder and shifts the result onto the constraint.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    backend: Backend,
    weights: Vec<f64>,
    weight_sum: f64,
    pinned: usize,
    opts: SolverOptions,
}

impl NeumannSolver {
    pub fn new(a: &CsrMatrix, boundary_weights: &[f64], opts: SolverOptions) -> Result<Self, FemError> {
        let n = a.dim();
        if boundary_weights.len() != n {
            return Err(FemError::DimensionMismatch {
                expected: n,
                found: boundary_weights.len(),
            });
        }
        let weight_sum: f64 = boundary_weights.iter().sum();
        if !(weight_sum > 0.0) {
            return Err(FemError::ZeroBoundaryWeight);
        }
        let pinned = boundary_weights.iter().position(|&w| w == 0.0).unwrap_or(0);
        let backend = match opts.resolve(n) {
            SolverKind::Direct => {
                let mut fixed = vec![false; n];
                fixed[pinned] = true;
                Backend::Direct(EnvelopeCholesky::factor(&a.eliminate_symmetric(&fixed))?)
            }
            SolverKind::ConjugateGradient => Backend::Iterative(a.clone()),
        };
        Ok(NeumannSolver {
            backend,
            weights: boundary_weights.to_vec(),
            weight_sum,
            pinned,
            opts,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<NeumannSolution, FemError> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(FemError::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let removed_flux: f64 = rhs.iter().sum();
        let mu = removed_flux / self.weight_sum;
        let mut b: Vec<f64> = rhs.iter().zip(&self.weights).map(|(r, w)| r - mu * w).collect();
        if let Backend::Direct(_) = self.backend {
            b[self.pinned] = 0.0;
        }
        let mut u = self.backend.solve(&b, &self.opts)?;
        let shift = dot(&self.weights, &u) / self.weight_sum;
        u.iter_mut().for_each(|v| *v -= shift);
        Ok(NeumannSolution {
            u: NodalField::from_vec(u),
            removed_flux,
        })
    }
}

pub fn solve_neumann_zero_mean(
    a: &CsrMatrix,
    rhs: &[f64],
    boundary_weights: &[f64],
) -> Result<NeumannSolution, FemError> {
    NeumannSolver::new(a, boundary_weights, SolverOptions::default())?.solve(rhs)
}

/// Homogeneous Dirichlet solve with symmetric elimination of the fixed rows
/// and columns (unit diagonal, zero right-hand side).
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    backend: Backend,
    fixed: Vec<bool>,
    opts: SolverOptions,
}

impl DirichletSolver {
    pub fn new(a: &CsrMatrix, fixed: &[bool], opts: SolverOptions) -> Result<Self, FemError> {
        if fixed.len() != a.dim() {
            return Err(FemError::DimensionMismatch {
                expected: a.dim(),
                found: fixed.len(),
            });
        }
        let reduced = a.eliminate_symmetric(fixed);
        let backend = match opts.resolve(a.dim()) {
            SolverKind::Direct => Backend::Direct(EnvelopeCholesky::factor(&reduced)?),
            SolverKind::ConjugateGradient => Backend::Iterative(reduced),
        };
        Ok(DirichletSolver {
            backend,
            fixed: fixed.to_vec(),
            opts,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<NodalField, FemError> {
        if rhs.len() != self.fixed.len() {
            return Err(FemError::DimensionMismatch {
                expected: self.fixed.len(),
                found: rhs.len(),
            });
        }
        let b: Vec<f64> = rhs
            .iter()
            .zip(&self.fixed)
            .map(|(&r, &f)| if f { 0.0 } else { r })
            .collect();
        let mut x = self.backend.solve(&b, &self.opts)?;
        for (v, &f) in x.iter_mut().zip(&self.fixed) {
            if f {
                *v = 0.0;
            }
        }
        Ok(NodalField::from_vec(x))
    }
}

/// `a` is the full assembled matrix; boundary rows and columns are eliminated here.
pub fn solve_dirichlet_zero(a: &CsrMatrix, rhs: &[f64], mesh: &TriMesh) -> Result<NodalField, FemError> {
    DirichletSolver::new(a, mesh.boundary_flags(), SolverOptions::default())?.solve(rhs)
}
