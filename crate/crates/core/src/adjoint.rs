//! Reduced cost `J(f)` and its adjoint gradient.
//!
//! The derivative is that of the discrete cost: `sigma` and `delta_alpha` are
//! sampled at the same quadrature points as the stiffness assembly and the
//! misfit uses the same boundary mass, so `w^T M lambda` is the exact
//! directional derivative of the computed `J` up to solver round-off.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::eit_forward::{BoundaryData, CurrentPattern, ForwardOperator};
use crate::error::{DataError, Error};
use crate::fem::{NodalField, P1Space, SolverOptions};
use crate::levelset::{sigma_of_q_with, LevelSetOperator, SigmaField, SmoothingParams};
use crate::mesh::{boundary_param, BoundaryParam, TriMesh};
use crate::synth::resample_boundary;

static NEXT_EVALUATION: AtomicU64 = AtomicU64::new(1);

fn next_evaluation_id() -> u64 {
    NEXT_EVALUATION.fetch_add(1, Ordering::Relaxed)
}

/// Everything computed from one control `f`.
#[derive(Debug, Clone)]
pub struct ControlState {
    eval_id: u64,
    pub f: NodalField,
    pub q: NodalField,
    pub sigma: SigmaField,
    pub u: Vec<NodalField>,
    /// Loop-ordered `trace(u_j) - m_j`.
    pub residuals: Vec<Vec<f64>>,
    pub cost: f64,
    forward: ForwardOperator,
}

impl ControlState {
    pub fn eval_id(&self) -> u64 {
        self.eval_id
    }
}

#[derive(Debug, Clone)]
pub struct AdjointBundle {
    eval_id: u64,
    pub z: Vec<NodalField>,
    /// Load of the level-set adjoint problem.
    pub source: Vec<f64>,
    pub lambda: NodalField,
    pub grad: NodalField,
}

impl AdjointBundle {
    pub fn eval_id(&self) -> u64 {
        self.eval_id
    }

    /// Fails unless the bundle was computed from `state`.
    pub fn ensure_matches(&self, state: &ControlState) -> Result<(), Error> {
        if self.eval_id != state.eval_id {
            return Err(Error::Stale {
                expected: state.eval_id,
                found: self.eval_id,
            });
        }
        Ok(())
    }
}

/// The map `f -> J(f)` for fixed patterns and measurements on one mesh.
#[derive(Debug, Clone)]
pub struct ControlProblem<'m> {
    space: P1Space<'m>,
    bparam: BoundaryParam,
    weights: Vec<f64>,
    params: SmoothingParams,
    levelset: LevelSetOperator,
    loads: Vec<Vec<f64>>,
    data: Vec<Vec<f64>>,
    opts: SolverOptions,
}

impl<'m> ControlProblem<'m> {
    /// Measurements are resampled onto the boundary of `mesh` when needed.
    pub fn new(
        mesh: &'m TriMesh,
        patterns: &[CurrentPattern],
        measurements: &[BoundaryData],
        params: SmoothingParams,
        opts: SolverOptions,
    ) -> Result<Self, Error> {
        if patterns.len() != measurements.len() {
            return Err(DataError::MeasurementCount {
                expected: patterns.len(),
                found: measurements.len(),
            }
            .into());
        }
        let space = P1Space::new(mesh)?;
        let bparam = boundary_param(mesh)?;
        let weights = bparam.nodal_weights(mesh.num_vertices());
        let levelset = LevelSetOperator::new(&space, params.gamma, opts)?;
        let loads = patterns.iter().map(|p| p.load(mesh, &bparam)).collect();
        let data = measurements
            .iter()
            .map(|m| {
                Ok(if m.matches(&bparam) {
                    m.values().to_vec()
                } else {
                    resample_boundary(m, &bparam)?.values().to_vec()
                })
            })
            .collect::<Result<_, DataError>>()?;
        Ok(ControlProblem {
            space,
            bparam,
            weights,
            params,
            levelset,
            loads,
            data,
            opts,
        })
    }

    pub fn mesh(&self) -> &'m TriMesh {
        self.space.mesh()
    }

    pub fn space(&self) -> &P1Space<'m> {
        &self.space
    }

    pub fn bparam(&self) -> &BoundaryParam {
        &self.bparam
    }

    pub fn params(&self) -> SmoothingParams {
        self.params
    }

    pub fn levelset(&self) -> &LevelSetOperator {
        &self.levelset
    }

    pub fn num_measurements(&self) -> usize {
        self.loads.len()
    }

    /// Measurements on this mesh's boundary vertices.
    pub fn measurements(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn evaluate(&self, f: &NodalField) -> Result<ControlState, Error> {
        let mesh = self.mesh();
        if f.len() != mesh.num_vertices() {
            return Err(crate::error::FemError::DimensionMismatch {
                expected: mesh.num_vertices(),
                found: f.len(),
            }
            .into());
        }
        let q = self.levelset.solve(f)?;
        let sigma = sigma_of_q_with(&self.space, &q, self.params.alpha, self.params.rule);
        let forward = ForwardOperator::new(&self.space, &sigma, &self.weights, self.opts)?;
        let mut u = Vec::with_capacity(self.loads.len());
        let mut residuals = Vec::with_capacity(self.loads.len());
        let mut cost = 0.0;
        for (load, m) in self.loads.iter().zip(&self.data) {
            let uj = forward.solve(load)?;
            let r = residual(&uj, m, &self.bparam);
            cost += 0.5 * self.bparam.norm_sq(&r);
            u.push(uj);
            residuals.push(r);
        }
        Ok(ControlState {
            eval_id: next_evaluation_id(),
            f: f.clone(),
            q,
            sigma,
            u,
            residuals,
            cost,
            forward,
        })
    }

    pub fn cost(&self, f: &NodalField) -> Result<f64, Error> {
        Ok(self.evaluate(f)?.cost)
    }

    pub fn gradient(&self, state: &ControlState) -> Result<AdjointBundle, Error> {
        let n = self.mesh().num_vertices();
        let z = state
            .residuals
            .iter()
            .map(|r| state.forward.solve(&scatter_boundary_mass(r, &self.bparam, n)))
            .collect::<Result<Vec<_>, _>>()?;
        let source = adjoint_source(&self.space, &state.sigma, &state.u, &z);
        let lambda = adjoint_levelset(&self.levelset, &source)?;
        Ok(AdjointBundle {
            eval_id: state.eval_id,
            z,
            source,
            grad: gradient(&lambda),
            lambda,
        })
    }

    /// `w^T M lambda`.
    pub fn directional_derivative(&self, bundle: &AdjointBundle, w: &[f64]) -> f64 {
        self.levelset.mass().bilinear(w, &bundle.lambda)
    }
}

fn residual(u: &[f64], m: &[f64], bparam: &BoundaryParam) -> Vec<f64> {
    let raw: Vec<f64> = bparam.vertices.iter().map(|&v| u[v]).collect();
    let mean = bparam.weighted_mean(&raw);
    raw.iter().zip(m).map(|(a, b)| a - mean - b).collect()
}

fn scatter_boundary_mass(r: &[f64], bparam: &BoundaryParam, n: usize) -> Vec<f64> {
    let mut load = vec![0.0; n];
    for (&v, b) in bparam.vertices.iter().zip(bparam.mass_apply(r)) {
        load[v] = b;
    }
    load
}

/// Adjoint state `z_j`: the constrained Neumann problem with load
/// `int (u_j - m_j) v ds`.
pub fn adjoint_forward(
    space: &P1Space<'_>,
    sigma: &SigmaField,
    u_j: &NodalField,
    m_j: &BoundaryData,
    bparam: &BoundaryParam,
) -> Result<NodalField, Error> {
    let m = if m_j.matches(bparam) {
        m_j.clone()
    } else {
        resample_boundary(m_j, bparam)?
    };
    let n = space.mesh().num_vertices();
    let op = ForwardOperator::new(space, sigma, &bparam.nodal_weights(n), SolverOptions::default())?;
    op.solve(&scatter_boundary_mass(&residual(u_j, m.values(), bparam), bparam, n))
}

/// `load_i = -sum_t area_t/3 sum_p delta_alpha(q(x_p)) phi_i(x_p) sum_j grad u_j . grad z_j`
/// for the edge-midpoint rule; in general the inner quadrature is the
/// derivative of the element-averaged sigma, [`SigmaField::band_weights`].
///
/// The minus sign makes the solution of the level-set adjoint problem the
/// gradient itself: `dJ(f)[w] = w^T M lambda`.
pub fn adjoint_source(space: &P1Space<'_>, sigma: &SigmaField, u: &[NodalField], z: &[NodalField]) -> Vec<f64> {
    let mesh = space.mesh();
    let mut load = vec![0.0; mesh.num_vertices()];
    for (t, (tri, band)) in mesh.triangles().iter().zip(sigma.band_weights()).enumerate() {
        if band.iter().all(|&d| d == 0.0) {
            continue;
        }
        let coupling: f64 = u
            .iter()
            .zip(z)
            .map(|(uj, zj)| {
                let gu = space.field_gradient(t, uj);
                let gz = space.field_gradient(t, zj);
                gu[0] * gz[0] + gu[1] * gz[1]
            })
            .sum();
        let scale = -space.area(t) * coupling;
        for a in 0..3 {
            load[tri[a]] += scale * band[a];
        }
    }
    load
}

/// Level-set adjoint `lambda`: the auxiliary operator with homogeneous
/// Dirichlet conditions applied to `source`.
pub fn adjoint_levelset(op: &LevelSetOperator, source: &[f64]) -> Result<NodalField, Error> {
    Ok(op.solve_load(source)?)
}

/// The L2 representative of `dJ/df` is `lambda` itself.
pub fn gradient(lambda: &NodalField) -> NodalField {
    lambda.clone()
}
