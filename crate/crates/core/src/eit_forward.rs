//! Continuum-model EIT forward map: electrode current patterns, the Neumann
//! forward solves, boundary traces and the least-squares misfit.

use std::f64::consts::{PI, TAU};

use crate::error::{DataError, Error};
use crate::fem::{assemble_boundary_load, Coefficient, NeumannSolver, NodalField, P1Space, SolverOptions};
use crate::mesh::{BoundaryParam, TriMesh};
use crate::synth::resample_boundary;

pub const DEFAULT_ELECTRODE_WIDTH: f64 = PI / 20.0;

/// Pattern `index` (1-based) injects +1 on the source electrode and -1 on the
/// diametrically opposite sink.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentPattern {
    pub electrode_count: usize,
    pub index: usize,
    pub width: f64,
    pub source_center: f64,
    pub sink_center: f64,
}

/// `E / 2` patterns; the source of pattern `j` is centred at
/// `pi/2 + 2 pi (j - 1) / E`.
pub fn make_patterns(electrode_count: usize, width: f64) -> Result<Vec<CurrentPattern>, DataError> {
    if electrode_count < 2 || electrode_count % 2 != 0 {
        return Err(DataError::OddElectrodeCount(electrode_count));
    }
    if !(width > 0.0) || electrode_count as f64 * width >= TAU {
        return Err(DataError::OverlappingElectrodes {
            count: electrode_count,
            width,
        });
    }
    Ok((1..=electrode_count / 2)
        .map(|j| {
            let source = (PI / 2.0 + TAU * (j - 1) as f64 / electrode_count as f64).rem_euclid(TAU);
            CurrentPattern {
                electrode_count,
                index: j,
                width,
                source_center: source,
                sink_center: (source + PI).rem_euclid(TAU),
            }
        })
        .collect())
}

fn on_arc(angle: f64, center: f64, width: f64) -> bool {
    (angle - (center - 0.5 * width)).rem_euclid(TAU) < width
}

impl CurrentPattern {
    /// Arcs with left endpoints closed and right endpoints open.
    pub fn g(&self, angle: f64) -> f64 {
        if on_arc(angle, self.source_center, self.width) {
            1.0
        } else if on_arc(angle, self.sink_center, self.width) {
            -1.0
        } else {
            0.0
        }
    }

    /// Exact integrals of the +/-1 arc indicator against the boundary hat
    /// functions, with each edge parametrized linearly in angle.
    pub fn load(&self, mesh: &TriMesh, bparam: &BoundaryParam) -> Vec<f64> {
        let mut load = vec![0.0; mesh.num_vertices()];
        let n = bparam.len();
        for k in 0..n {
            let (a, b) = (k, (k + 1) % n);
            let t0 = bparam.angles[a];
            let span = (bparam.angles[b] - t0).rem_euclid(TAU);
            if span <= 0.0 {
                continue;
            }
            let len = bparam.edge_lengths[k];
            let (mut ia, mut ib) = (0.0, 0.0);
            for (center, sign) in [(self.source_center, 1.0), (self.sink_center, -1.0)] {
                let start = (center - 0.5 * self.width - t0).rem_euclid(TAU);
                for offset in [start, start - TAU] {
                    let s0 = (offset / span).clamp(0.0, 1.0);
                    let s1 = ((offset + self.width) / span).clamp(0.0, 1.0);
                    if s1 > s0 {
                        let lin = 0.5 * (s1 * s1 - s0 * s0);
                        ia += sign * ((s1 - s0) - lin);
                        ib += sign * lin;
                    }
                }
            }
            load[bparam.vertices[a]] += len * ia;
            load[bparam.vertices[b]] += len * ib;
        }
        load
    }
}

pub fn g_eval(pattern: &CurrentPattern, angle: f64) -> f64 {
    pattern.g(angle)
}

/// Boundary samples `(angle, value)` for measurement `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub index: usize,
    angles: Vec<f64>,
    values: Vec<f64>,
}

impl BoundaryData {
    /// Angles must be finite, strictly increasing and inside `[0, 2pi)`.
    pub fn new(index: usize, angles: Vec<f64>, values: Vec<f64>) -> Result<Self, DataError> {
        if angles.len() != values.len() {
            return Err(DataError::MeasurementCount {
                expected: angles.len(),
                found: values.len(),
            });
        }
        let in_range = angles.iter().all(|a| a.is_finite() && (0.0..TAU).contains(a));
        if !in_range || angles.windows(2).any(|w| w[1] <= w[0]) || values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::BadAngles);
        }
        Ok(BoundaryData { index, angles, values })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, DataError> {
        BoundaryData::new(self.index, self.angles.clone(), values)
    }

    /// Whether the samples sit exactly on the vertices of `bparam`.
    pub fn matches(&self, bparam: &BoundaryParam) -> bool {
        self.angles == bparam.angles
    }
}

/// Values of `u` around the boundary loop, shifted to zero weighted mean.
pub fn boundary_trace(u: &[f64], bparam: &BoundaryParam, index: usize) -> BoundaryData {
    let raw: Vec<f64> = bparam.vertices.iter().map(|&v| u[v]).collect();
    let mean = bparam.weighted_mean(&raw);
    BoundaryData {
        index,
        angles: bparam.angles.clone(),
        values: raw.iter().map(|v| v - mean).collect(),
    }
}

/// Assembles `sigma` once and solves the constrained Neumann problems for
/// several loads with one factorization.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    solver: NeumannSolver,
}

impl ForwardOperator {
    pub fn new<C: Coefficient + ?Sized>(
        space: &P1Space<'_>,
        sigma: &C,
        boundary_weights: &[f64],
        opts: SolverOptions,
    ) -> Result<Self, Error> {
        let a = space.stiffness(sigma)?;
        Ok(ForwardOperator {
            solver: NeumannSolver::new(&a, boundary_weights, opts)?,
        })
    }

    pub fn solve(&self, load: &[f64]) -> Result<NodalField, Error> {
        Ok(self.solver.solve(load)?.u)
    }
}

pub fn forward_solve<C: Coefficient + ?Sized>(
    mesh: &TriMesh,
    sigma: &C,
    pattern: &CurrentPattern,
) -> Result<NodalField, Error> {
    let bparam = crate::mesh::boundary_param(mesh)?;
    forward_solve_load(mesh, sigma, &bparam, &pattern.load(mesh, &bparam))
}

/// Forward solve for an arbitrary boundary flux `g(angle)` (trapezoid load).
pub fn forward_solve_flux<C: Coefficient + ?Sized>(
    mesh: &TriMesh,
    sigma: &C,
    g: impl Fn(f64) -> f64,
) -> Result<NodalField, Error> {
    let bparam = crate::mesh::boundary_param(mesh)?;
    forward_solve_load(mesh, sigma, &bparam, &assemble_boundary_load(mesh, &bparam, g))
}

fn forward_solve_load<C: Coefficient + ?Sized>(
    mesh: &TriMesh,
    sigma: &C,
    bparam: &BoundaryParam,
    load: &[f64],
) -> Result<NodalField, Error> {
    let space = P1Space::new(mesh)?;
    let w = bparam.nodal_weights(mesh.num_vertices());
    ForwardOperator::new(&space, sigma, &w, SolverOptions::default())?.solve(load)
}

/// `J = 1/2 sum_j int (u_j - m_j)^2 ds` with the P1 boundary mass.
/// Measurements not sampled on `bparam` are resampled first.
pub fn cost(traces: &[BoundaryData], measurements: &[BoundaryData], bparam: &BoundaryParam) -> Result<f64, DataError> {
    if traces.len() != measurements.len() {
        return Err(DataError::MeasurementCount {
            expected: traces.len(),
            found: measurements.len(),
        });
    }
    let mut total = 0.0;
    for (u, m) in traces.iter().zip(measurements) {
        if u.len() != bparam.len() {
            return Err(DataError::MeasurementCount {
                expected: bparam.len(),
                found: u.len(),
            });
        }
        let resampled;
        let m = if m.matches(bparam) {
            m
        } else {
            resampled = resample_boundary(m, bparam)?;
            &resampled
        };
        let r: Vec<f64> = u.values.iter().zip(&m.values).map(|(a, b)| a - b).collect();
        total += 0.5 * bparam.norm_sq(&r);
    }
    Ok(total)
}
