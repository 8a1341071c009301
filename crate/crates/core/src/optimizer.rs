//! Steepest descent on the control `f` with Armijo backtracking.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::adjoint::{AdjointBundle, ControlProblem, ControlState};
use crate::eit_forward::{BoundaryData, CurrentPattern};
use crate::error::{DataError, Error};
use crate::fem::{NodalField, SolverOptions};
use crate::levelset::{heaviside_alpha, heaviside_field, SigmaRule, SmoothingParams};
use crate::mesh::TriMesh;
use crate::shape::ShapeSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    pub shrink: f64,
    pub armijo_c: f64,
    pub max_backtracks: usize,
    /// Next trial step is `growth` times the last accepted one.
    pub growth: f64,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            shrink: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 25,
            growth: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub noise_level: f64,
    pub stop_factor: f64,
    pub tol_floor: f64,
    pub max_iters: usize,
    pub sigma_rule: SigmaRule,
    pub line_search: LineSearchParams,
    pub solver: SolverOptions,
    pub seed: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            gamma: 0.001,
            alpha: 0.01,
            noise_level: 0.01,
            stop_factor: 1e-9,
            tol_floor: 1e-12,
            max_iters: 1000,
            sigma_rule: SigmaRule::default(),
            line_search: LineSearchParams::default(),
            solver: SolverOptions::default(),
            seed: 0,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let ls = &self.line_search;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad("noise level must be non-negative");
        }
        if !(self.stop_factor >= 0.0 && self.tol_floor >= 0.0) {
            return bad("stopping tolerances must be non-negative");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(ls.armijo_c > 0.0 && ls.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(ls.growth >= 1.0 && ls.growth.is_finite()) {
            return bad("step growth must be at least 1");
        }
        Ok(())
    }

    pub fn smoothing(&self) -> Result<SmoothingParams, Error> {
        Ok(SmoothingParams::new(self.alpha, self.gamma)?.with_rule(self.sigma_rule))
    }

    /// Stop once `||grad||_inf` drops below this.
    pub fn tolerance(&self) -> f64 {
        (self.noise_level * self.stop_factor).max(self.tol_floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    Converged,
    MaxIters,
    LineSearchFailed,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::Converged => "converged",
            TerminationReason::MaxIters => "max_iters",
            TerminationReason::LineSearchFailed => "line_search_failed",
        })
    }
}

impl FromStr for TerminationReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "converged" => Ok(TerminationReason::Converged),
            "max_iters" => Ok(TerminationReason::MaxIters),
            "line_search_failed" => Ok(TerminationReason::LineSearchFailed),
            other => Err(format!("unknown termination reason `{other}`")),
        }
    }
}

/// One evaluated iterate. `step` is the accepted step from `f^k`, or 0 on the
/// last row of a run that converged or whose line search failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRow {
    pub k: usize,
    pub cost: f64,
    pub grad_inf: f64,
    pub step: f64,
    pub backtracks: usize,
    pub eps_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<IterationRow>,
    pub reason: TerminationReason,
}

pub const CONVERGENCE_HEADER: &str = "iter,J,grad_inf,step,backtracks,eps_err";

impl ConvergenceRecord {
    /// Number of accepted updates.
    pub fn iterations(&self) -> usize {
        self.rows.iter().filter(|r| r.step > 0.0).count()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CONVERGENCE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let eps = r.eps_err.map(|e| format!("{e:.16e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{},{}\n",
                r.k, r.cost, r.grad_inf, r.step, r.backtracks, eps
            ));
        }
        out.push_str(&format!("# reason={}\n", self.reason));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text).map_err(|(line, msg)| DataError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })
    }

    /// Errors carry the 1-based line number.
    pub fn parse_csv(text: &str) -> Result<Self, (usize, String)> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CONVERGENCE_HEADER => {}
            _ => return Err((1, format!("expected header `{CONVERGENCE_HEADER}`"))),
        }
        let mut rows = Vec::new();
        let mut reason = None;
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(r) = rest.trim().strip_prefix("reason=") {
                    reason = Some(r.parse().map_err(|e| (i + 1, e))?);
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err((i + 1, format!("expected 6 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| (i + 1, format!("{e}: `{s}`")));
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| (i + 1, format!("{e}: `{s}`")));
            rows.push(IterationRow {
                k: int(cols[0])?,
                cost: num(cols[1])?,
                grad_inf: num(cols[2])?,
                step: num(cols[3])?,
                backtracks: int(cols[4])?,
                eps_err: if cols[5].trim().is_empty() { None } else { Some(num(cols[5])?) },
            });
        }
        let reason = reason.ok_or((text.lines().count(), "missing `# reason=` line".to_string()))?;
        Ok(ConvergenceRecord { rows, reason })
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub f: NodalField,
    pub q: NodalField,
    pub heaviside: NodalField,
    /// `1 + H_alpha(q)` at the vertices.
    pub sigma: NodalField,
    /// Level-set adjoint at the final control.
    pub lambda: NodalField,
    pub cost: f64,
    pub eps_err: Option<f64>,
    pub record: ConvergenceRecord,
}

/// 1 on the closed disk of `radius` about `center`, 0 elsewhere.
pub fn initial_control(mesh: &TriMesh, radius: f64, center: [f64; 2]) -> Result<NodalField, Error> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("initial radius must be positive, got {radius}")));
    }
    if center[0].hypot(center[1]) + radius > 1.0 {
        return Err(Error::Config("initial circle must lie inside the unit disk".into()));
    }
    Ok(NodalField::from_fn(mesh, |p| {
        if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius {
            1.0
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T> {
    pub step: f64,
    pub backtracks: usize,
    pub f: NodalField,
    pub cost: f64,
    pub accepted: T,
}

/// Armijo backtracking along `-grad` starting at `s0`:
/// accept `J(f - s grad) <= J(f) - c s ||grad||_M^2`.
///
/// `evaluate` returns the cost of a trial control together with whatever the
/// caller wants to keep for the accepted one.
pub fn line_search<T>(
    f: &NodalField,
    grad: &NodalField,
    cost: f64,
    grad_norm_sq: f64,
    s0: f64,
    params: &LineSearchParams,
    mut evaluate: impl FnMut(&NodalField) -> Result<(f64, T), Error>,
) -> Result<LineSearchOutcome<T>, Error> {
    if grad.max_abs() == 0.0 || grad_norm_sq <= 0.0 {
        return Err(Error::ZeroGradient);
    }
    let mut s = s0;
    for backtracks in 0..=params.max_backtracks {
        let trial = NodalField::from_vec(f.iter().zip(grad.iter()).map(|(a, g)| a - s * g).collect());
        let (value, keep) = evaluate(&trial)?;
        if value <= cost - params.armijo_c * s * grad_norm_sq && value < cost {
            return Ok(LineSearchOutcome {
                step: s,
                backtracks,
                f: trial,
                cost: value,
                accepted: keep,
            });
        }
        s *= params.shrink;
    }
    Err(Error::LineSearchFailed(params.max_backtracks))
}

/// `||chi_D - H||_{L2} / sqrt(|D|)` with `H` the piecewise linear interpolant
/// of the nodal field and `chi_D` evaluated pointwise on a refined quadrature.
pub fn reconstruction_error(h_field: &[f64], truth: &ShapeSpec, mesh: &TriMesh) -> Result<f64, Error> {
    relative_error(mesh, h_field, truth, |h| h)
}

/// As [`reconstruction_error`] but with `H_alpha` applied to the interpolated
/// `q` at every quadrature point, so the recovered interface can cut through
/// elements the way it does in the conductivity.
pub fn reconstruction_error_of_q(q: &[f64], alpha: f64, truth: &ShapeSpec, mesh: &TriMesh) -> Result<f64, Error> {
    relative_error(mesh, q, truth, |v| heaviside_alpha(v, alpha))
}

fn relative_error(mesh: &TriMesh, field: &[f64], truth: &ShapeSpec, map: impl Fn(f64) -> f64) -> Result<f64, Error> {
    truth.validate()?;
    let area = truth.area();
    if !(area > 0.0) {
        return Err(Error::Config("truth shape has zero area".into()));
    }
    if field.len() != mesh.num_vertices() {
        return Err(crate::error::FemError::DimensionMismatch {
            expected: mesh.num_vertices(),
            found: field.len(),
        }
        .into());
    }
    Ok(l2_misfit(mesh, field, map, |x| truth.chi(x)).sqrt() / area.sqrt())
}

const ERROR_SUBDIVISIONS: usize = 4;

/// `int (chi(x) - map(u(x)))^2 dx` for the P1 function `u`, on `n^2` congruent
/// sub-triangles per element with the edge-midpoint rule on each.
fn l2_misfit(mesh: &TriMesh, u: &[f64], map: impl Fn(f64) -> f64, chi: impl Fn([f64; 2]) -> f64) -> f64 {
    let n = ERROR_SUBDIVISIONS;
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let vals = [u[tri[0]], u[tri[1]], u[tri[2]]];
        let sub_area = mesh.triangle_area(t) * inv * inv;
        let mut sum = 0.0;
        let mut visit = |bary: [[f64; 2]; 3]| {
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let l1 = 0.5 * (bary[a][0] + bary[b][0]);
                let l2 = 0.5 * (bary[a][1] + bary[b][1]);
                let l0 = 1.0 - l1 - l2;
                let x = [
                    l0 * pts[0][0] + l1 * pts[1][0] + l2 * pts[2][0],
                    l0 * pts[0][1] + l1 * pts[1][1] + l2 * pts[2][1],
                ];
                let d = chi(x) - map(l0 * vals[0] + l1 * vals[1] + l2 * vals[2]);
                sum += d * d;
            }
        };
        for i in 0..n {
            for j in 0..n - i {
                let (a, b) = (i as f64 * inv, j as f64 * inv);
                visit([[a, b], [a + inv, b], [a, b + inv]]);
                if i + j + 1 < n {
                    visit([[a + inv, b], [a + inv, b + inv], [a, b + inv]]);
                }
            }
        }
        total += sum * sub_area / 3.0;
    }
    total
}

/// What an observer sees at each evaluated iterate.
pub struct IterationView<'a> {
    pub row: &'a IterationRow,
    pub state: &'a ControlState,
    pub bundle: &'a AdjointBundle,
}

pub fn reconstruct(
    config: &ReconstructionConfig,
    mesh: &TriMesh,
    patterns: &[CurrentPattern],
    measurements: &[BoundaryData],
    f0: &NodalField,
    truth: Option<&ShapeSpec>,
) -> Result<ReconstructionResult, Error> {
    reconstruct_with(config, mesh, patterns, measurements, f0, truth, |_| {})
}

pub fn reconstruct_with(
    config: &ReconstructionConfig,
    mesh: &TriMesh,
    patterns: &[CurrentPattern],
    measurements: &[BoundaryData],
    f0: &NodalField,
    truth: Option<&ShapeSpec>,
    mut observer: impl FnMut(&IterationView<'_>),
) -> Result<ReconstructionResult, Error> {
    config.validate()?;
    let problem = ControlProblem::new(mesh, patterns, measurements, config.smoothing()?, config.solver)?;
    let mass = problem.levelset().mass();
    let tol = config.tolerance();
    let error_of = |state: &ControlState| -> Result<Option<f64>, Error> {
        truth
            .map(|t| reconstruction_error(&heaviside_field(&state.q, config.alpha), t, mesh))
            .transpose()
    };

    let mut state = problem.evaluate(f0)?;
    let mut last_bundle: Option<AdjointBundle> = None;
    let mut rows = Vec::new();
    let mut last_step: Option<f64> = None;
    let reason = loop {
        let k = rows.len();
        let bundle = problem.gradient(&state)?;
        bundle.ensure_matches(&state)?;
        let grad_inf = bundle.grad.max_abs();
        let mut row = IterationRow {
            k,
            cost: state.cost,
            grad_inf,
            step: 0.0,
            backtracks: 0,
            eps_err: error_of(&state)?,
        };
        if grad_inf < tol {
            rows.push(row);
            observer(&IterationView { row: &row, state: &state, bundle: &bundle });
            last_bundle = Some(bundle);
            break TerminationReason::Converged;
        }
        let s0 = match last_step {
            Some(s) => config.line_search.growth * s,
            None => (0.1 * f0.max_abs() + 0.01) / grad_inf,
        };
        let grad_norm_sq = mass.bilinear(&bundle.grad, &bundle.grad);
        let outcome = line_search(&state.f, &bundle.grad, state.cost, grad_norm_sq, s0, &config.line_search, |trial| {
            let s = problem.evaluate(trial)?;
            Ok((s.cost, s))
        });
        match outcome {
            Ok(out) => {
                row.step = out.step;
                row.backtracks = out.backtracks;
                rows.push(row);
                observer(&IterationView { row: &row, state: &state, bundle: &bundle });
                last_step = Some(out.step);
                state = out.accepted;
                if rows.len() == config.max_iters {
                    break TerminationReason::MaxIters;
                }
            }
            Err(Error::LineSearchFailed(n)) => {
                row.backtracks = n;
                rows.push(row);
                observer(&IterationView { row: &row, state: &state, bundle: &bundle });
                last_bundle = Some(bundle);
                break TerminationReason::LineSearchFailed;
            }
            Err(e) => return Err(e),
        }
    };

    let bundle = match last_bundle {
        Some(b) => b,
        None => problem.gradient(&state)?,
    };
    bundle.ensure_matches(&state)?;
    let heaviside = heaviside_field(&state.q, config.alpha);
    let sigma = heaviside.map(|h| 1.0 + h);
    Ok(ReconstructionResult {
        lambda: bundle.lambda,
        eps_err: error_of(&state)?,
        cost: state.cost,
        f: state.f,
        q: state.q,
        heaviside,
        sigma,
        record: ConvergenceRecord { rows, reason },
    })
}
