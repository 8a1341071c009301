//! Smoothed Heaviside parametrization `sigma = 1 + H_alpha(q)` and the
//! auxiliary problem `-gamma Lap q + q = f`, `q = 0` on the boundary.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, FemError};
use crate::fem::{Coefficient, CsrMatrix, DirichletSolver, NodalField, P1Space, SolverOptions, EDGE_MIDPOINT_RULE};
use crate::mesh::TriMesh;

pub use crate::shape::ShapeSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    pub alpha: f64,
    pub gamma: f64,
    pub rule: SigmaRule,
}

impl SmoothingParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self, Error> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(SmoothingParams {
            alpha,
            gamma,
            rule: SigmaRule::default(),
        })
    }

    pub fn with_rule(self, rule: SigmaRule) -> Self {
        SmoothingParams { rule, ..self }
    }
}

/// How `H_alpha(q)` is averaged over a triangle before it enters the stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaRule {
    /// Edge-midpoint rule on the interpolated `q`.
    #[default]
    EdgeMidpoint,
    /// Exact element mean of `H_alpha` of the linear `q`. Unlike the
    /// three-point rule it stays differentiable, with a non-zero derivative,
    /// on every triangle the band crosses, however steep `q` is.
    ExactMean,
}

impl fmt::Display for SigmaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaRule::EdgeMidpoint => "midpoint",
            SigmaRule::ExactMean => "exact",
        })
    }
}

impl FromStr for SigmaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "midpoint" => Ok(SigmaRule::EdgeMidpoint),
            "exact" => Ok(SigmaRule::ExactMean),
            other => Err(format!("unknown sigma rule `{other}` (expected midpoint or exact)")),
        }
    }
}

/// One-sided smoothed step: 0 below 0, 1 above `alpha`, cosine ramp between.
pub fn heaviside_alpha(q: f64, alpha: f64) -> f64 {
    if q < 0.0 {
        0.0
    } else if q < alpha {
        0.5 - 0.5 * (PI * q / alpha).cos()
    } else {
        1.0
    }
}

/// Derivative of [`heaviside_alpha`], supported on `[0, alpha)`.
pub fn delta_alpha(q: f64, alpha: f64) -> f64 {
    if (0.0..alpha).contains(&q) {
        PI / (2.0 * alpha) * (PI * q / alpha).sin()
    } else {
        0.0
    }
}

/// Characteristic function of a shape (closed set), zero outside the unit disk.
pub fn chi_shape(shape: &ShapeSpec, x: [f64; 2]) -> f64 {
    shape.chi(x)
}

/// Nodal `H_alpha(q)`.
pub fn heaviside_field(q: &NodalField, alpha: f64) -> NodalField {
    q.map(|v| heaviside_alpha(v, alpha))
}

/// `sigma = 1 + H_alpha(q)` tabulated at the quadrature points, with `q`
/// interpolated linearly inside each triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaField {
    alpha: f64,
    rule: SigmaRule,
    q: Vec<[f64; 3]>,
    sigma: Vec<[f64; 3]>,
    band: Vec<[f64; 3]>,
}

impl SigmaField {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rule(&self) -> SigmaRule {
        self.rule
    }

    /// Interpolated level set at each quadrature point.
    pub fn q_at_quad(&self) -> &[[f64; 3]] {
        &self.q
    }

    /// For [`SigmaRule::ExactMean`] all three entries hold the element mean.
    pub fn values(&self) -> &[[f64; 3]] {
        &self.sigma
    }

    /// `delta_alpha(q)` at each quadrature point.
    pub fn delta_at_quad(&self) -> Vec<[f64; 3]> {
        self.q.iter().map(|qs| qs.map(|v| delta_alpha(v, self.alpha))).collect()
    }

    /// Derivative of the element-averaged sigma with respect to the nodal
    /// `q` of each local vertex.
    pub fn band_weights(&self) -> &[[f64; 3]] {
        &self.band
    }
}

impl Coefficient for SigmaField {
    fn value(&self, triangle: usize, point: usize, _: [f64; 2]) -> f64 {
        self.sigma[triangle][point]
    }
}

pub fn sigma_of_q(space: &P1Space<'_>, q: &[f64], alpha: f64) -> SigmaField {
    sigma_of_q_with(space, q, alpha, SigmaRule::EdgeMidpoint)
}

pub fn sigma_of_q_with(space: &P1Space<'_>, q: &[f64], alpha: f64, rule: SigmaRule) -> SigmaField {
    let at_quad = space.interpolate_at_quad(q);
    let (sigma, band) = match rule {
        SigmaRule::EdgeMidpoint => {
            let sigma = at_quad.iter().map(|qs| qs.map(|v| 1.0 + heaviside_alpha(v, alpha))).collect();
            let band = at_quad
                .iter()
                .map(|qs| {
                    let mut w = [0.0; 3];
                    for (p, &v) in qs.iter().enumerate() {
                        let d = EDGE_MIDPOINT_RULE.weights[p] * delta_alpha(v, alpha);
                        for (a, wa) in w.iter_mut().enumerate() {
                            *wa += d * EDGE_MIDPOINT_RULE.points[p][a];
                        }
                    }
                    w
                })
                .collect();
            (sigma, band)
        }
        SigmaRule::ExactMean => space
            .mesh()
            .triangles()
            .iter()
            .map(|tri| {
                let (mean, d) = heaviside_cell_mean(tri.map(|v| q[v]), alpha);
                ([1.0 + mean; 3], d)
            })
            .unzip(),
    };
    SigmaField {
        alpha,
        rule,
        q: at_quad,
        sigma,
        band,
    }
}

const GAUSS_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// Mean of `H_alpha(q)` over a triangle on which `q` is linear with vertex
/// values `qv`, and its derivatives with respect to `qv`.
///
/// With sorted values `a <= b <= c` the values of `q` over the triangle have a
/// piecewise linear density on `[a, c]` with its peak at `b`, and the mean of
/// a hat function over the level line `q = s` is its value at the midpoint of
/// that segment, so both reduce to one-dimensional integrals in `s`.
pub fn heaviside_cell_mean(qv: [f64; 3], alpha: f64) -> (f64, [f64; 3]) {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| qv[i].total_cmp(&qv[j]));
    let (a, b, c) = (qv[idx[0]], qv[idx[1]], qv[idx[2]]);
    if c <= 0.0 {
        return (0.0, [0.0; 3]);
    }
    if a >= alpha {
        return (1.0, [0.0; 3]);
    }
    if a == c {
        return (heaviside_alpha(a, alpha), [delta_alpha(a, alpha) / 3.0; 3]);
    }
    let cdf = |s: f64| {
        if s <= a {
            0.0
        } else if s >= c {
            1.0
        } else if s <= b {
            (s - a) * (s - a) / ((c - a) * (b - a))
        } else {
            1.0 - (c - s) * (c - s) / ((c - a) * (c - b))
        }
    };
    let mut mean = 1.0 - cdf(alpha);
    let mut sorted_d = [0.0; 3];
    let mut cuts = [a, b, c, 0.0, alpha];
    cuts.sort_by(f64::total_cmp);
    let (lo, hi) = (a.max(0.0), c.min(alpha));
    for w in cuts.windows(2) {
        let (s0, s1) = (w[0].max(lo), w[1].min(hi));
        if s1 <= s0 {
            continue;
        }
        let lower = 0.5 * (s0 + s1) < b;
        let half = 0.5 * (s1 - s0);
        for &(x, wt) in &GAUSS_8 {
            let s = 0.5 * (s0 + s1) + half * x;
            let t = (s - a) / (c - a);
            let (rho, mid) = if lower {
                let r = (s - a) / (b - a);
                (2.0 * r / (c - a), [1.0 - 0.5 * t - 0.5 * r, 0.5 * r, 0.5 * t])
            } else {
                let r = (s - b) / (c - b);
                (2.0 * (1.0 - r) / (c - a), [0.5 * (1.0 - t), 0.5 * (1.0 - r), 0.5 * (t + r)])
            };
            let weight = wt * half * rho;
            mean += weight * heaviside_alpha(s, alpha);
            let d = weight * delta_alpha(s, alpha);
            for k in 0..3 {
                sorted_d[k] += d * mid[k];
            }
        }
    }
    let mut d = [0.0; 3];
    for k in 0..3 {
        d[idx[k]] = sorted_d[k];
    }
    (mean, d)
}

/// Factored `gamma K + M` with the boundary eliminated. The same factor
/// serves the level-set solve and its adjoint (the form is symmetric).
#[derive(Debug, Clone)]
pub struct LevelSetOperator {
    gamma: f64,
    matrix: CsrMatrix,
    mass: CsrMatrix,
    solver: DirichletSolver,
}

impl LevelSetOperator {
    pub fn new(space: &P1Space<'_>, gamma: f64, opts: SolverOptions) -> Result<Self, Error> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        let mass = space.mass();
        let matrix = space.stiffness(&gamma)?.add_scaled_same_pattern(1.0, &mass);
        let solver = DirichletSolver::new(&matrix, space.mesh().boundary_flags(), opts)?;
        Ok(LevelSetOperator {
            gamma,
            matrix,
            mass,
            solver,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The assembled operator before boundary elimination.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Level set for control `f` (load `M f`).
    pub fn solve(&self, f: &[f64]) -> Result<NodalField, FemError> {
        self.solver.solve(&self.mass.mul_vec(f))
    }

    /// Solve with an already assembled nodal load.
    pub fn solve_load(&self, load: &[f64]) -> Result<NodalField, FemError> {
        self.solver.solve(load)
    }
}

pub fn solve_level_set(f: &NodalField, gamma: f64, mesh: &TriMesh) -> Result<NodalField, Error> {
    let space = P1Space::new(mesh)?;
    Ok(LevelSetOperator::new(&space, gamma, SolverOptions::default())?.solve(f)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::dirichlet_seminorm;
    use crate::mesh::generate_disk_mesh;
    use proptest::prelude::*;

    #[test]
    fn heaviside_and_delta_values() {
        assert_eq!(heaviside_alpha(-0.3, 0.01), 0.0);
        assert!((heaviside_alpha(0.005, 0.01) - 0.5).abs() < 1e-15);
        assert_eq!(heaviside_alpha(0.02, 0.01), 1.0);
        assert_eq!(heaviside_alpha(0.01, 0.01), 1.0);
        assert_eq!(delta_alpha(-0.01, 0.01), 0.0);
        assert!((delta_alpha(0.005, 0.01) - 157.079_632_679_489_66).abs() < 1e-10);
        assert_eq!(delta_alpha(0.01, 0.01), 0.0);
    }

    #[test]
    fn delta_integrates_to_one() {
        for alpha in [0.005, 0.01, 0.05] {
            // Composite Simpson on [0, alpha].
            let n = 2000;
            let h = alpha / n as f64;
            let mut s = delta_alpha(0.0, alpha) + delta_alpha(alpha - 1e-300, alpha);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * delta_alpha(i as f64 * h, alpha);
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-10, "alpha {alpha}");
        }
    }

    #[test]
    fn delta_is_derivative_of_heaviside() {
        for alpha in [0.005, 0.01, 0.05] {
            let dq = 1e-6 * alpha;
            for i in 0..1000 {
                // Cell-centred grid: the kinks at 0 and alpha are not sampled.
                let q = -alpha + 3.0 * alpha * (i as f64 + 0.5) / 1000.0;
                let fd = (heaviside_alpha(q + dq, alpha) - heaviside_alpha(q - dq, alpha)) / (2.0 * dq);
                assert!((fd - delta_alpha(q, alpha)).abs() < 1e-6, "alpha {alpha} q {q}");
            }
        }
    }

    proptest! {
        #[test]
        fn heaviside_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0, alpha in 1e-3f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(heaviside_alpha(lo, alpha) <= heaviside_alpha(hi, alpha));
            prop_assert!(delta_alpha(a, alpha) >= 0.0);
            let h = heaviside_alpha(a, alpha);
            prop_assert!((0.0..=1.0).contains(&h));
        }

        #[test]
        fn sigma_stays_in_range(seed in 0u64..1000) {
            let mesh = generate_disk_mesh(0.3).unwrap();
            let space = P1Space::new(&mesh).unwrap();
            let q: Vec<f64> = (0..mesh.num_vertices())
                .map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 25000.0 - 0.02)
                .collect();
            let s = sigma_of_q(&space, &q, 0.01);
            for v in s.values().iter().flatten() {
                prop_assert!((1.0..=2.0).contains(v));
            }
        }
    }

    #[test]
    fn sigma_constant_and_crossing() {
        let mesh = generate_disk_mesh(0.3).unwrap();
        let space = P1Space::new(&mesh).unwrap();
        let n = mesh.num_vertices();
        assert!(sigma_of_q(&space, &vec![-1.0; n], 0.01).values().iter().flatten().all(|&v| v == 1.0));
        assert!(sigma_of_q(&space, &vec![1.0; n], 0.01).values().iter().flatten().all(|&v| v == 2.0));

        let single = TriMesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], None).unwrap();
        let sp = P1Space::new(&single).unwrap();
        // Edge midpoints carry q = 0.005, 0.009, 0.002.
        let s = sigma_of_q(&sp, &[-0.002, 0.012, 0.006], 0.01);
        for v in s.values()[0] {
            assert!(v > 1.0 && v < 2.0, "{v}");
        }
    }

    fn brute_force_mean(qv: [f64; 3], alpha: f64, n: usize) -> f64 {
        // midpoints of an n x n split of the reference triangle
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..n {
            for j in 0..n - i {
                let mut visit = |l1: f64, l2: f64| {
                    let q = (1.0 - l1 - l2) * qv[0] + l1 * qv[1] + l2 * qv[2];
                    sum += heaviside_alpha(q, alpha);
                    count += 1;
                };
                let (x, y) = (i as f64, j as f64);
                visit((x + 1.0 / 3.0) / n as f64, (y + 1.0 / 3.0) / n as f64);
                if i + j + 1 < n {
                    visit((x + 2.0 / 3.0) / n as f64, (y + 2.0 / 3.0) / n as f64);
                }
            }
        }
        sum / count as f64
    }

    #[test]
    fn cell_mean_matches_fine_sampling() {
        let alpha = 0.01;
        for qv in [[-0.004, 0.013, 0.006], [0.002, 0.003, 0.0095], [-0.5, 0.7, 0.1], [0.004, 0.004, 0.02]] {
            let (mean, _) = heaviside_cell_mean(qv, alpha);
            let brute = brute_force_mean(qv, alpha, 600);
            assert!((mean - brute).abs() < 2e-4, "{qv:?}: {mean} vs {brute}");
        }
        assert_eq!(heaviside_cell_mean([-1.0, -0.5, 0.0], alpha), (0.0, [0.0; 3]));
        assert_eq!(heaviside_cell_mean([0.01, 0.5, 2.0], alpha), (1.0, [0.0; 3]));
        let (m, d) = heaviside_cell_mean([0.005; 3], alpha);
        assert!((m - 0.5).abs() < 1e-15);
        assert!((d[0] - delta_alpha(0.005, alpha) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cell_mean_of_a_wide_ramp_is_linear_average() {
        // q spans far more than the band: only the fraction above alpha and
        // the thin band matter, which is checked against the closed form cdf.
        let (m, _) = heaviside_cell_mean([-1.0, 1.0, 1.0], 1e-9);
        assert!((m - 0.75).abs() < 1e-8);
        let (m, _) = heaviside_cell_mean([-1.0, -1.0, 1.0], 1e-9);
        assert!((m - 0.25).abs() < 1e-8);
    }

    #[test]
    fn cell_mean_derivative_matches_finite_differences() {
        let alpha = 0.01;
        for qv in [[-0.004, 0.013, 0.006], [0.002, 0.003, 0.0095], [-0.05, 0.3, 0.001], [0.004, 0.0041, 0.02]] {
            let (_, d) = heaviside_cell_mean(qv, alpha);
            for k in 0..3 {
                let h = 1e-7;
                let mut p = qv;
                let mut m = qv;
                p[k] += h;
                m[k] -= h;
                let fd = (heaviside_cell_mean(p, alpha).0 - heaviside_cell_mean(m, alpha).0) / (2.0 * h);
                assert!((fd - d[k]).abs() < 1e-6 * (1.0 + d[k].abs()), "{qv:?} {k}: {fd} vs {}", d[k]);
            }
        }
    }

    proptest! {
        #[test]
        fn cell_mean_range_and_monotone(a in -0.02f64..0.03, b in -0.02f64..0.03, c in -0.02f64..0.03, bump in 0.0f64..0.01) {
            let (m, d) = heaviside_cell_mean([a, b, c], 0.01);
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!(d.iter().all(|&x| x >= 0.0));
            let (m2, _) = heaviside_cell_mean([a + bump, b, c], 0.01);
            prop_assert!(m2 >= m - 1e-15);
        }
    }

    #[test]
    fn exact_rule_stores_element_means() {
        let mesh = generate_disk_mesh(0.2).unwrap();
        let space = P1Space::new(&mesh).unwrap();
        let q: Vec<f64> = mesh.vertices().iter().map(|p| 0.02 * p[0]).collect();
        let s = sigma_of_q_with(&space, &q, 0.01, SigmaRule::ExactMean);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let (mean, d) = heaviside_cell_mean(tri.map(|v| q[v]), 0.01);
            assert_eq!(s.values()[t], [1.0 + mean; 3]);
            assert_eq!(s.band_weights()[t], d);
        }
        assert_eq!("exact".parse::<SigmaRule>().unwrap(), SigmaRule::ExactMean);
        assert_eq!(SigmaRule::EdgeMidpoint.to_string(), "midpoint");
    }

    #[test]
    fn chi_shape_conventions() {
        let ellipse = ShapeSpec::default_ellipse();
        assert_eq!(chi_shape(&ellipse, [0.0, 0.0]), 1.0);
        assert_eq!(chi_shape(&ellipse, [1.5, 0.0]), 0.0);
        let c: ShapeSpec = "circles 0.1 0.2 0.25".parse().unwrap();
        assert_eq!(chi_shape(&c, [0.35, 0.2]), 1.0);
    }

    #[test]
    fn level_set_zero_and_linear() {
        let mesh = generate_disk_mesh(0.1).unwrap();
        let space = P1Space::new(&mesh).unwrap();
        let op = LevelSetOperator::new(&space, 0.001, SolverOptions::default()).unwrap();
        assert!(op.solve(&vec![0.0; mesh.num_vertices()]).unwrap().iter().all(|&v| v == 0.0));
        let f1: Vec<f64> = mesh.vertices().iter().map(|p| p[0].sin() + 0.3).collect();
        let f2: Vec<f64> = mesh.vertices().iter().map(|p| p[1] * p[0]).collect();
        let combo: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| 2.0 * a - 0.7 * b).collect();
        let (q1, q2, q) = (op.solve(&f1).unwrap(), op.solve(&f2).unwrap(), op.solve(&combo).unwrap());
        for i in 0..q.len() {
            assert!((q[i] - (2.0 * q1[i] - 0.7 * q2[i])).abs() < 1e-10);
        }
        let direct = solve_level_set(&NodalField::new(&mesh, f1).unwrap(), 0.001, &mesh).unwrap();
        assert_eq!(direct, q1);
    }

    #[test]
    fn smoothing_reduces_gradient_norm() {
        let mesh = generate_disk_mesh(0.05).unwrap();
        let space = P1Space::new(&mesh).unwrap();
        let f: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| if (p[0] - 0.2).hypot(p[1]) <= 0.3 { 1.0 } else { -0.5 })
            .collect();
        let norms: Vec<f64> = [0.0005, 0.001, 0.005]
            .iter()
            .map(|&g| {
                let op = LevelSetOperator::new(&space, g, SolverOptions::default()).unwrap();
                dirichlet_seminorm(&space, &op.solve(&f).unwrap())
            })
            .collect();
        assert!(norms[1] <= norms[0] + 1e-12 && norms[2] <= norms[1] + 1e-12, "{norms:?}");
    }

    #[test]
    fn params_validation() {
        assert!(SmoothingParams::new(0.01, 0.001).is_ok());
        assert!(SmoothingParams::new(0.0, 0.001).is_err());
        assert!(SmoothingParams::new(0.01, -1.0).is_err());
    }
}
