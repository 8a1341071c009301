//! Analytic inclusion shapes: ellipses and unions of disjoint circles.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::ShapeError;

/// Tolerance used when deciding whether a point lies on an interface curve.
pub const ON_CURVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// The inclusion `D` with conductivity 2 inside a background of conductivity 1.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        /// Counterclockwise rotation of the first semi-axis, radians.
        rotation: f64,
    },
    Circles(Vec<Circle>),
}

/// Where a point sits relative to a shape boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    On,
    Outside,
}

impl ShapeSpec {
    /// Default ellipse phantom: centered, semi-axes 0.4 and 0.2.
    pub fn default_ellipse() -> Self {
        ShapeSpec::Ellipse {
            center: [0.0, 0.0],
            semi_axes: [0.4, 0.2],
            rotation: 0.0,
        }
    }

    /// Default two-circle phantom with different diameters.
    pub fn default_circles() -> Self {
        ShapeSpec::Circles(vec![
            Circle {
                center: [-0.3, 0.3],
                radius: 0.25,
            },
            Circle {
                center: [0.35, -0.25],
                radius: 0.15,
            },
        ])
    }

    /// Checks positivity, strict containment in the unit disk and (for circles)
    /// pairwise disjointness.
    pub fn validate(&self) -> Result<(), ShapeError> {
        match self {
            ShapeSpec::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let all_finite = center.iter().chain(semi_axes).all(|v| v.is_finite())
                    && rotation.is_finite();
                if !all_finite || semi_axes[0] <= 0.0 || semi_axes[1] <= 0.0 {
                    return Err(ShapeError::Degenerate);
                }
                // The farthest point of the ellipse from the origin, sampled densely.
                let reach = (0..4096)
                    .map(|k| {
                        let p = self.ellipse_point(2.0 * PI * k as f64 / 4096.0);
                        norm(p)
                    })
                    .fold(0.0, f64::max);
                let bound = norm(*center) + semi_axes[0].max(semi_axes[1]);
                if reach >= 1.0 || (bound >= 1.0 && reach > 1.0 - 1e-6) {
                    return Err(ShapeError::OutsideDomain);
                }
            }
            ShapeSpec::Circles(circles) => {
                if circles.is_empty() {
                    return Err(ShapeError::Degenerate);
                }
                for c in circles {
                    if !(c.radius > 0.0) || !c.center.iter().all(|v| v.is_finite()) {
                        return Err(ShapeError::Degenerate);
                    }
                    if norm(c.center) + c.radius >= 1.0 {
                        return Err(ShapeError::OutsideDomain);
                    }
                }
                for (i, a) in circles.iter().enumerate() {
                    for b in &circles[i + 1..] {
                        if dist(a.center, b.center) <= a.radius + b.radius {
                            return Err(ShapeError::Overlapping);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Signed level value: negative inside, zero on the boundary, positive outside.
    ///
    /// For circles this is the exact signed distance; for the ellipse it is the
    /// normalized implicit form `(x/a)^2 + (y/b)^2 - 1` in the body frame.
    pub fn level(&self, x: [f64; 2]) -> f64 {
        match self {
            ShapeSpec::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let (s, c) = rotation.sin_cos();
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / semi_axes[0]).powi(2) + (v / semi_axes[1]).powi(2) - 1.0
            }
            ShapeSpec::Circles(circles) => circles
                .iter()
                .map(|c| dist(x, c.center) - c.radius)
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn side(&self, x: [f64; 2]) -> Side {
        let l = self.level(x);
        if l < -ON_CURVE_TOL {
            Side::Inside
        } else if l > ON_CURVE_TOL {
            Side::Outside
        } else {
            Side::On
        }
    }

    /// Characteristic function of the closed shape, restricted to the unit disk.
    pub fn chi(&self, x: [f64; 2]) -> f64 {
        if norm(x) > 1.0 {
            return 0.0;
        }
        if self.level(x) <= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            ShapeSpec::Ellipse { semi_axes, .. } => PI * semi_axes[0] * semi_axes[1],
            ShapeSpec::Circles(circles) => circles.iter().map(|c| PI * c.radius * c.radius).sum(),
        }
    }

    fn ellipse_point(&self, t: f64) -> [f64; 2] {
        match self {
            ShapeSpec::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let (s, c) = rotation.sin_cos();
                let u = semi_axes[0] * t.cos();
                let v = semi_axes[1] * t.sin();
                [center[0] + c * u - s * v, center[1] + s * u + c * v]
            }
            ShapeSpec::Circles(_) => unreachable!("ellipse_point on circles"),
        }
    }

    /// Closed interface curves sampled with arc-length spacing close to `spacing`.
    /// Every returned point lies on the analytic curve; each loop is
    /// counterclockwise and implicitly closed.
    pub fn interface_loops(&self, spacing: f64) -> Vec<Vec<[f64; 2]>> {
        match self {
            ShapeSpec::Ellipse { .. } => {
                const FINE: usize = 4096;
                let mut cumulative = Vec::with_capacity(FINE + 1);
                cumulative.push(0.0);
                let mut prev = self.ellipse_point(0.0);
                for k in 1..=FINE {
                    let p = self.ellipse_point(2.0 * PI * k as f64 / FINE as f64);
                    let last = *cumulative.last().unwrap();
                    cumulative.push(last + dist(prev, p));
                    prev = p;
                }
                let length = cumulative[FINE];
                let n = ((length / spacing).ceil() as usize).max(12);
                let mut loop_pts = Vec::with_capacity(n);
                let mut seg = 0;
                for i in 0..n {
                    let target = length * i as f64 / n as f64;
                    while cumulative[seg + 1] < target {
                        seg += 1;
                    }
                    let span = cumulative[seg + 1] - cumulative[seg];
                    let frac = if span > 0.0 {
                        (target - cumulative[seg]) / span
                    } else {
                        0.0
                    };
                    let t = 2.0 * PI * (seg as f64 + frac) / FINE as f64;
                    loop_pts.push(self.ellipse_point(t));
                }
                vec![loop_pts]
            }
            ShapeSpec::Circles(circles) => circles
                .iter()
                .map(|c| {
                    let n = ((2.0 * PI * c.radius / spacing).ceil() as usize).max(8);
                    (0..n)
                        .map(|i| {
                            let t = 2.0 * PI * i as f64 / n as f64;
                            [c.center[0] + c.radius * t.cos(), c.center[1] + c.radius * t.sin()]
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Approximate Euclidean distance from `x` to the shape boundary.
    pub fn distance_to_boundary(&self, x: [f64; 2]) -> f64 {
        match self {
            ShapeSpec::Circles(circles) => circles
                .iter()
                .map(|c| (dist(x, c.center) - c.radius).abs())
                .fold(f64::INFINITY, f64::min),
            ShapeSpec::Ellipse { .. } => {
                // Coarse scan then local refinement on the parameter.
                const COARSE: usize = 720;
                let mut best_t = 0.0;
                let mut best = f64::INFINITY;
                for k in 0..COARSE {
                    let t = 2.0 * PI * k as f64 / COARSE as f64;
                    let d = dist(x, self.ellipse_point(t));
                    if d < best {
                        best = d;
                        best_t = t;
                    }
                }
                let mut step = 2.0 * PI / COARSE as f64;
                for _ in 0..40 {
                    for t in [best_t - step, best_t + step] {
                        let d = dist(x, self.ellipse_point(t));
                        if d < best {
                            best = d;
                            best_t = t;
                        }
                    }
                    step *= 0.5;
                }
                best
            }
        }
    }
}

impl fmt::Display for ShapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeSpec::Ellipse {
                center,
                semi_axes,
                rotation,
            } => write!(
                f,
                "ellipse {} {} {} {} {}",
                center[0], center[1], semi_axes[0], semi_axes[1], rotation
            ),
            ShapeSpec::Circles(circles) => {
                write!(f, "circles")?;
                for c in circles {
                    write!(f, " {} {} {}", c.center[0], c.center[1], c.radius)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for ShapeSpec {
    type Err = ShapeError;

    /// Parses `ellipse cx cy ax ay rot` or `circles cx1 cy1 r1 cx2 cy2 r2 ...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut tokens = s.split_whitespace();
        let kind = tokens
            .next()
            .ok_or_else(|| ShapeError::Parse("empty shape description".into()))?;
        let nums = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| ShapeError::Parse(format!("not a number: {t:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let shape = match kind {
            "ellipse" => {
                if nums.len() != 5 {
                    return Err(ShapeError::Parse(format!(
                        "ellipse expects 5 numbers (cx cy ax ay rot), got {}",
                        nums.len()
                    )));
                }
                ShapeSpec::Ellipse {
                    center: [nums[0], nums[1]],
                    semi_axes: [nums[2], nums[3]],
                    rotation: nums[4],
                }
            }
            "circles" | "circle" => {
                if nums.is_empty() || nums.len() % 3 != 0 {
                    return Err(ShapeError::Parse(format!(
                        "circles expects triples (cx cy r), got {} numbers",
                        nums.len()
                    )));
                }
                ShapeSpec::Circles(
                    nums.chunks(3)
                        .map(|c| Circle {
                            center: [c[0], c[1]],
                            radius: c[2],
                        })
                        .collect(),
                )
            }
            other => return Err(ShapeError::Parse(format!("unknown shape kind {other:?}"))),
        };
        shape.validate()?;
        Ok(shape)
    }
}

pub(crate) fn norm(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
