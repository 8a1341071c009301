//! Triangular meshes of the unit disk.
//!
//! Meshes are generated internally (ring point sets, constrained Delaunay
//! triangulation and a few sweeps of Laplacian smoothing) or read from the
//! native text format and Gmsh MSH 2.2 ASCII files. Every [`TriMesh`] is
//! validated on construction: counterclockwise triangles, manifold edges and a
//! single closed boundary loop.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::error::MeshError;
use crate::shape::{dist, norm, ShapeSpec, Side};

/// A conforming P1 triangulation with an ordered boundary loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Boundary edges in loop order, oriented counterclockwise.
    boundary_edges: Vec<[usize; 2]>,
    /// Boundary vertices in counterclockwise order, starting at the smallest polar angle.
    boundary_cycle: Vec<usize>,
    on_boundary: Vec<bool>,
    interior_edge_count: usize,
}

/// File formats understood by [`read_mesh`] and [`write_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Native,
    Msh2,
}

impl TriMesh {
    /// Builds and validates a mesh. Clockwise triangles are reoriented. If
    /// `boundary_edges` is given it must match the topological boundary.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        boundary_edges: Option<Vec<[usize; 2]>>,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        let mut used = vec![false; nv];
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &i in tri.iter() {
                if i >= nv {
                    return Err(MeshError::InvalidIndex {
                        triangle: t,
                        index: i,
                    });
                }
                used[i] = true;
            }
            let a = signed_area(&vertices, *tri);
            let scale = edge_scale(&vertices, *tri);
            if !(a.abs() > 1e-14 * scale * scale) {
                return Err(MeshError::ZeroArea(t));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        if let Some(unused) = used.iter().position(|u| !u) {
            return Err(MeshError::UnusedVertex(unused));
        }

        // Count undirected edges; remember the orientation of the first use.
        let mut edges: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                let entry = edges.entry(key).or_insert((0, [a, b]));
                entry.0 += 1;
                if entry.0 > 2 {
                    return Err(MeshError::NonManifold(key.0, key.1));
                }
            }
        }
        let mut next = vec![usize::MAX; nv];
        let mut nb = 0;
        let mut interior_edge_count = 0;
        for &(count, [a, b]) in edges.values() {
            if count == 1 {
                if next[a] != usize::MAX {
                    return Err(MeshError::BoundaryNotSingleLoop);
                }
                next[a] = b;
                nb += 1;
            } else {
                interior_edge_count += 1;
            }
        }
        if nb == 0 {
            return Err(MeshError::NoBoundary);
        }
        let start = (0..nv)
            .filter(|&i| next[i] != usize::MAX)
            .min_by(|&i, &j| {
                polar_angle(vertices[i])
                    .total_cmp(&polar_angle(vertices[j]))
                    .then(i.cmp(&j))
            })
            .expect("boundary is non-empty");
        let mut cycle = Vec::with_capacity(nb);
        let mut v = start;
        loop {
            cycle.push(v);
            v = next[v];
            if v == usize::MAX || cycle.len() > nb {
                return Err(MeshError::BoundaryNotSingleLoop);
            }
            if v == start {
                break;
            }
        }
        if cycle.len() != nb {
            return Err(MeshError::BoundaryNotSingleLoop);
        }
        let ordered: Vec<[usize; 2]> = (0..nb).map(|k| [cycle[k], cycle[(k + 1) % nb]]).collect();

        if let Some(declared) = boundary_edges {
            let mut a: Vec<(usize, usize)> =
                declared.iter().map(|e| (e[0].min(e[1]), e[0].max(e[1]))).collect();
            let mut b: Vec<(usize, usize)> =
                ordered.iter().map(|e| (e[0].min(e[1]), e[0].max(e[1]))).collect();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(MeshError::BoundaryMismatch);
            }
        }

        let mut on_boundary = vec![false; nv];
        for &i in &cycle {
            on_boundary[i] = true;
        }
        Ok(TriMesh {
            vertices,
            triangles,
            boundary_edges: ordered,
            boundary_cycle: cycle,
            on_boundary,
            interior_edge_count,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn boundary_cycle(&self) -> &[usize] {
        &self.boundary_cycle
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        self.on_boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.on_boundary
    }

    /// Number of distinct edges.
    pub fn num_edges(&self) -> usize {
        self.interior_edge_count + self.boundary_edges.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |k| (tri[k], tri[(k + 1) % 3])))
            .map(|(a, b)| dist(self.vertices[a], self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for k in 0..3 {
                let o = p[k];
                let a = p[(k + 1) % 3];
                let b = p[(k + 2) % 3];
                let u = [a[0] - o[0], a[1] - o[1]];
                let v = [b[0] - o[0], b[1] - o[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (norm(u) * norm(v));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Classifies every triangle against `shape`; returns the first straddling triangle.
    pub fn check_conforming(&self, shape: &ShapeSpec) -> Result<(), MeshError> {
        for (t, tri) in self.triangles.iter().enumerate() {
            let mut inside = false;
            let mut outside = false;
            for &i in tri {
                match shape.side(self.vertices[i]) {
                    Side::Inside => inside = true,
                    Side::Outside => outside = true,
                    Side::On => {}
                }
            }
            if inside && outside {
                return Err(MeshError::NonConforming(t));
            }
        }
        Ok(())
    }
}

fn signed_area(v: &[[f64; 2]], tri: [usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|i| v[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_scale(v: &[[f64; 2]], tri: [usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|i| v[i]);
    dist(a, b).max(dist(b, c)).max(dist(c, a))
}

/// Polar angle mapped into `[0, 2pi)`.
pub fn polar_angle(p: [f64; 2]) -> f64 {
    let a = p[1].atan2(p[0]);
    if a < 0.0 {
        let w = a + TAU;
        if w >= TAU {
            0.0
        } else {
            w
        }
    } else {
        a
    }
}

// ---------------------------------------------------------------------------
// Generation

/// Triangulates the unit disk with edges close to `target_edge_length`.
pub fn generate_disk_mesh(target_edge_length: f64) -> Result<TriMesh, MeshError> {
    build_disk_mesh(target_edge_length, None)
}

/// Triangulates the unit disk so that the interface of `shape` is resolved by
/// mesh edges whose vertices lie on the analytic curve.
pub fn generate_disk_mesh_with_shape(
    target_edge_length: f64,
    shape: &ShapeSpec,
) -> Result<TriMesh, MeshError> {
    shape.validate()?;
    let mesh = build_disk_mesh(target_edge_length, Some(shape))?;
    mesh.check_conforming(shape)?;
    Ok(mesh)
}

const SMOOTHING_SWEEPS: usize = 4;

fn build_disk_mesh(h: f64, shape: Option<&ShapeSpec>) -> Result<TriMesh, MeshError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(MeshError::InvalidEdgeLength(h));
    }
    let rings = (1.0 / h).ceil() as usize;
    let dr = 1.0 / rings as f64;

    // Fixed points: the outer circle and, for shapes, the interface curves.
    let nb = 6 * rings;
    let mut points: Vec<[f64; 2]> = (0..nb)
        .map(|i| {
            let t = TAU * i as f64 / nb as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    let mut constraints = Vec::new();
    if let Some(shape) = shape {
        for lp in shape.interface_loops(h) {
            let base = points.len();
            let n = lp.len();
            points.extend(lp);
            constraints.extend((0..n).map(|k| (base + k, base + (k + 1) % n)));
        }
    }
    let num_fixed = points.len();

    let keep = |p: [f64; 2]| match shape {
        Some(s) => s.distance_to_boundary(p) >= 0.6 * h,
        None => true,
    };
    if keep([0.0, 0.0]) {
        points.push([0.0, 0.0]);
    }
    for k in 1..rings {
        let r = k as f64 * dr;
        let n = 6 * k;
        // Hexagonal lattice near the centre, bent onto circles towards the rim.
        let w = r.cbrt();
        let corner = |s: usize| {
            let t = s as f64 * PI / 3.0;
            [r * t.cos(), r * t.sin()]
        };
        for i in 0..n {
            let t = TAU * i as f64 / n as f64;
            let (c0, c1) = (corner(i / k), corner(i / k + 1));
            let a = (i % k) as f64 / k as f64;
            let p = [
                (1.0 - w) * ((1.0 - a) * c0[0] + a * c1[0]) + w * r * t.cos(),
                (1.0 - w) * ((1.0 - a) * c0[1] + a * c1[1]) + w * r * t.sin(),
            ];
            if keep(p) {
                points.push(p);
            }
        }
    }

    let mut triangles = triangulate(&points, &constraints)?;
    let sweeps = if shape.is_some() { SMOOTHING_SWEEPS } else { 0 };
    for _ in 0..sweeps {
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
        for tri in &triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        let mut moved = points.clone();
        for i in num_fixed..points.len() {
            let nbrs = &mut neighbors[i];
            nbrs.sort_unstable();
            nbrs.dedup();
            if nbrs.is_empty() {
                continue;
            }
            let inv = 1.0 / nbrs.len() as f64;
            let c = nbrs.iter().fold([0.0, 0.0], |acc, &j| {
                [acc[0] + points[j][0] * inv, acc[1] + points[j][1] * inv]
            });
            let admissible = norm(c) <= 1.0 - 0.4 * dr
                && match shape {
                    Some(s) => s.side(c) == s.side(points[i]) && s.distance_to_boundary(c) >= 0.5 * h,
                    None => true,
                };
            if admissible {
                moved[i] = c;
            }
        }
        points = moved;
        triangles = triangulate(&points, &constraints)?;
    }
    TriMesh::from_parts(points, triangles, None)
}

fn triangulate(points: &[[f64; 2]], constraints: &[(usize, usize)]) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    for (i, p) in points.iter().enumerate() {
        let handle = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
        if handle.index() != i {
            return Err(MeshError::Triangulation(format!("duplicate point {i}: {p:?}")));
        }
    }
    let handles: Vec<_> = cdt.fixed_vertices().collect();
    for &(a, b) in constraints {
        if !cdt.can_add_constraint(handles[a], handles[b]) {
            return Err(MeshError::Triangulation(format!(
                "interface edge ({a}, {b}) intersects another constraint"
            )));
        }
        cdt.add_constraint(handles[a], handles[b]);
    }
    Ok(cdt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.fix().index()))
        .collect())
}

// ---------------------------------------------------------------------------
// Boundary parametrization

/// Angle-based parametrization of the boundary loop.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryParam {
    /// Mesh vertex index for each boundary position (same order as the loop).
    pub vertices: Vec<usize>,
    /// Polar angle in `[0, 2pi)` per boundary position.
    pub angles: Vec<f64>,
    /// `edge_lengths[k]` is the chord from position `k` to `k + 1` (wrapping).
    pub edge_lengths: Vec<f64>,
    /// Half the sum of the two incident edge lengths.
    pub vertex_weights: Vec<f64>,
}

impl BoundaryParam {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }

    /// Lumped boundary weights scattered to a full nodal vector (zero inside).
    pub fn nodal_weights(&self, num_vertices: usize) -> Vec<f64> {
        let mut w = vec![0.0; num_vertices];
        for (&v, &wt) in self.vertices.iter().zip(&self.vertex_weights) {
            w[v] = wt;
        }
        w
    }

    /// Weighted mean of a loop-ordered vector.
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        let total: f64 = self.vertex_weights.iter().sum();
        values
            .iter()
            .zip(&self.vertex_weights)
            .map(|(v, w)| v * w)
            .sum::<f64>()
            / total
    }

    /// Applies the P1 boundary mass matrix to a loop-ordered vector.
    pub fn mass_apply(&self, values: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for k in 0..n {
            let l = self.edge_lengths[k];
            let a = values[k];
            let b = values[(k + 1) % n];
            out[k] += l / 6.0 * (2.0 * a + b);
            out[(k + 1) % n] += l / 6.0 * (a + 2.0 * b);
        }
        out
    }

    /// Squared L2(boundary) norm with the P1 boundary mass.
    pub fn norm_sq(&self, values: &[f64]) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| {
                let a = values[k];
                let b = values[(k + 1) % n];
                self.edge_lengths[k] / 3.0 * (a * a + a * b + b * b)
            })
            .sum()
    }
}

pub fn boundary_param(mesh: &TriMesh) -> Result<BoundaryParam, MeshError> {
    let cycle = mesh.boundary_cycle();
    if cycle.is_empty() {
        return Err(MeshError::NoBoundary);
    }
    let n = cycle.len();
    let v = mesh.vertices();
    let angles = cycle.iter().map(|&i| polar_angle(v[i])).collect();
    let edge_lengths: Vec<f64> = (0..n).map(|k| dist(v[cycle[k]], v[cycle[(k + 1) % n]])).collect();
    let vertex_weights = (0..n)
        .map(|k| 0.5 * (edge_lengths[k] + edge_lengths[(k + n - 1) % n]))
        .collect();
    Ok(BoundaryParam {
        vertices: cycle.to_vec(),
        angles,
        edge_lengths,
        vertex_weights,
    })
}

// ---------------------------------------------------------------------------
// I/O

pub fn write_mesh(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    if path.as_os_str().is_empty() {
        return Err(MeshError::EmptyPath);
    }
    fs::write(path, to_native_string(mesh)).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Native text: `nv nt nb`, then vertex, triangle and boundary-edge lines.
pub fn to_native_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} {}",
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.boundary_edges().len()
    );
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:.16e} {:.16e}", p[0], p[1]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    for e in mesh.boundary_edges() {
        let _ = writeln!(s, "{} {}", e[0], e[1]);
    }
    s
}

pub fn read_mesh(path: &Path, format: MeshFormat) -> Result<TriMesh, MeshError> {
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        MeshFormat::Native => parse_native(&text),
        MeshFormat::Msh2 => parse_msh2(&text),
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_fields<T: std::str::FromStr>(line_no: usize, line: &str, count: usize) -> Result<Vec<T>, MeshError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != count {
        return Err(parse_err(
            line_no,
            format!("expected {count} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|_| parse_err(line_no, format!("cannot parse {f:?}"))))
        .collect()
}

pub fn parse_native(text: &str) -> Result<TriMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (no, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let counts: Vec<usize> = parse_fields(no, header, 3)?;
    let (nv, nt, nb) = (counts[0], counts[1], counts[2]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (no, l) = lines.next().ok_or_else(|| parse_err(no, "unexpected end of file in vertices"))?;
        let xy: Vec<f64> = parse_fields(no, l, 2)?;
        if !xy.iter().all(|v| v.is_finite()) {
            return Err(parse_err(no, "non-finite coordinate"));
        }
        vertices.push([xy[0], xy[1]]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (no, l) = lines.next().ok_or_else(|| parse_err(no, "unexpected end of file in triangles"))?;
        let ijk: Vec<usize> = parse_fields(no, l, 3)?;
        if let Some(bad) = ijk.iter().find(|&&i| i >= nv) {
            return Err(parse_err(no, format!("vertex index {bad} out of range (nv = {nv})")));
        }
        triangles.push([ijk[0], ijk[1], ijk[2]]);
    }
    let mut edges = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (no, l) = lines.next().ok_or_else(|| parse_err(no, "unexpected end of file in boundary edges"))?;
        let ij: Vec<usize> = parse_fields(no, l, 2)?;
        if let Some(bad) = ij.iter().find(|&&i| i >= nv) {
            return Err(parse_err(no, format!("vertex index {bad} out of range (nv = {nv})")));
        }
        edges.push([ij[0], ij[1]]);
    }
    if let Some((no, _)) = lines.next() {
        return Err(parse_err(no, "trailing content"));
    }
    TriMesh::from_parts(vertices, triangles, if nb > 0 { Some(edges) } else { None })
}

/// Reads the `$Nodes`/`$Elements` sections of a Gmsh MSH 2.2 ASCII file.
/// Element types 1 (line) and 2 (triangle) are used; type 15 (point) is
/// ignored; any other type is rejected. Nodes not referenced by a triangle are
/// dropped.
pub fn parse_msh2(text: &str) -> Result<TriMesh, MeshError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut nodes: HashMap<i64, [f64; 2]> = HashMap::new();
    let mut node_order: Vec<i64> = Vec::new();
    let mut tris_raw: Vec<(usize, [i64; 3])> = Vec::new();
    let mut lines_raw: Vec<(usize, [i64; 2])> = Vec::new();
    let mut i = 0;
    let mut saw_nodes = false;
    while i < lines.len() {
        let l = lines[i].trim();
        match l {
            "$MeshFormat" => {
                let no = i + 2;
                let fmt = lines.get(i + 1).ok_or_else(|| parse_err(no, "missing format line"))?;
                let f: Vec<&str> = fmt.split_whitespace().collect();
                if f.len() < 2 || !f[0].starts_with('2') {
                    return Err(parse_err(no, format!("unsupported MSH version line {fmt:?}")));
                }
                if f[1] != "0" {
                    return Err(parse_err(no, "binary MSH files are not supported"));
                }
                i += 2;
            }
            "$Nodes" => {
                saw_nodes = true;
                let no = i + 2;
                let n: usize = lines
                    .get(i + 1)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| parse_err(no, "bad node count"))?;
                for k in 0..n {
                    let no = i + 3 + k;
                    let line = lines.get(i + 2 + k).ok_or_else(|| parse_err(no, "unexpected end of $Nodes"))?;
                    let f: Vec<&str> = line.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(parse_err(no, "node line needs: tag x y z"));
                    }
                    let tag: i64 = f[0].parse().map_err(|_| parse_err(no, "bad node tag"))?;
                    let x: f64 = f[1].parse().map_err(|_| parse_err(no, "bad x"))?;
                    let y: f64 = f[2].parse().map_err(|_| parse_err(no, "bad y"))?;
                    if nodes.insert(tag, [x, y]).is_some() {
                        return Err(parse_err(no, format!("duplicate node tag {tag}")));
                    }
                    node_order.push(tag);
                }
                i += 2 + n;
            }
            "$Elements" => {
                let no = i + 2;
                let n: usize = lines
                    .get(i + 1)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| parse_err(no, "bad element count"))?;
                for k in 0..n {
                    let no = i + 3 + k;
                    let line = lines.get(i + 2 + k).ok_or_else(|| parse_err(no, "unexpected end of $Elements"))?;
                    let f: Vec<i64> = line
                        .split_whitespace()
                        .map(|s| s.parse::<i64>().map_err(|_| parse_err(no, format!("bad integer {s:?}"))))
                        .collect::<Result<_, _>>()?;
                    if f.len() < 3 {
                        return Err(parse_err(no, "element line too short"));
                    }
                    let etype = f[1];
                    let ntags = f[2] as usize;
                    let conn = f.get(3 + ntags..).unwrap_or(&[]);
                    match etype {
                        1 if conn.len() == 2 => lines_raw.push((no, [conn[0], conn[1]])),
                        2 if conn.len() == 3 => tris_raw.push((no, [conn[0], conn[1], conn[2]])),
                        15 => {}
                        1 | 2 => return Err(parse_err(no, "wrong node count for element")),
                        other => {
                            return Err(parse_err(no, format!("unsupported element type {other}")));
                        }
                    }
                }
                i += 2 + n;
            }
            _ => i += 1,
        }
    }
    if !saw_nodes {
        return Err(parse_err(lines.len().max(1), "missing $Nodes section"));
    }
    if tris_raw.is_empty() {
        return Err(parse_err(lines.len().max(1), "no triangle elements"));
    }
    let mut used: HashMap<i64, usize> = HashMap::new();
    for (no, t) in &tris_raw {
        for tag in t {
            if !nodes.contains_key(tag) {
                return Err(parse_err(*no, format!("unknown node tag {tag}")));
            }
            used.insert(*tag, 0);
        }
    }
    let mut vertices = Vec::with_capacity(used.len());
    for tag in &node_order {
        if let Some(idx) = used.get_mut(tag) {
            *idx = vertices.len();
            vertices.push(nodes[tag]);
        }
    }
    let triangles = tris_raw.iter().map(|(_, t)| t.map(|tag| used[&tag])).collect();
    let edges = if lines_raw.is_empty() {
        None
    } else {
        let mut e = Vec::with_capacity(lines_raw.len());
        for (no, l) in &lines_raw {
            let mut pair = [0usize; 2];
            for (k, tag) in l.iter().enumerate() {
                pair[k] = *used
                    .get(tag)
                    .ok_or_else(|| parse_err(*no, format!("line element references unused node {tag}")))?;
            }
            e.push(pair);
        }
        Some(e)
    };
    TriMesh::from_parts(vertices, triangles, edges)
}
