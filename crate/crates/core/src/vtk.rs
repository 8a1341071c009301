//! Legacy ASCII VTK output of nodal fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::DataError;
use crate::mesh::TriMesh;

pub fn vtk_string(mesh: &TriMesh, field: &[f64], name: &str) -> Result<String, DataError> {
    if field.len() != mesh.num_vertices() {
        return Err(DataError::MeasurementCount {
            expected: mesh.num_vertices(),
            found: field.len(),
        });
    }
    let name: String = name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    let nt = mesh.num_triangles();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{name}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.num_vertices());
    let _ = writeln!(s, "SCALARS {name} double 1");
    s.push_str("LOOKUP_TABLE default\n");
    for v in field {
        let _ = writeln!(s, "{v:.16e}");
    }
    Ok(s)
}

pub fn write_vtk(mesh: &TriMesh, field: &[f64], name: &str, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, vtk_string(mesh, field, name)?).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Scalar name and values of a file written by [`write_vtk`].
pub fn read_vtk_scalars(text: &str) -> Option<(String, Vec<f64>)> {
    let mut lines = text.lines();
    let n: usize = lines
        .by_ref()
        .find_map(|l| l.strip_prefix("POINT_DATA "))?
        .trim()
        .parse()
        .ok()?;
    let name = lines.next()?.strip_prefix("SCALARS ")?.split_whitespace().next()?.to_string();
    lines.next()?;
    let values = lines.take(n).map(|l| l.trim().parse().ok()).collect::<Option<Vec<f64>>>()?;
    (values.len() == n).then_some((name, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;

    #[test]
    fn constant_field_round_trip() {
        let mesh = generate_disk_mesh(0.3).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let text = vtk_string(&mesh, &ones, "sigma").unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains(&format!("POINTS {} double", mesh.num_vertices())));
        assert!(text.contains(&format!("CELLS {} {}", mesh.num_triangles(), 4 * mesh.num_triangles())));
        let (name, values) = read_vtk_scalars(&text).unwrap();
        assert_eq!(name, "sigma");
        assert_eq!(values.len(), mesh.num_vertices());
        assert!(values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn values_survive_exactly() {
        let mesh = generate_disk_mesh(0.3).unwrap();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| (3.0 * p[0]).sin() / 7.0 + p[1]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.vtk");
        write_vtk(&mesh, &f, "my field", &path).unwrap();
        let (name, values) = read_vtk_scalars(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(name, "my_field");
        assert_eq!(values, f);
        assert!(vtk_string(&mesh, &f[1..], "x").is_err());
    }
}
