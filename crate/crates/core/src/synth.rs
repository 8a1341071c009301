//! Synthetic measurements: clean traces on a shape-conforming mesh, scaled
//! uniform boundary noise, transfer between boundaries, and dataset files.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::Open01;
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::eit_forward::{boundary_trace, BoundaryData, CurrentPattern, ForwardOperator};
use crate::error::{DataError, Error};
use crate::fem::{P1Space, PerTriangle, SolverOptions};
use crate::mesh::{boundary_param, read_mesh, write_mesh, BoundaryParam, MeshFormat, TriMesh};
use crate::shape::ShapeSpec;

/// Identifier written to dataset metadata.
pub const PRNG_ID: &str = "xoshiro256plusplus-splitmix64";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self, DataError> {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(DataError::BadNoiseLevel(level));
        }
        Ok(NoiseSpec { level, seed })
    }

    fn rng(&self) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(self.seed)
    }
}

/// Clean traces for a piecewise constant `sigma = 1 + chi_D` (per triangle,
/// from the centroid) on a mesh that resolves the interface.
pub fn simulate_measurements(
    shape: &ShapeSpec,
    gen_mesh: &TriMesh,
    patterns: &[CurrentPattern],
) -> Result<Vec<BoundaryData>, Error> {
    shape.validate()?;
    gen_mesh.check_conforming(shape)?;
    let space = P1Space::new(gen_mesh)?;
    let bparam = boundary_param(gen_mesh)?;
    let sigma = PerTriangle(
        (0..gen_mesh.num_triangles())
            .map(|t| 1.0 + shape.chi(gen_mesh.centroid(t)))
            .collect(),
    );
    let w = bparam.nodal_weights(gen_mesh.num_vertices());
    let op = ForwardOperator::new(&space, &sigma, &w, SolverOptions::default())?;
    patterns
        .iter()
        .map(|p| Ok(boundary_trace(&op.solve(&p.load(gen_mesh, &bparam))?, &bparam, p.index)))
        .collect()
}

fn check_on(m: &BoundaryData, bparam: &BoundaryParam) -> Result<(), DataError> {
    if m.len() != bparam.len() {
        return Err(DataError::MeasurementCount {
            expected: bparam.len(),
            found: m.len(),
        });
    }
    Ok(())
}

fn add_noise_with(
    m: &BoundaryData,
    bparam: &BoundaryParam,
    level: f64,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<BoundaryData, DataError> {
    check_on(m, bparam)?;
    if level == 0.0 {
        return Ok(m.clone());
    }
    let norm_m = bparam.norm_sq(m.values()).sqrt();
    if norm_m == 0.0 {
        return Err(DataError::ZeroSignal);
    }
    let theta: Vec<f64> = (0..m.len())
        .map(|_| 2.0 * rng.sample::<f64, _>(Open01) - 1.0)
        .collect();
    let scale = level * norm_m / bparam.norm_sq(&theta).sqrt();
    m.with_values(m.values().iter().zip(&theta).map(|(v, t)| v + scale * t).collect())
}

/// `m + eps ||m|| theta / ||theta||` with `theta ~ U(-1, 1)` per boundary
/// vertex. The result is not re-centred.
pub fn add_noise(m: &BoundaryData, bparam: &BoundaryParam, spec: &NoiseSpec) -> Result<BoundaryData, DataError> {
    add_noise_with(m, bparam, spec.level, &mut spec.rng())
}

/// Noise for every measurement from one stream, drawn in order of `ms`.
pub fn add_noise_all(
    ms: &[BoundaryData],
    bparam: &BoundaryParam,
    spec: &NoiseSpec,
) -> Result<Vec<BoundaryData>, DataError> {
    let mut rng = spec.rng();
    ms.iter().map(|m| add_noise_with(m, bparam, spec.level, &mut rng)).collect()
}

/// Periodic piecewise-linear interpolation of boundary samples at `angle`.
pub fn interpolate_periodic(data: &BoundaryData, angle: f64) -> f64 {
    let (a, v) = (data.angles(), data.values());
    let n = a.len();
    let t = angle.rem_euclid(TAU);
    let k = a.partition_point(|&x| x <= t);
    let (i0, i1, t0, t1) = if k == 0 {
        (n - 1, 0, a[n - 1] - TAU, a[0])
    } else if k == n {
        (n - 1, 0, a[n - 1], a[0] + TAU)
    } else {
        (k - 1, k, a[k - 1], a[k])
    };
    let s = (t - t0) / (t1 - t0);
    (1.0 - s) * v[i0] + s * v[i1]
}

/// Transfers samples onto the vertices of `target` and removes the weighted mean.
pub fn resample_boundary(data: &BoundaryData, target: &BoundaryParam) -> Result<BoundaryData, DataError> {
    if data.len() < 3 {
        return Err(DataError::TooFewSamples(data.len()));
    }
    let raw: Vec<f64> = target.angles.iter().map(|&t| interpolate_periodic(data, t)).collect();
    let mean = target.weighted_mean(&raw);
    BoundaryData::new(data.index, target.angles.clone(), raw.iter().map(|v| v - mean).collect())
}

/// Refuses a reconstruction mesh identical to the generation mesh unless allowed.
pub fn check_inverse_crime(gen_mesh: &TriMesh, recon_mesh: &TriMesh, allow: bool) -> Result<(), DataError> {
    let same = gen_mesh.vertices() == recon_mesh.vertices() && gen_mesh.triangles() == recon_mesh.triangles();
    if same && !allow {
        return Err(DataError::InverseCrime);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Files

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub electrodes: usize,
    pub width: f64,
    pub eps: f64,
    pub seed: u64,
    pub prng: String,
    pub shape: ShapeSpec,
    pub measurements: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub gen_mesh: TriMesh,
    pub meta: DatasetMeta,
    pub clean: Vec<BoundaryData>,
    pub noisy: Vec<BoundaryData>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn clean_file_name(j: usize) -> String {
    format!("m_{j:03}.csv")
}

pub fn noisy_file_name(j: usize) -> String {
    format!("mt_{j:03}.csv")
}

pub fn boundary_csv_string(data: &BoundaryData) -> String {
    let mut s = String::from("angle,value\n");
    for (a, v) in data.angles().iter().zip(data.values()) {
        let _ = writeln!(s, "{a:.16e},{v:.16e}");
    }
    s
}

pub fn write_boundary_csv(path: &Path, data: &BoundaryData) -> Result<(), DataError> {
    fs::write(path, boundary_csv_string(data)).map_err(io_err(path))
}

pub fn read_boundary_csv(path: &Path, index: usize) -> Result<BoundaryData, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "angle,value" => {}
        _ => return Err(parse_err(path, 1, "expected header `angle,value`")),
    }
    let (mut angles, mut values) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parsed: Option<(f64, f64)> = (|| {
            let a = parts.next()?.trim().parse().ok()?;
            let v = parts.next()?.trim().parse().ok()?;
            parts.next().is_none().then_some((a, v))
        })();
        let (a, v) = parsed.ok_or_else(|| parse_err(path, i + 1, format!("bad row `{line}`")))?;
        angles.push(a);
        values.push(v);
    }
    BoundaryData::new(index, angles, values).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn meta_string(meta: &DatasetMeta) -> String {
    format!(
        "E = {}\nwidth = {:.17e}\neps = {:.17e}\nseed = {}\nprng = {}\nshape = {}\nM = {}\n",
        meta.electrodes, meta.width, meta.eps, meta.seed, meta.prng, meta.shape, meta.measurements
    )
}

pub fn parse_meta(text: &str, path: &Path) -> Result<DatasetMeta, DataError> {
    let (mut e, mut width, mut eps, mut seed, mut prng, mut shape, mut m) = (None, None, None, None, None, None, None);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, i + 1, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| parse_err(path, i + 1, format!("invalid {what} `{value}`"));
        match key {
            "E" => e = Some(value.parse().map_err(|_| bad("E"))?),
            "width" => width = Some(value.parse().map_err(|_| bad("width"))?),
            "eps" => eps = Some(value.parse().map_err(|_| bad("eps"))?),
            "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
            "prng" => prng = Some(value.to_string()),
            "shape" => shape = Some(value.parse().map_err(|_| bad("shape"))?),
            "M" => m = Some(value.parse().map_err(|_| bad("M"))?),
            _ => return Err(parse_err(path, i + 1, format!("unknown key `{key}`"))),
        }
    }
    let missing = |k: &str| parse_err(path, 0, format!("missing key `{k}`"));
    let electrodes = e.ok_or_else(|| missing("E"))?;
    Ok(DatasetMeta {
        electrodes,
        width: width.ok_or_else(|| missing("width"))?,
        eps: eps.ok_or_else(|| missing("eps"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        prng: prng.ok_or_else(|| missing("prng"))?,
        shape: shape.ok_or_else(|| missing("shape"))?,
        measurements: m.unwrap_or(electrodes / 2),
    })
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_mesh(&data.gen_mesh, &dir.join("mesh_gen.txt"))?;
    let meta = dir.join("meta.txt");
    fs::write(&meta, meta_string(&data.meta)).map_err(io_err(&meta))?;
    for m in &data.clean {
        write_boundary_csv(&dir.join(clean_file_name(m.index)), m)?;
    }
    for m in &data.noisy {
        write_boundary_csv(&dir.join(noisy_file_name(m.index)), m)?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, Error> {
    let meta_path = dir.join("meta.txt");
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta = parse_meta(&text, &meta_path)?;
    let gen_mesh = read_mesh(&dir.join("mesh_gen.txt"), MeshFormat::Native)?;
    let read_all = |name: fn(usize) -> String| -> Result<Vec<BoundaryData>, DataError> {
        (1..=meta.measurements)
            .map(|j| read_boundary_csv(&dir.join(name(j)), j))
            .collect()
    };
    let clean = read_all(clean_file_name)?;
    let noisy = read_all(noisy_file_name)?;
    Ok(Dataset {
        gen_mesh,
        meta,
        clean,
        noisy,
    })
}

pub fn dataset_exists(dir: &Path) -> bool {
    dir.join("meta.txt").is_file()
}
