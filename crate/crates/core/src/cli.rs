//! Command-line front end: `mesh`, `simulate`, `reconstruct`, `evaluate`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::eit_forward::{make_patterns, DEFAULT_ELECTRODE_WIDTH};
use crate::error::Error;
use crate::fem::SolverKind;
use crate::levelset::{heaviside_field, SigmaRule};
use crate::mesh::{boundary_param, generate_disk_mesh, generate_disk_mesh_with_shape, read_mesh, write_mesh, MeshFormat, TriMesh};
use crate::optimizer::{initial_control, reconstruct_with, ReconstructionConfig, ReconstructionResult};
use crate::shape::ShapeSpec;
use crate::synth::{
    add_noise_all, check_inverse_crime, dataset_exists, read_dataset, simulate_measurements, write_dataset, Dataset,
    DatasetMeta, NoiseSpec, PRNG_ID,
};
use crate::vtk::write_vtk;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(Error, crate::error::DataError, crate::error::MeshError, crate::error::FemError, crate::error::ShapeError);

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "levelset-eit", version, about = "Level-set EIT reconstruction in the unit disk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a disk mesh, optionally conforming to a shape.
    Mesh(MeshArgs),
    /// Simulate clean and noisy boundary data for a phantom.
    Simulate(SimulateArgs),
    /// Reconstruct the inclusion from a dataset.
    Reconstruct(ReconstructArgs),
    /// Tabulate result directories as `M,gamma,iterations,J_final,eps_err`.
    Evaluate(EvaluateArgs),
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got `{s}`")),
    }
}

fn shape_arg(s: &str) -> Result<ShapeSpec, String> {
    s.parse::<ShapeSpec>().map_err(|e| e.to_string())
}

/// Sorted, de-duplicated iteration numbers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Snapshots(pub Vec<usize>);

fn snapshot_arg(s: &str) -> Result<Snapshots, String> {
    snapshot_list(s).map(Snapshots)
}

fn snapshot_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out: Vec<usize> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad snapshot `{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Target edge length.
    #[arg(long = "h", value_parser = positive)]
    pub h: f64,
    /// `ellipse cx cy ax ay rot` or `circles cx1 cy1 r1 ...`.
    #[arg(long, value_parser = shape_arg)]
    pub shape: Option<ShapeSpec>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shape-conforming generation mesh; generated from `--h` when absent.
    #[arg(long)]
    pub gen_mesh: Option<PathBuf>,
    #[arg(long = "h", value_parser = positive)]
    pub h: Option<f64>,
    #[arg(long, value_parser = shape_arg)]
    pub shape: Option<ShapeSpec>,
    #[arg(long)]
    pub electrodes: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub width: Option<f64>,
    #[arg(long, value_parser = non_negative)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Reconstruction mesh.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = positive)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub alpha: Option<f64>,
    /// Noise level used in the stopping rule; defaults to the dataset's.
    #[arg(long, value_parser = non_negative)]
    pub eps: Option<f64>,
    #[arg(long, value_parser = non_negative)]
    pub beta: Option<f64>,
    #[arg(long, value_parser = non_negative)]
    pub tol_floor: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// `midpoint` or `exact`.
    #[arg(long)]
    pub sigma_rule: Option<SigmaRule>,
    #[arg(long, value_parser = positive)]
    pub init_radius: Option<f64>,
    /// Iterations whose fields are saved, e.g. `1,10,20`.
    #[arg(long, value_parser = snapshot_arg)]
    pub snapshots: Option<Snapshots>,
    /// Log the reconstruction error against this shape, or the dataset's
    /// phantom when given without a value.
    #[arg(long, num_args = 0..=1, default_missing_value = "dataset")]
    pub truth: Option<String>,
    #[arg(long)]
    pub allow_inverse_crime: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "gamma",
    "alpha",
    "eps",
    "beta",
    "tol_floor",
    "max_iters",
    "shrink",
    "armijo_c",
    "max_backtracks",
    "step_growth",
    "solver",
    "solver_tol",
    "solver_max_iter",
    "direct_limit",
    "seed",
    "sigma_rule",
    "init_radius",
    "snapshots",
    "truth",
    "allow_inverse_crime",
    "shape",
    "electrodes",
    "width",
    "h",
    "gen_mesh",
    "recon_mesh",
    "data_dir",
    "out_dir",
];

/// Flat `key = value` file with `#` comments. Values keep their line numbers
/// so later validation errors can point at them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let k = k.trim();
            if !CONFIG_KEYS.contains(&k) {
                return Err(format!("line {}: unknown key `{k}`", i + 1));
            }
            if entries.insert(k.to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(format!("line {}: duplicate key `{k}`", i + 1));
            }
        }
        Ok(RunConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config line {line}: bad value for `{key}`: {e}"))),
        }
    }

    fn get_with<T>(&self, key: &str, parse: fn(&str) -> Result<T, String>) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => parse(v)
                .map(Some)
                .map_err(|e| usage(format!("config line {line}: bad value for `{key}`: {e}"))),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn mesh_format(path: &Path) -> MeshFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("msh") => MeshFormat::Msh2,
        _ => MeshFormat::Native,
    }
}

fn existing_file(path: PathBuf, what: &str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(usage(format!("{what} `{}` does not exist", path.display())))
    }
}

pub fn cmd_mesh(args: &MeshArgs) -> Result<(), CliError> {
    let mesh = match &args.shape {
        Some(shape) => generate_disk_mesh_with_shape(args.h, shape)?,
        None => generate_disk_mesh(args.h)?,
    };
    write_mesh(&mesh, &args.out)?;
    println!(
        "wrote {} ({} vertices, {} triangles)",
        args.out.display(),
        mesh.num_vertices(),
        mesh.num_triangles()
    );
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let shape = match &args.shape {
        Some(s) => s.clone(),
        None => cfg
            .get_with("shape", shape_arg)?
            .ok_or_else(|| usage("simulate needs --shape"))?,
    };
    let electrodes = args
        .electrodes
        .or(cfg.get("electrodes")?)
        .ok_or_else(|| usage("simulate needs --electrodes"))?;
    let width = args.width.or(cfg.get_with("width", positive)?).unwrap_or(DEFAULT_ELECTRODE_WIDTH);
    let eps = args.eps.or(cfg.get_with("eps", non_negative)?).unwrap_or(0.0);
    let seed = args.seed.or(cfg.get("seed")?).unwrap_or(0);
    let out = args
        .out
        .clone()
        .or(cfg.get("data_dir")?)
        .ok_or_else(|| usage("simulate needs --out"))?;
    let patterns = make_patterns(electrodes, width).map_err(|e| usage(e.to_string()))?;
    let gen_path = args.gen_mesh.clone().or(cfg.get("gen_mesh")?);
    let gen_mesh = match (gen_path, args.h.or(cfg.get_with("h", positive)?)) {
        (Some(p), _) => {
            let p = existing_file(p, "generation mesh")?;
            read_mesh(&p, mesh_format(&p))?
        }
        (None, Some(h)) => generate_disk_mesh_with_shape(h, &shape)?,
        (None, None) => return Err(usage("simulate needs --gen-mesh or --h")),
    };
    let clean = simulate_measurements(&shape, &gen_mesh, &patterns)?;
    let bparam = boundary_param(&gen_mesh)?;
    let noisy = add_noise_all(&clean, &bparam, &NoiseSpec::new(eps, seed)?)?;
    let dataset = Dataset {
        meta: DatasetMeta {
            electrodes,
            width,
            eps,
            seed,
            prng: PRNG_ID.to_string(),
            shape,
            measurements: clean.len(),
        },
        gen_mesh,
        clean,
        noisy,
    };
    write_dataset(&out, &dataset)?;
    println!("wrote {} measurements to {}", dataset.clean.len(), out.display());
    Ok(())
}

fn reconstruction_config(args: &ReconstructArgs, cfg: &RunConfig, dataset_eps: f64) -> Result<ReconstructionConfig, CliError> {
    let mut c = ReconstructionConfig {
        noise_level: dataset_eps,
        ..Default::default()
    };
    if let Some(v) = args.gamma.or(cfg.get_with("gamma", positive)?) {
        c.gamma = v;
    }
    if let Some(v) = args.alpha.or(cfg.get_with("alpha", positive)?) {
        c.alpha = v;
    }
    if let Some(v) = args.eps.or(cfg.get_with("eps", non_negative)?) {
        c.noise_level = v;
    }
    if let Some(v) = args.beta.or(cfg.get_with("beta", non_negative)?) {
        c.stop_factor = v;
    }
    if let Some(v) = args.tol_floor.or(cfg.get_with("tol_floor", non_negative)?) {
        c.tol_floor = v;
    }
    if let Some(v) = args.max_iters.or(cfg.get("max_iters")?) {
        c.max_iters = v;
    }
    if let Some(v) = args.sigma_rule.or(cfg.get("sigma_rule")?) {
        c.sigma_rule = v;
    }
    if let Some(v) = cfg.get("seed")? {
        c.seed = v;
    }
    if let Some(v) = cfg.get("shrink")? {
        c.line_search.shrink = v;
    }
    if let Some(v) = cfg.get("armijo_c")? {
        c.line_search.armijo_c = v;
    }
    if let Some(v) = cfg.get("max_backtracks")? {
        c.line_search.max_backtracks = v;
    }
    if let Some(v) = cfg.get("step_growth")? {
        c.line_search.growth = v;
    }
    if let Some(v) = cfg.get_with("solver_tol", positive)? {
        c.solver.tol = v;
    }
    if let Some(v) = cfg.get("solver_max_iter")? {
        c.solver.max_iter = Some(v);
    }
    if let Some(v) = cfg.get("direct_limit")? {
        c.solver.direct_limit = v;
    }
    match cfg.raw("solver") {
        None | Some("auto") => {}
        Some("direct") => c.solver.kind = Some(SolverKind::Direct),
        Some("cg") => c.solver.kind = Some(SolverKind::ConjugateGradient),
        Some(other) => return Err(usage(format!("unknown solver `{other}` (auto, direct or cg)"))),
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

/// Keys of `summary.txt` in a result directory.
pub const SUMMARY_FILE: &str = "summary.txt";

fn summary_string(meta: &DatasetMeta, config: &ReconstructionConfig, result: &ReconstructionResult) -> String {
    let eps_err = result.eps_err.map(|e| format!("{e:.16e}")).unwrap_or_default();
    format!(
        "M = {}\nE = {}\ngamma = {}\nalpha = {}\neps = {}\nseed = {}\nsigma_rule = {}\niterations = {}\nJ_final = {:.16e}\neps_err = {}\nreason = {}\n",
        meta.measurements,
        meta.electrodes,
        config.gamma,
        config.alpha,
        meta.eps,
        meta.seed,
        config.sigma_rule,
        result.record.iterations(),
        result.cost,
        eps_err,
        result.record.reason,
    )
}

fn write_fields(mesh: &TriMesh, dir: &Path, fields: &[(&str, &[f64])]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| Error::from(crate::error::DataError::Io { path: dir.to_path_buf(), source }))?;
    for (name, values) in fields {
        write_vtk(mesh, values, name, &dir.join(format!("{name}.vtk")))?;
    }
    Ok(())
}

pub fn snapshot_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("snapshot_{k:04}"))
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let data_dir = args
        .data
        .clone()
        .or(cfg.get("data_dir")?)
        .ok_or_else(|| usage("reconstruct needs --data"))?;
    let mesh_path = args
        .mesh
        .clone()
        .or(cfg.get("recon_mesh")?)
        .ok_or_else(|| usage("reconstruct needs --mesh"))?;
    let out = args
        .out
        .clone()
        .or(cfg.get("out_dir")?)
        .ok_or_else(|| usage("reconstruct needs --out"))?;
    if !dataset_exists(&data_dir) {
        return Err(usage(format!("no dataset in `{}`", data_dir.display())));
    }
    let mesh_path = existing_file(mesh_path, "reconstruction mesh")?;
    let snapshots = match &args.snapshots {
        Some(s) => s.0.clone(),
        None => cfg.get_with("snapshots", snapshot_list)?.unwrap_or_default(),
    };
    let init_radius = args.init_radius.or(cfg.get_with("init_radius", positive)?).unwrap_or(0.2);
    let allow = args.allow_inverse_crime || cfg.get("allow_inverse_crime")?.unwrap_or(false);

    let dataset = read_dataset(&data_dir)?;
    let config = reconstruction_config(args, &cfg, dataset.meta.eps)?;
    let truth = match args.truth.as_deref().or(cfg.raw("truth")) {
        None => None,
        Some("dataset") => Some(dataset.meta.shape.clone()),
        Some(spec) => Some(shape_arg(spec).map_err(usage)?),
    };
    let mesh = read_mesh(&mesh_path, mesh_format(&mesh_path))?;
    check_inverse_crime(&dataset.gen_mesh, &mesh, allow)?;
    let patterns = make_patterns(dataset.meta.electrodes, dataset.meta.width)?;
    let f0 = initial_control(&mesh, init_radius, [0.0, 0.0]).map_err(|e| usage(e.to_string()))?;

    fs::create_dir_all(&out).map_err(|source| Error::from(crate::error::DataError::Io { path: out.clone(), source }))?;
    let mut written = HashSet::new();
    let mut snap_err: Option<CliError> = None;
    let result = reconstruct_with(&config, &mesh, &patterns, &dataset.noisy, &f0, truth.as_ref(), |view| {
        let k = view.row.k;
        if snap_err.is_some() || !snapshots.contains(&k) {
            return;
        }
        let h = heaviside_field(&view.state.q, config.alpha);
        let sigma = h.map(|v| 1.0 + v);
        let fields: [(&str, &[f64]); 4] = [("f", &view.state.f), ("q", &view.state.q), ("H", &h), ("sigma", &sigma)];
        match write_fields(&mesh, &snapshot_dir(&out, k), &fields) {
            Ok(()) => {
                written.insert(k);
            }
            Err(e) => snap_err = Some(e),
        }
    })?;
    if let Some(e) = snap_err {
        return Err(e);
    }
    let final_k = result.record.rows.len();
    if snapshots.contains(&final_k) && !written.contains(&final_k) {
        let fields: [(&str, &[f64]); 4] = [("f", &result.f), ("q", &result.q), ("H", &result.heaviside), ("sigma", &result.sigma)];
        write_fields(&mesh, &snapshot_dir(&out, final_k), &fields)?;
    }
    result.record.write_csv(&out.join("convergence.csv"))?;
    let fields: [(&str, &[f64]); 5] = [
        ("q", &result.q),
        ("H", &result.heaviside),
        ("sigma", &result.sigma),
        ("f", &result.f),
        ("lambda", &result.lambda),
    ];
    write_fields(&mesh, &out, &fields)?;
    let summary = out.join(SUMMARY_FILE);
    fs::write(&summary, summary_string(&dataset.meta, &config, &result))
        .map_err(|source| Error::from(crate::error::DataError::Io { path: summary, source }))?;
    println!(
        "{}: {} iterations, J = {:.6e}{}",
        result.record.reason,
        result.record.iterations(),
        result.cost,
        result.eps_err.map(|e| format!(", eps_err = {e:.4}")).unwrap_or_default()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub m: usize,
    pub gamma: f64,
    pub iterations: usize,
    pub j_final: f64,
    pub eps_err: Option<f64>,
}

pub fn read_summary(dir: &Path) -> Result<SummaryRow, String> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let field = |k: &str| map.get(k).ok_or_else(|| format!("{}: missing `{k}`", path.display()));
    let bad = |k: &str| format!("{}: bad value for `{k}`", path.display());
    Ok(SummaryRow {
        m: field("M")?.parse().map_err(|_| bad("M"))?,
        gamma: field("gamma")?.parse().map_err(|_| bad("gamma"))?,
        iterations: field("iterations")?.parse().map_err(|_| bad("iterations"))?,
        j_final: field("J_final")?.parse().map_err(|_| bad("J_final"))?,
        eps_err: match field("eps_err")?.as_str() {
            "" => None,
            v => Some(v.parse().map_err(|_| bad("eps_err"))?),
        },
    })
}

pub fn evaluate_table(rows: &mut [SummaryRow]) -> String {
    rows.sort_by(|a, b| a.m.cmp(&b.m).then(a.gamma.total_cmp(&b.gamma)));
    let mut out = String::from("M,gamma,iterations,J_final,eps_err\n");
    for r in rows.iter() {
        let eps = r.eps_err.map(|e| format!("{e:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{:.6e},{}\n", r.m, r.gamma, r.iterations, r.j_final, eps));
    }
    out
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for dir in &args.dirs {
        let key = fs::canonicalize(dir).unwrap_or_else(|_| dir.clone());
        if !seen.insert(key) {
            eprintln!("warning: skipping duplicate result directory {}", dir.display());
            continue;
        }
        rows.push(read_summary(dir).map_err(|e| Error::Config(format!("malformed result directory: {e}")))?);
    }
    let table = evaluate_table(&mut rows);
    match &args.out {
        Some(p) => fs::write(p, table)
            .map_err(|source| Error::from(crate::error::DataError::Io { path: p.clone(), source }))?,
        None => print!("{table}"),
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Mesh(a) => cmd_mesh(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun with --help for usage.");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
