use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use levelset_eit::mesh::{read_mesh, MeshFormat};
use levelset_eit::shape::ShapeSpec;
use levelset_eit::vtk::read_vtk_scalars;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levelset-eit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, eps: &str, seed: &str) -> Output {
    cli(&[
        "simulate",
        "--h",
        "0.1",
        "--shape",
        "ellipse 0 0 0.4 0.2 0",
        "--electrodes",
        "6",
        "--eps",
        eps,
        "--seed",
        seed,
        "--out",
        s(dir),
    ])
}

#[test]
fn mesh_command() {
    let tmp = tempfile::tempdir().unwrap();
    let disk = tmp.path().join("disk.txt");
    let out = cli(&["mesh", "--h", "0.1", "--out", s(&disk)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read_mesh(&disk, MeshFormat::Native).unwrap().num_vertices() > 100);

    let gen = tmp.path().join("gen.txt");
    let out = cli(&["mesh", "--h", "0.1", "--shape", "ellipse 0 0 0.4 0.2 0", "--out", s(&gen)]);
    assert_eq!(code(&out), 0);
    read_mesh(&gen, MeshFormat::Native)
        .unwrap()
        .check_conforming(&ShapeSpec::default_ellipse())
        .unwrap();

    let out = cli(&["mesh", "--h", "-1", "--out", s(&disk)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&cli(&["mesh", "--h", "0.1", "--shape", "blob 1", "--out", s(&disk)])), 2);
}

#[test]
fn simulate_command() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&simulate(&a, "0.01", "7")), 0);
    assert_eq!(code(&simulate(&b, "0.01", "7")), 0);
    for j in 1..=3 {
        assert!(a.join(format!("m_{j:03}.csv")).is_file());
        let na = fs::read(a.join(format!("mt_{j:03}.csv"))).unwrap();
        assert_eq!(na, fs::read(b.join(format!("mt_{j:03}.csv"))).unwrap());
    }
    assert!(!a.join("m_004.csv").exists());
    let meta = fs::read_to_string(a.join("meta.txt")).unwrap();
    assert!(meta.lines().any(|l| l.replace(' ', "") == "seed=7"), "{meta}");

    let c = tmp.path().join("c");
    assert_eq!(code(&simulate(&c, "0", "7")), 0);
    for j in 1..=3 {
        assert_eq!(
            fs::read(c.join(format!("m_{j:03}.csv"))).unwrap(),
            fs::read(c.join(format!("mt_{j:03}.csv"))).unwrap()
        );
    }
    assert_eq!(code(&cli(&["simulate", "--h", "0.1", "--electrodes", "6", "--out", s(&c)])), 2);
    assert_eq!(
        code(&cli(&["simulate", "--h", "0.1", "--shape", "ellipse 0 0 0.4 0.2 0", "--electrodes", "5", "--out", s(&c)])),
        2
    );
}

#[test]
fn reconstruct_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&simulate(&data, "0.01", "3")), 0);
    let mesh = tmp.path().join("recon.txt");
    assert_eq!(code(&cli(&["mesh", "--h", "0.15", "--out", s(&mesh)])), 0);

    let r1 = tmp.path().join("r1");
    let out = cli(&[
        "reconstruct",
        "--data",
        s(&data),
        "--mesh",
        s(&mesh),
        "--out",
        s(&r1),
        "--max-iters",
        "3",
        "--truth",
        "--snapshots",
        "1,2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["q", "H", "sigma", "f", "lambda"] {
        assert!(r1.join(format!("{f}.vtk")).is_file(), "{f}");
    }
    let snaps: Vec<_> = fs::read_dir(&r1)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("snapshot_"))
        .collect();
    assert_eq!(snaps.len(), 2);
    assert!(r1.join("snapshot_0001").join("H.vtk").is_file());
    let (_, h) = read_vtk_scalars(&fs::read_to_string(r1.join("H.vtk")).unwrap()).unwrap();
    assert!(h.iter().all(|v| (0.0..=1.0).contains(v)));
    let csv = fs::read_to_string(r1.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("iter,J,grad_inf,step,backtracks,eps_err\n"));
    assert!(csv.trim_end().lines().last().unwrap().starts_with("# reason="), "{csv}");
    assert!(csv.lines().nth(1).unwrap().split(',').nth(5).is_some_and(|e| !e.is_empty()));

    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, format!("# second run\ngamma = 0.002\nmax_iters = 2\ndata_dir = {}\n", s(&data))).unwrap();
    let r2 = tmp.path().join("r2");
    let out = cli(&["reconstruct", "--config", s(&cfg), "--mesh", s(&mesh), "--out", s(&r2), "--max-iters", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(r2.join("summary.txt")).unwrap();
    assert!(summary.contains("gamma = 0.002") && summary.contains("iterations = 1"), "{summary}");

    let out = cli(&["evaluate", s(&r2), s(&r1), s(&r1)]);
    assert_eq!(code(&out), 0);
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "M,gamma,iterations,J_final,eps_err");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("3,0.001,") && lines[2].starts_with("3,0.002,1,"), "{table}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));

    assert_eq!(code(&cli(&["evaluate"])), 2);
    assert_eq!(code(&cli(&["evaluate", s(tmp.path())])), 1);
}

#[test]
fn reconstruct_usage_and_guards() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&simulate(&data, "0.01", "3")), 0);
    let out_dir = tmp.path().join("r");
    assert_eq!(code(&cli(&["reconstruct", "--data", s(&data), "--out", s(&out_dir)])), 2);
    let missing = tmp.path().join("nope.txt");
    assert_eq!(
        code(&cli(&["reconstruct", "--data", s(&data), "--mesh", s(&missing), "--out", s(&out_dir)])),
        2
    );

    let gen = data.join("mesh_gen.txt");
    let crime = cli(&["reconstruct", "--data", s(&data), "--mesh", s(&gen), "--out", s(&out_dir), "--max-iters", "1"]);
    assert_eq!(code(&crime), 1);
    assert!(String::from_utf8_lossy(&crime.stderr).to_lowercase().contains("inverse crime"));
    let allowed = cli(&[
        "reconstruct",
        "--data",
        s(&data),
        "--mesh",
        s(&gen),
        "--out",
        s(&out_dir),
        "--max-iters",
        "1",
        "--allow-inverse-crime",
    ]);
    assert_eq!(code(&allowed), 0);

    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "gamma = 0.001\nfrobnicate = 1\n").unwrap();
    let out = cli(&["reconstruct", "--config", s(&cfg), "--data", s(&data), "--mesh", s(&gen), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("frobnicate"), "{err}");
}
