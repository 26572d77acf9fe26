use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use mifrecon::datagen::read_dataset;
use mifrecon::geometry::{primitives, sample_surface, OrientedPointSet};
use mifrecon::io::{load_mesh, save_cloud, save_mesh};
use mifrecon::network::{Checkpoint, NetworkParams};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mifrecon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A mesh directory with the unit cube and a normalized icosphere.
fn meshes(dir: &Path, with_sphere: bool) -> PathBuf {
    let m = dir.join("meshes");
    std::fs::create_dir_all(&m).unwrap();
    save_mesh(&m.join("cube.obj"), &primitives::unit_cube()).unwrap();
    if with_sphere {
        save_mesh(&m.join("sphere.obj"), &primitives::icosphere(3)).unwrap();
    }
    m
}

fn prepare(dir: &Path, out: &str, queries: usize) -> PathBuf {
    let m = meshes(dir, false);
    let out = dir.join(out);
    let n = queries.to_string();
    ok(&[
        "prepare", "--meshes", s(&m), "--n-near", &n, "--n-cube", "0", "--points", "2000", "--preset", "desk",
        "--seed", "3", "--out", s(&out), "--deterministic",
    ]);
    out
}

#[test]
fn prepare_writes_the_requested_samples() {
    let dir = tempfile::tempdir().unwrap();
    let m = meshes(dir.path(), false);
    let out = dir.path().join("o");
    let summary = ok(&[
        "prepare", "--meshes", s(&m), "--n-near", "8", "--n-cube", "2", "--points", "2000", "--out", s(&out),
    ]);
    assert!(summary.contains("1 shapes, 10 samples"), "{summary}");
    assert!(summary.ends_with("(0 warnings)\n"), "{summary}");
    let ds = read_dataset(&out.join("dataset.lmir")).unwrap();
    assert_eq!(ds.sample_count(), 10);
    assert!(out.join("clouds/cube.ply").exists());
    assert!(out.join("gt/cube.obj").exists());
    assert!(out.join("prepare.resolved.toml").exists());
}

#[test]
fn prepare_is_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = prepare(dir.path(), "a", 20);
    let b = prepare(dir.path(), "b", 20);
    for f in ["dataset.lmir", "clouds/cube.ply", "gt/cube.obj"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn prepare_skips_bad_meshes_and_fails_on_empty_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let m = meshes(dir.path(), false);
    std::fs::write(m.join("open.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    let out = dir.path().join("o");
    let summary = ok(&["prepare", "--meshes", s(&m), "--n-near", "4", "--n-cube", "0", "--points", "2000", "--out", s(&out)]);
    assert!(summary.contains("1 shapes") && summary.ends_with("(1 warning)\n"), "{summary}");

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let res = run(&["prepare", "--meshes", s(&empty), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no .obj or .ply meshes"));
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let m = meshes(dir.path(), false);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("[prepare]\nmeshes = {:?}\nn_near = 5\nn_cube = 1\npoints = [2000, 2000]\n", s(&m)),
    )
    .unwrap();
    let out = dir.path().join("o");
    let summary = ok(&["prepare", "--config", s(&cfg), "--n-cube", "0", "--out", s(&out)]);
    assert!(summary.contains("5 samples"), "{summary}");
    let echoed = std::fs::read_to_string(out.join("prepare.resolved.toml")).unwrap();
    assert!(echoed.contains("n_near = 5") && echoed.contains("n_cube = 0"), "{echoed}");

    std::fs::write(&cfg, "[prepare]\nn_neer = 5\n").unwrap();
    let res = run(&["prepare", "--config", s(&cfg), "--meshes", s(&m), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("n_neer"));
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["train", "--dataset", s(data), "--out", s(out), "--deterministic", "--batch-size", "8"];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn zero_learning_rate_keeps_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = prepare(dir.path(), "o", 20);
    let data = o.join("dataset.lmir");
    train(&data, &dir.path().join("init"), &["--epochs", "0"]);
    train(&data, &dir.path().join("lr0"), &["--epochs", "2", "--lr", "0"]);
    let p0: NetworkParams<f32> = Checkpoint::read(&dir.path().join("init/checkpoint.lmic")).unwrap().params().unwrap();
    let p1: NetworkParams<f32> = Checkpoint::read(&dir.path().join("lr0/checkpoint.lmic")).unwrap().params().unwrap();
    assert_eq!(p0, p1);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let o = prepare(dir.path(), "o", 40);
    let data = o.join("dataset.lmir");
    let (a, b, r) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("r"));
    train(&data, &a, &["--epochs", "4"]);
    train(&data, &b, &["--epochs", "4"]);
    for f in ["checkpoint.lmic", "loss.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    train(&data, &r, &["--epochs", "2"]);
    let ck = r.join("checkpoint.lmic");
    let summary = train(&data, &r, &["--epochs", "4", "--resume", s(&ck)]);
    assert!(summary.contains("epochs 2..4"), "{summary}");
    assert_eq!(
        std::fs::read_to_string(a.join("loss.csv")).unwrap(),
        std::fs::read_to_string(r.join("loss.csv")).unwrap()
    );
    let pa: NetworkParams<f32> = Checkpoint::read(&a.join("checkpoint.lmic")).unwrap().params().unwrap();
    let pr: NetworkParams<f32> = Checkpoint::read(&ck).unwrap().params().unwrap();
    assert_eq!(pa, pr);
}

#[test]
fn small_training_run_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let o = prepare(dir.path(), "o", 100);
    let t = Instant::now();
    train(&o.join("dataset.lmir"), &dir.path().join("t"), &["--epochs", "2"]);
    assert!(t.elapsed().as_secs() < 60, "{:?}", t.elapsed());
}

#[test]
fn dimension_mismatch_is_caught_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let o = prepare(dir.path(), "o", 4);
    let out = dir.path().join("t");
    let res = run(&["train", "--dataset", s(&o.join("dataset.lmir")), "--preset", "tiny", "--epochs", "1", "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("n_d=32"));
    assert!(!out.join("checkpoint.lmic").exists());
}

#[test]
fn reconstruct_is_deterministic_and_checks_cloud_size() {
    let dir = tempfile::tempdir().unwrap();
    let o = prepare(dir.path(), "o", 4);
    train(&o.join("dataset.lmir"), &o, &["--epochs", "1"]);
    let ck = o.join("checkpoint.lmic");
    let cloud = o.join("clouds/cube.ply");
    for name in ["a.obj", "b.obj"] {
        ok(&["reconstruct", "--checkpoint", s(&ck), "--cloud", s(&cloud), "--res", "10", "--mesh", name, "--out", s(&o)]);
    }
    assert_eq!(std::fs::read(o.join("a.obj")).unwrap(), std::fs::read(o.join("b.obj")).unwrap());

    let few = dir.path().join("few.xyz");
    std::fs::write(&few, "0 0 0\n1 1 1\n0.5 0.5 0.5\n").unwrap();
    let res = run(&["reconstruct", "--checkpoint", s(&ck), "--cloud", s(&few), "--res", "8", "--out", s(&o)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("n_d = 32"));
}

fn sphere_cloud(dir: &Path, flip: bool, normals: bool) -> PathBuf {
    let gt = primitives::icosphere(3).normalized().unwrap();
    let mut c = sample_surface(&gt, 3000, 4).unwrap();
    if flip {
        for n in c.normals.as_mut().unwrap() {
            *n = -*n;
        }
    }
    let c = OrientedPointSet::new(c.positions, if normals { c.normals } else { None }, None).unwrap();
    let p = dir.join(format!("sphere_{flip}_{normals}.ply"));
    save_cloud(&p, &c).unwrap();
    p
}

#[test]
fn gauss_recon_handles_orientation_and_missing_normals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let good = ok(&["gauss-recon", "--cloud", s(&sphere_cloud(dir.path(), false, true)), "--res", "20", "--out", s(&out)]);
    assert!(good.ends_with("(0 warnings)\n"), "{good}");
    let mesh = load_mesh(&out.join("gauss.obj")).unwrap();
    mesh.validate_watertight().unwrap();

    let flipped = ok(&[
        "gauss-recon", "--cloud", s(&sphere_cloud(dir.path(), true, true)), "--res", "20", "--mesh", "flip.obj", "--out",
        s(&out),
    ]);
    assert!(flipped.ends_with("(1 warning)\n"), "{flipped}");
    let inside_out = load_mesh(&out.join("flip.obj")).unwrap();
    let c = mifrecon::geometry::Vec3::repeat(0.5);
    let [a, b, d] = inside_out.corners(0);
    assert!(inside_out.face_normal(0).dot(&((a + b + d) / 3.0 - c)) < 0.0);

    let res = run(&["gauss-recon", "--cloud", s(&sphere_cloud(dir.path(), false, false)), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("no normals"));
}

#[test]
fn eval_pairs_files_and_reports_orphans() {
    let dir = tempfile::tempdir().unwrap();
    let gt = meshes(&dir.path().join("gt"), true);
    let recon = meshes(&dir.path().join("recon"), false);
    let out = dir.path().join("e");
    let res = run(&["eval", "--gt", s(&gt), "--recon", &format!("mine={}", s(&recon)), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("mine: no reconstruction of sphere"));

    let table = ok(&[
        "eval", "--gt", s(&gt), "--recon", &format!("self={}", s(&gt)), "--recon", &format!("again={}", s(&gt)),
        "--out", s(&out),
    ]);
    assert!(table.contains("BCR: self=0.500 again=0.500"), "{table}");
    let csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
