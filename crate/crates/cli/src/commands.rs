use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use toml::{Table, Value};

use mifrecon::datagen::{prepare_shape_with_cloud, read_dataset, write_dataset, PrepareConfig};
use mifrecon::io::{load_cloud, load_mesh, load_watertight_mesh, save_cloud, save_mesh};
use mifrecon::metrics::{evaluate_pair, format_reports, reports_csv, EvalReport};
use mifrecon::network::{dataset_tensors, Checkpoint, NetworkDims, NetworkParams, TrainConfig, Trainer};
use mifrecon::reconstruct::{
    gauss_reconstruct, learned_indicator_grid, marching_cubes, write_grid_dump, IndicatorGrid, ReconstructOptions,
};

use crate::config::{load_section, resolve, set, take};
use crate::Common;

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Directory of .obj/.ply meshes.
    #[arg(long)]
    meshes: Option<PathBuf>,
    /// Base settings: dense, sparse or desk.
    #[arg(long)]
    preset: Option<String>,
    /// Near-surface queries per shape.
    #[arg(long)]
    n_near: Option<usize>,
    /// Uniform unit-cube queries per shape.
    #[arg(long)]
    n_cube: Option<usize>,
    /// Fixed cloud size per shape.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset written by `prepare`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Network size: paper, desk or tiny.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Continue from this checkpoint; its settings win except for `epochs`.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Input cloud (PLY or XYZ); normals are not needed.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Lattice points per axis.
    #[arg(long)]
    res: Option<usize>,
    /// Evaluate only within this distance of the cloud.
    #[arg(long)]
    band: Option<f64>,
    /// Output mesh file name inside --out (.obj or .ply).
    #[arg(long)]
    mesh: Option<String>,
    /// Also write the indicator grid as raw f32 with a text header.
    #[arg(long)]
    dump_grid: bool,
}

#[derive(Args, Debug)]
pub struct GaussArgs {
    /// Input cloud with normals (PLY or 6-column XYZ).
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    band: Option<f64>,
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    dump_grid: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth mesh file or directory; meshes are normalized to the
    /// unit cube before scoring.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Reconstructions as `name=path` or `path`, one per method; paths are
    /// files or directories matched to the ground truth by file stem.
    #[arg(long)]
    recon: Vec<String>,
}

pub struct Run {
    common: Common,
    pub warnings: usize,
}

fn path_value(p: PathBuf) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn int(n: u64) -> Result<Value> {
    Ok(Value::Integer(i64::try_from(n).context("value does not fit a TOML integer")?))
}

fn mesh_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        if path.is_file() && (ext == "obj" || ext == "ply") {
            out.insert(stem(&path), path);
        }
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Run {
    pub fn new(common: Common) -> Self {
        Self { common, warnings: 0 }
    }

    fn warn(&mut self, msg: impl std::fmt::Display) {
        log::warn!("{msg}");
        self.warnings += 1;
    }

    fn section(&self, name: &str) -> Result<Table> {
        let mut t = load_section(self.common.config.as_deref(), name)?;
        if let Some(s) = self.common.seed {
            t.insert("seed".into(), int(s)?);
        }
        Ok(t)
    }

    fn out_dir(&self) -> Result<&Path> {
        let out = &self.common.out;
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }

    /// Logs the fully resolved settings and writes them to
    /// `<out>/<name>.resolved.toml`.
    fn echo<T: Serialize>(&self, name: &str, runner: Table, settings: &T) -> Result<()> {
        let mut table = runner;
        let settings = Table::try_from(settings)?;
        if !settings.is_empty() {
            table.insert("settings".into(), Value::Table(settings));
        }
        let text = toml::to_string(&table)?;
        log::info!("resolved {name} config:\n{text}");
        let path = self.out_dir()?.join(format!("{name}.resolved.toml"));
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn prepare(&mut self, a: PrepareArgs) -> Result<String> {
        let mut sec = self.section("prepare")?;
        set(&mut sec, "meshes", a.meshes.map(path_value));
        set(&mut sec, "preset", a.preset);
        set(&mut sec, "n_near", a.n_near.map(|n| int(n as u64)).transpose()?);
        set(&mut sec, "n_cube", a.n_cube.map(|n| int(n as u64)).transpose()?);
        if let Some(n) = a.points {
            sec.insert("points".into(), Value::Array(vec![int(n as u64)?, int(n as u64)?]));
        }
        let meshes: PathBuf =
            take(&mut sec, "meshes")?.context("no mesh directory given (--meshes or `meshes` in [prepare])")?;
        let preset: String = take(&mut sec, "preset")?.unwrap_or_else(|| "desk".into());
        let cfg = resolve(&PrepareConfig::preset(&preset)?, sec, "prepare")?;
        cfg.validate()?;
        let mut runner = Table::new();
        runner.insert("meshes".into(), path_value(meshes.clone()));
        runner.insert("preset".into(), preset.into());
        self.echo("prepare", runner, &cfg)?;

        let files = mesh_files(&meshes)?;
        if files.is_empty() {
            bail!("no .obj or .ply meshes in {}", meshes.display());
        }
        let out = self.out_dir()?.to_path_buf();
        for sub in ["clouds", "gt"] {
            std::fs::create_dir_all(out.join(sub))?;
        }
        let mut dataset = mifrecon::datagen::Dataset::new(cfg.n_d, cfg.n_s, cfg.k);
        for (index, (name, path)) in files.iter().enumerate() {
            let mesh = match load_watertight_mesh(path) {
                Ok(m) => m,
                Err(e) => {
                    self.warn(format!("skipping {}: {:#}", path.display(), anyhow::Error::from(e)));
                    continue;
                }
            };
            match prepare_shape_with_cloud(name, &mesh, &cfg, index as u64) {
                Ok((shape, cloud)) => {
                    save_cloud(&out.join("clouds").join(format!("{name}.ply")), &cloud)?;
                    save_mesh(&out.join("gt").join(format!("{name}.obj")), &mesh.normalized()?)?;
                    dataset.shapes.push(shape);
                }
                Err(e) => self.warn(format!("skipping {}: {:#}", path.display(), anyhow::Error::from(e))),
            }
        }
        if dataset.shapes.is_empty() {
            bail!("none of the {} meshes in {} could be prepared", files.len(), meshes.display());
        }
        let path = out.join("dataset.lmir");
        write_dataset(&path, &dataset)?;
        let (alpha, beta): (Vec<f64>, Vec<f64>) =
            dataset.shapes.iter().map(|s| (s.record.alpha_p, s.record.beta)).unzip();
        let range = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            format!("[{lo:.3}, {hi:.3}]")
        };
        Ok(format!(
            "prepare: {} shapes, {} samples, noise alpha_p {} beta {} -> {}",
            dataset.shapes.len(),
            dataset.sample_count(),
            range(&alpha),
            range(&beta),
            path.display()
        ))
    }

    pub fn train(&mut self, a: TrainArgs) -> Result<String> {
        let mut sec = self.section("train")?;
        set(&mut sec, "dataset", a.dataset.map(path_value));
        set(&mut sec, "preset", a.preset);
        set(&mut sec, "resume", a.resume.map(path_value));
        set(&mut sec, "epochs", a.epochs.map(|n| int(n as u64)).transpose()?);
        set(&mut sec, "batch_size", a.batch_size.map(|n| int(n as u64)).transpose()?);
        if let Some(lr) = a.lr {
            let mut adam = Table::new();
            adam.insert("learning_rate".into(), lr.into());
            crate::config::merge(&mut sec, [("adam".to_string(), Value::Table(adam))].into_iter().collect());
        }
        let dataset_path: PathBuf =
            take(&mut sec, "dataset")?.context("no dataset given (--dataset or `dataset` in [train])")?;
        let preset: String = take(&mut sec, "preset")?.unwrap_or_else(|| "desk".into());
        let resume: Option<PathBuf> = take(&mut sec, "resume")?;
        let cfg = resolve(&TrainConfig::new(NetworkDims::preset(&preset)?), sec, "train")?;
        cfg.validate()?;

        let mut trainer = match &resume {
            Some(p) => {
                let ck = Checkpoint::read(p)?;
                let t = Trainer::resume(&ck, cfg.epochs)?;
                if t.config != (TrainConfig { epochs: cfg.epochs, ..cfg.clone() }) {
                    self.warn(format!("{} carries its own settings; they override the resolved config", p.display()));
                }
                t
            }
            None => Trainer::new(cfg.clone())?,
        };
        let mut runner = Table::new();
        runner.insert("dataset".into(), path_value(dataset_path.clone()));
        runner.insert("preset".into(), preset.into());
        if let Some(p) = &resume {
            runner.insert("resume".into(), path_value(p.clone()));
        }
        self.echo("train", runner, &trainer.config)?;

        let dataset = read_dataset(&dataset_path)?;
        let data = dataset_tensors(&dataset, &trainer.config.dims)?;
        let out = self.out_dir()?.to_path_buf();
        let ck_path = out.join("checkpoint.lmic");
        let csv_path = out.join("loss.csv");
        let append = resume.is_some() && csv_path.exists();
        let mut csv = OpenOptions::new()
            .create(true)
            .append(append)
            .write(true)
            .truncate(!append)
            .open(&csv_path)
            .with_context(|| format!("opening {}", csv_path.display()))?;
        if !append {
            writeln!(csv, "step,epoch,loss")?;
        }
        if trainer.epoch >= trainer.config.epochs {
            self.warn(format!(
                "checkpoint is already at epoch {} of {}; nothing to do",
                trainer.epoch, trainer.config.epochs
            ));
        }
        let start = trainer.epoch;
        let mut written = 0;
        trainer.fit(&data, Some(&ck_path), |t| {
            for r in &t.history[written..] {
                writeln!(csv, "{},{},{}", r.step, t.epoch, r.loss).map_err(|e| mifrecon::Error::io(&csv_path, e))?;
            }
            written = t.history.len();
            Ok(())
        })?;
        if trainer.history.is_empty() {
            trainer.checkpoint().write(&ck_path)?;
        }
        let last = trainer.history.last().map_or(f64::NAN, |r| r.loss);
        Ok(format!(
            "train: epochs {}..{}, {} steps, last batch loss {last:.6} -> {}",
            start,
            trainer.epoch,
            trainer.history.len(),
            ck_path.display()
        ))
    }

    fn recon_options(&self, sec: &mut Table, res: Option<usize>, band: Option<f64>) -> Result<()> {
        set(sec, "res", res.map(|n| int(n as u64)).transpose()?);
        set(sec, "band", band);
        Ok(())
    }

    fn write_outputs(&mut self, mesh: &mifrecon::geometry::TriangleMesh, grid: &IndicatorGrid, name: &str, dump: bool) -> Result<PathBuf> {
        let out = self.out_dir()?.to_path_buf();
        if mesh.is_empty() {
            self.warn("the field never crosses the iso level; writing an empty mesh");
        }
        let path = out.join(name);
        save_mesh(&path, mesh)?;
        if dump {
            write_grid_dump(&path.with_extension("grid.f32"), grid)?;
        }
        Ok(path)
    }

    pub fn reconstruct(&mut self, a: ReconstructArgs) -> Result<String> {
        let mut sec = self.section("reconstruct")?;
        set(&mut sec, "checkpoint", a.checkpoint.map(path_value));
        set(&mut sec, "cloud", a.cloud.map(path_value));
        set(&mut sec, "mesh", a.mesh);
        if a.dump_grid {
            sec.insert("dump_grid".into(), true.into());
        }
        self.recon_options(&mut sec, a.res, a.band)?;
        let ck_path: PathBuf =
            take(&mut sec, "checkpoint")?.context("no checkpoint given (--checkpoint or `checkpoint` in [reconstruct])")?;
        let cloud_path: PathBuf = take(&mut sec, "cloud")?.context("no cloud given (--cloud or `cloud` in [reconstruct])")?;
        let name: String = take(&mut sec, "mesh")?.unwrap_or_else(|| "recon.obj".into());
        let dump: bool = take(&mut sec, "dump_grid")?.unwrap_or(false);
        let opts = resolve(&ReconstructOptions::default(), sec, "reconstruct")?;
        opts.validate()?;
        let mut runner = Table::new();
        runner.insert("checkpoint".into(), path_value(ck_path.clone()));
        runner.insert("cloud".into(), path_value(cloud_path.clone()));
        runner.insert("mesh".into(), name.clone().into());
        runner.insert("dump_grid".into(), dump.into());
        self.echo("reconstruct", runner, &opts)?;

        let params: NetworkParams<f32> = Checkpoint::read(&ck_path)?.params()?;
        let cloud = load_cloud(&cloud_path)?;
        if cloud.len() < params.dims.n_d {
            bail!(
                "{} has {} points; the network needs at least n_d = {}",
                cloud_path.display(),
                cloud.len(),
                params.dims.n_d
            );
        }
        let grid = learned_indicator_grid(&cloud, &params, &opts)?;
        let mesh = marching_cubes(&grid, opts.iso);
        let path = self.write_outputs(&mesh, &grid, &name, dump)?;
        Ok(format!(
            "reconstruct: {} vertices, {} triangles at {}^3 -> {}",
            mesh.vertices.len(),
            mesh.triangles.len(),
            opts.res,
            path.display()
        ))
    }

    pub fn gauss_recon(&mut self, a: GaussArgs) -> Result<String> {
        let mut sec = self.section("gauss-recon")?;
        set(&mut sec, "cloud", a.cloud.map(path_value));
        set(&mut sec, "mesh", a.mesh);
        if a.dump_grid {
            sec.insert("dump_grid".into(), true.into());
        }
        self.recon_options(&mut sec, a.res, a.band)?;
        let cloud_path: PathBuf = take(&mut sec, "cloud")?.context("no cloud given (--cloud or `cloud` in [gauss-recon])")?;
        let name: String = take(&mut sec, "mesh")?.unwrap_or_else(|| "gauss.obj".into());
        let dump: bool = take(&mut sec, "dump_grid")?.unwrap_or(false);
        let opts = resolve(&ReconstructOptions::default(), sec, "gauss-recon")?;
        opts.validate()?;
        let mut runner = Table::new();
        runner.insert("cloud".into(), path_value(cloud_path.clone()));
        runner.insert("mesh".into(), name.clone().into());
        runner.insert("dump_grid".into(), dump.into());
        self.echo("gauss-recon", runner, &opts)?;

        let cloud = load_cloud(&cloud_path)?;
        if cloud.normals.is_none() {
            bail!(
                "{} has no normals: the Gauss baseline integrates oriented normals, so it needs them \
                 (the learned `reconstruct` subcommand works from positions alone)",
                cloud_path.display()
            );
        }
        let out = gauss_reconstruct(&cloud, &opts)?;
        if out.complemented {
            self.warn("normals point inwards; contoured the complement, so the mesh faces inwards");
        }
        let path = self.write_outputs(&out.mesh, &out.grid, &name, dump)?;
        Ok(format!(
            "gauss-recon: {} vertices, {} triangles at {}^3 -> {}",
            out.mesh.vertices.len(),
            out.mesh.triangles.len(),
            opts.res,
            path.display()
        ))
    }

    pub fn eval(&mut self, a: EvalArgs) -> Result<String> {
        let mut sec = self.section("eval")?;
        sec.remove("seed");
        set(&mut sec, "gt", a.gt.map(path_value));
        if !a.recon.is_empty() {
            sec.insert("recon".into(), Value::Array(a.recon.into_iter().map(Value::String).collect()));
        }
        let gt: PathBuf = take(&mut sec, "gt")?.context("no ground truth given (--gt or `gt` in [eval])")?;
        let recon: Vec<String> = take(&mut sec, "recon")?.unwrap_or_default();
        if let Some(key) = sec.keys().next() {
            bail!("unknown key `{key}` in [eval]");
        }
        if recon.is_empty() {
            bail!("no reconstructions given (--recon)");
        }
        let mut runner = Table::new();
        runner.insert("gt".into(), path_value(gt.clone()));
        runner.insert("recon".into(), Value::Array(recon.iter().cloned().map(Value::String).collect()));
        self.echo("eval", runner, &Table::new())?;

        let gt_files = if gt.is_dir() {
            mesh_files(&gt)?
        } else {
            BTreeMap::from([(stem(&gt), gt.clone())])
        };
        let mut reports = Vec::new();
        for spec in &recon {
            let (method, path) = match spec.split_once('=') {
                Some((m, p)) => (m.to_string(), PathBuf::from(p)),
                None => (stem(Path::new(spec)), PathBuf::from(spec)),
            };
            let files = if path.is_dir() {
                mesh_files(&path)?
            } else if gt_files.len() == 1 {
                BTreeMap::from([(gt_files.keys().next().unwrap().clone(), path.clone())])
            } else {
                BTreeMap::from([(stem(&path), path.clone())])
            };
            let mut orphans: Vec<String> = files
                .keys()
                .filter(|k| !gt_files.contains_key(*k))
                .map(|k| format!("{method}: {k} has no ground truth"))
                .collect();
            orphans.extend(
                gt_files
                    .keys()
                    .filter(|k| !files.contains_key(*k))
                    .map(|k| format!("{method}: no reconstruction of {k}")),
            );
            if !orphans.is_empty() {
                bail!("unpaired files:\n  {}", orphans.join("\n  "));
            }
            let mut scores = Vec::new();
            for (shape, gt_path) in &gt_files {
                let gt_mesh = load_watertight_mesh(gt_path)?.normalized()?;
                let recon_mesh = load_mesh(&files[shape])?;
                if recon_mesh.is_empty() {
                    self.warn(format!("{method}: reconstruction of {shape} is empty; scored as worst case"));
                }
                scores.push(evaluate_pair(shape, &recon_mesh, &gt_mesh)?);
            }
            reports.push(EvalReport::new(method, scores));
        }
        let table = format_reports(&reports)?;
        print!("{table}");
        let path = self.out_dir()?.join("eval.csv");
        std::fs::write(&path, reports_csv(&reports)).with_context(|| format!("writing {}", path.display()))?;
        Ok(format!(
            "eval: {} method(s), {} shape(s) -> {}",
            reports.len(),
            gt_files.len(),
            path.display()
        ))
    }
}
