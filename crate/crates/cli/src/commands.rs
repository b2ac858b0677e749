//! Subcommand implementations. Settings resolve as flag, then file, then
//! default; the resolved values are recorded in the manifest.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vesselmesh::centerline::{centerline_from_points, write_centerline};
use vesselmesh::deform::{fit_mesh, history_csv, make_icosphere, FitConfig};
use vesselmesh::mesh::sample_surface;
use vesselmesh::metrics::{evaluate, evaluate_masks, evaluate_points, EvalConfig, MetricsReport, CSV_HEADER, DEFAULT_SAMPLE_DENSITY};
use vesselmesh::pipeline::{annotate, extract_tree, AnnotateConfig};
use vesselmesh::skeleton::{read_tree, split_branches, write_tree};
use vesselmesh::synth::{make_phantom, PhantomSpec};
use vesselmesh::volume::{load_volume, save_volume, FeatureGrid, VolumeKind};
use vesselmesh::Vec3;

use crate::inputs::{self, InputKind, Loaded};
use crate::manifest::{self, RunManifest};
use crate::{AnnotateArgs, Cli, Command, EvalArgs, FitArgs, GlobalArgs, SkeletonizeArgs, SynthArgs};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Synth(a) => synth(g, a).context("synth"),
        Command::Skeletonize(a) => skeletonize(g, a).context("skeletonize"),
        Command::Annotate(a) => annotate_cmd(g, a).context("annotate"),
        Command::Fit(a) => fit(g, a).context("fit"),
        Command::Eval(a) => eval(g, a).context("eval"),
    }
}

fn finish(g: &GlobalArgs, m: &RunManifest, default: PathBuf) -> Result<()> {
    m.write(g.manifest.as_deref().unwrap_or(&default))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn synth(g: &GlobalArgs, a: SynthArgs) -> Result<()> {
    let mut spec = PhantomSpec::parse(&read_text(&a.spec)?).with_context(|| format!("spec {}", a.spec.display()))?;
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    let phantom = make_phantom(&spec)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let mask = a.out_dir.join("mask.vmv");
    let mesh = a.out_dir.join("mesh.obj");
    let tree = a.out_dir.join("tree.vmtree");
    save_volume(&mask, &phantom.mask)?;
    inputs::write_mesh(&mesh, &phantom.mesh)?;
    write_tree(&tree, &phantom.tree)?;
    let mut m = RunManifest::new("synth", spec.seed, g.threads);
    m.set_kv(&spec.to_kv_string());
    m.inputs.push(a.spec);
    m.outputs.extend([mask, mesh, tree]);
    finish(g, &m, a.out_dir.join("manifest.json"))
}

fn skeletonize(g: &GlobalArgs, a: SkeletonizeArgs) -> Result<()> {
    let mask = inputs::load_mask(&a.mask)?;
    let spur_factor = a.spur_factor.unwrap_or(AnnotateConfig::default().spur_factor);
    let (tree, dropped) = extract_tree(&mask, spur_factor)?;
    write_tree(&a.out, &tree)?;
    let mut m = RunManifest::new("skeletonize", g.seed.unwrap_or(0), g.threads);
    m.set("spur_factor", spur_factor);
    m.set("dropped_components", format!("{dropped:?}"));
    m.inputs.push(a.mask);
    m.outputs.push(a.out.clone());
    if let Some(dir) = &a.centerlines {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let cfg = AnnotateConfig::default();
        let decimation = (cfg.decimation > 0.0).then_some(cfg.decimation);
        for (b, path) in split_branches(&tree).iter().enumerate() {
            let pts: Vec<Vec3> = path.iter().map(|&i| tree.position(i)).collect();
            let cl = centerline_from_points(&pts, decimation, cfg.spacing).with_context(|| format!("branch {b}"))?;
            let out = dir.join(format!("branch_{b:03}.vmcl"));
            write_centerline(&out, &cl)?;
            m.outputs.push(out);
        }
    }
    println!("nodes={} leaves={}", tree.len(), tree.leaves().len());
    finish(g, &m, manifest::default_path(&a.out))
}

fn annotate_cmd(g: &GlobalArgs, a: AnnotateArgs) -> Result<()> {
    let mut cfg = AnnotateConfig::default();
    if let Some(p) = &a.config {
        cfg.apply(&read_text(p)?).with_context(|| format!("config {}", p.display()))?;
    }
    let r = &mut cfg.reconstruct;
    r.sigma_angular = a.sigma_angular.unwrap_or(r.sigma_angular);
    r.sigma_longitudinal = a.sigma_longitudinal.unwrap_or(r.sigma_longitudinal);
    r.ray_step = a.ray_step.unwrap_or(r.ray_step);
    r.rays = a.rays.unwrap_or(r.rays);
    cfg.decimation = a.decimation.unwrap_or(cfg.decimation);
    cfg.spacing = a.spacing.unwrap_or(cfg.spacing);
    cfg.spur_factor = a.spur_factor.unwrap_or(cfg.spur_factor);
    cfg.validate()?;

    let mask = inputs::load_mask(&a.mask)?;
    let tree = a.tree.as_deref().map(read_tree).transpose()?;
    let ann = annotate(&mask, tree.as_ref(), &cfg)?;
    inputs::write_mesh(&a.out, &ann.mesh)?;
    print!("{}", ann.report);

    let mut m = RunManifest::new("annotate", g.seed.unwrap_or(0), g.threads);
    m.set_kv(&cfg.to_kv_string());
    m.set("skipped_branches", format!("{:?}", ann.skipped_branches));
    m.inputs.push(a.mask);
    m.inputs.extend(a.tree);
    m.inputs.extend(a.config);
    m.outputs.push(a.out.clone());
    finish(g, &m, manifest::default_path(&a.out))?;
    if !ann.report.watertight {
        bail!(
            "output mesh is not watertight ({} boundary edges, {} non-manifold edges)",
            ann.report.boundary_edges,
            ann.report.nonmanifold_edges
        );
    }
    Ok(())
}

fn fit_config(g: &GlobalArgs, a: &FitArgs) -> Result<FitConfig> {
    let mut cfg = FitConfig::default();
    if let Some(p) = &a.config {
        cfg.apply(&read_text(p)?).with_context(|| format!("config {}", p.display()))?;
    }
    let w = &mut cfg.weights;
    w.chamfer = a.lambda1.unwrap_or(w.chamfer);
    w.laplacian = a.lambda2.unwrap_or(w.laplacian);
    w.normal = a.lambda3.unwrap_or(w.normal);
    w.edge = a.lambda4.unwrap_or(w.edge);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.iters_stage1 = a.iters_stage1.unwrap_or(cfg.iters_stage1);
    cfg.iters_stage2 = a.iters_stage2.unwrap_or(cfg.iters_stage2);
    if let Some(u) = &a.unpool_at {
        cfg.unpool_at = u.clone();
    }
    if let Some(mode) = &a.mode {
        cfg.mode = mode.parse().map_err(|e: String| anyhow::anyhow!("--mode: {e}"))?;
    }
    cfg.hidden = a.hidden.unwrap_or(cfg.hidden);
    cfg.layers = a.layers.unwrap_or(cfg.layers);
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn fit(g: &GlobalArgs, a: FitArgs) -> Result<()> {
    let cfg = fit_config(g, &a)?;
    let target = match inputs::load(&a.target)? {
        Loaded::Mesh(mesh) => sample_surface(&mesh, DEFAULT_SAMPLE_DENSITY, cfg.seed),
        Loaded::Points(p) => p,
        Loaded::Mask(mask) => mask.surface_points(),
    };
    if target.is_empty() {
        bail!("target {} has no points", a.target.display());
    }
    let center = match &a.center {
        Some(c) if c.len() == 3 => Vec3::new(c[0], c[1], c[2]),
        Some(_) => bail!("--center expects x,y,z"),
        None => target.iter().fold(Vec3::zeros(), |s, p| s + p) / target.len() as f64,
    };
    if !(a.radius > 0.0 && a.radius.is_finite()) {
        bail!("--radius must be > 0");
    }
    let initial = make_icosphere(a.subdivisions, a.radius, center);
    let features = if a.features.is_empty() {
        None
    } else {
        let vols = a
            .features
            .iter()
            .map(|p| load_volume(p, None, VolumeKind::ScalarField))
            .collect::<Result<Vec<_>, _>>()?;
        Some(FeatureGrid::new(vols)?)
    };
    let result = fit_mesh(&initial, &target, features.as_ref(), &cfg)?;
    inputs::write_mesh(&a.out, &result.mesh)?;
    fs::write(&a.history, history_csv(&result.history))
        .with_context(|| format!("cannot write {}", a.history.display()))?;
    if let Some(last) = result.history.last() {
        println!("iterations={} final_total={:e}", result.history.len(), last.loss.total);
    }

    let mut m = RunManifest::new("fit", cfg.seed, g.threads);
    m.set_kv(&cfg.to_kv_string());
    m.set("subdivisions", a.subdivisions);
    m.set("radius", a.radius);
    m.set("center", format!("{},{},{}", center.x, center.y, center.z));
    m.inputs.push(a.target);
    m.inputs.extend(a.config);
    m.inputs.extend(a.features);
    m.outputs.extend([a.out.clone(), a.history]);
    finish(g, &m, manifest::default_path(&a.out))
}

fn eval(g: &GlobalArgs, a: EvalArgs) -> Result<()> {
    let cfg = EvalConfig {
        density: a.density,
        seed: g.seed.unwrap_or(0),
        threshold: a.threshold,
    };
    let (pk, gk) = (InputKind::of(&a.pred)?, InputKind::of(&a.gt)?);
    if gk != InputKind::Mask {
        bail!("unsupported pairing {}-vs-{}: ground truth must be a mask", pk.name(), gk.name());
    }
    let gt = inputs::load_mask(&a.gt)?;
    let report: MetricsReport = match inputs::load(&a.pred)? {
        Loaded::Mesh(mesh) => evaluate(&mesh, &gt, &cfg)?,
        Loaded::Points(p) => evaluate_points(&p, &gt, &cfg)?,
        Loaded::Mask(mask) => evaluate_masks(&mask, &gt, &cfg)?,
    };
    let fresh = fs::metadata(&a.out).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&a.out)
        .with_context(|| format!("cannot open {}", a.out.display()))?;
    if fresh {
        writeln!(file, "{CSV_HEADER}")?;
    }
    writeln!(file, "{}", report.csv_row())?;
    print!("{report}");

    let mut m = RunManifest::new("eval", cfg.seed, g.threads);
    m.set("pairing", format!("{}-vs-{}", pk.name(), gk.name()));
    m.set("threshold", cfg.threshold);
    m.set("density", cfg.density);
    m.inputs.extend([a.pred, a.gt]);
    m.outputs.push(a.out.clone());
    finish(g, &m, manifest::default_path(&a.out))
}
