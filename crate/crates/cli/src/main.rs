//! `vesselmesh`: synthesize phantoms, skeletonize masks, annotate masks with
//! watertight meshes, fit deformable meshes and evaluate results.
//!
//! Every run writes one JSON manifest. Failures print a single
//! `error: <message>` line on stderr and exit nonzero (2 for usage errors).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod inputs;
mod manifest;

#[derive(Debug, Parser)]
#[command(name = "vesselmesh", version, about = "Watertight vessel meshes from voxel labels")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed; overrides any seed in a config or spec file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 selects the sequential path.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Manifest path; defaults to a file next to the primary output.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a phantom mask, mesh and key-point tree from a spec file.
    Synth(SynthArgs),
    /// Thin a mask into a key-point tree.
    Skeletonize(SkeletonizeArgs),
    /// Reconstruct a watertight mesh from a mask.
    Annotate(AnnotateArgs),
    /// Fit an icosphere to a mesh, point or mask target.
    Fit(FitArgs),
    /// Append one metrics row comparing a prediction with a ground-truth mask.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `key = value` phantom spec.
    pub spec: PathBuf,
    /// Output directory, created if missing.
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SkeletonizeArgs {
    /// Binary mask (VMV1 or NIfTI-1).
    pub mask: PathBuf,
    /// Output key-point tree (VMTREE1).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one VMCL1 centerline per root-to-leaf branch here.
    #[arg(long)]
    pub centerlines: Option<PathBuf>,
    #[arg(long)]
    pub spur_factor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Binary mask (VMV1 or NIfTI-1).
    pub mask: PathBuf,
    /// Output mesh; `.ply` writes binary PLY, anything else OBJ.
    #[arg(long)]
    pub out: PathBuf,
    /// Key-point tree to use instead of thinning.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// `key = value` file with any of the keys below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Angular smoothing, samples.
    #[arg(long)]
    pub sigma_angular: Option<f64>,
    /// Longitudinal smoothing, rings.
    #[arg(long)]
    pub sigma_longitudinal: Option<f64>,
    /// Ray marching step, mm.
    #[arg(long)]
    pub ray_step: Option<f64>,
    /// Key-point decimation, mm; 0 disables it.
    #[arg(long)]
    pub decimation: Option<f64>,
    #[arg(long)]
    pub rays: Option<usize>,
    /// Centerline sample spacing, mm.
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub spur_factor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Target: mesh (.obj/.ply), points (.xyz/.txt/.pts) or mask (.vmv/.nii).
    #[arg(long)]
    pub target: PathBuf,
    /// `key = value` fit config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output mesh; `.ply` writes binary PLY, anything else OBJ.
    #[arg(long)]
    pub out: PathBuf,
    /// Output loss history CSV.
    #[arg(long)]
    pub history: PathBuf,
    /// Scalar volumes sampled as per-vertex features (gcn mode).
    #[arg(long)]
    pub features: Vec<PathBuf>,
    /// Icosphere subdivision level of the initial mesh.
    #[arg(long, default_value_t = 2)]
    pub subdivisions: usize,
    /// Initial radius, mm.
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,
    /// Initial center `x,y,z`; defaults to the target centroid.
    #[arg(long, value_delimiter = ',')]
    pub center: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub lambda4: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters_stage1: Option<usize>,
    #[arg(long)]
    pub iters_stage2: Option<usize>,
    /// Comma-separated stage-1 iterations.
    #[arg(long, value_delimiter = ',')]
    pub unpool_at: Option<Vec<usize>>,
    /// `direct` or `gcn`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction: mesh, points or mask.
    pub pred: PathBuf,
    /// Ground truth mask.
    pub gt: PathBuf,
    /// Metrics CSV; the header is written when the file is new or empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Hit threshold, mm.
    #[arg(long, default_value_t = vesselmesh::metrics::DEFAULT_HIT_THRESHOLD)]
    pub threshold: f64,
    /// Mesh surface samples per mm².
    #[arg(long, default_value_t = vesselmesh::metrics::DEFAULT_SAMPLE_DENSITY)]
    pub density: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out.replace(['\n', '\r'], " ")
}
