//! Two-stage mesh fitting with Adam over residual vertex offsets.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::gcn::GcnNet;
use super::graph::{unpool, MeshGraph};
use super::loss::{LossBreakdown, LossContext, LossWeights};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::kv::parse_kv;
use crate::mesh::TriMesh;
use crate::volume::FeatureGrid;

/// Abort once the total loss exceeds this multiple of its first (nonzero) value.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Offsets are the optimized variables.
    Direct,
    /// Offsets come from a graph-convolution network whose weights are optimized.
    Gcn,
}

impl FromStr for FitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" | "direct-vertex" => Ok(FitMode::Direct),
            "gcn" | "gcn-parameterized" => Ok(FitMode::Gcn),
            other => Err(format!("unknown mode `{other}` (expected direct or gcn)")),
        }
    }
}

impl std::fmt::Display for FitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMode::Direct => "direct",
            FitMode::Gcn => "gcn",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iters_stage1: usize,
    pub iters_stage2: usize,
    /// Stage-1 iterations before which the mesh is unpooled.
    pub unpool_at: Vec<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub mode: FitMode,
    pub weights: LossWeights,
    pub seed: u64,
    /// Hidden width of the network (gcn mode).
    pub hidden: usize,
    /// Number of graph-convolution layers (gcn mode).
    pub layers: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iters_stage1: 500,
            iters_stage2: 300,
            unpool_at: vec![150, 300],
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            mode: FitMode::Direct,
            weights: LossWeights::default(),
            seed: 0,
            hidden: 64,
            layers: 3,
        }
    }
}

impl FitConfig {
    /// Defaults overridden by the `key = value` lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = FitConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Overrides fields from `key = value` lines.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for e in parse_kv(text)? {
            match e.key.as_str() {
                "lambda1" => self.weights.chamfer = e.f64()?,
                "lambda2" => self.weights.laplacian = e.f64()?,
                "lambda3" => self.weights.normal = e.f64()?,
                "lambda4" => self.weights.edge = e.f64()?,
                "lr" => self.lr = e.f64()?,
                "iters_stage1" => self.iters_stage1 = e.usize()?,
                "iters_stage2" => self.iters_stage2 = e.usize()?,
                "unpool_at" => self.unpool_at = e.usize_list()?,
                "mode" => self.mode = e.value.parse().map_err(|m: String| e.err(m))?,
                "seed" => self.seed = e.u64()?,
                "hidden" => self.hidden = e.usize()?,
                "layers" => self.layers = e.usize()?,
                "beta1" => self.beta1 = e.f64()?,
                "beta2" => self.beta2 = e.f64()?,
                _ => return Err(e.unknown()),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if let Some(&k) = self.unpool_at.iter().find(|&&k| k >= self.iters_stage1) {
            return Err(Error::InvalidArgument(format!(
                "unpool_at {k} lies outside stage 1 ({} iterations)",
                self.iters_stage1
            )));
        }
        if self.mode == FitMode::Gcn && (self.hidden == 0 || self.layers == 0) {
            return Err(Error::InvalidArgument("gcn mode needs hidden >= 1 and layers >= 1".into()));
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let w = self.weights;
        let list: Vec<String> = self.unpool_at.iter().map(|k| k.to_string()).collect();
        let mut s = String::new();
        for (k, v) in [
            ("lambda1", w.chamfer.to_string()),
            ("lambda2", w.laplacian.to_string()),
            ("lambda3", w.normal.to_string()),
            ("lambda4", w.edge.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("iters_stage1", self.iters_stage1.to_string()),
            ("iters_stage2", self.iters_stage2.to_string()),
            ("unpool_at", list.join(",")),
            ("mode", self.mode.to_string()),
            ("seed", self.seed.to_string()),
            ("hidden", self.hidden.to_string()),
            ("layers", self.layers.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Loss components evaluated before the update of iteration `iter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub mesh: TriMesh,
    pub history: Vec<LossRecord>,
}

/// CSV `iter,total,cd,lap,nc,eg`, one row per record.
pub fn history_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("iter,total,cd,lap,nc,eg\n");
    for r in history {
        let l = r.loss;
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.iter, l.total, l.chamfer, l.laplacian, l.normal, l.edge
        );
    }
    s
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Input normalization shared by every block of one fit.
#[derive(Debug, Clone, Copy)]
struct Frame {
    center: Vec3,
    scale: f64,
}

/// Offsets on top of a frozen base mesh, from one optimizer state.
struct Block<'a> {
    graph: MeshGraph,
    ctx: LossContext<'a>,
    kind: BlockKind,
    adam: Adam,
}

enum BlockKind {
    Direct { offsets: Vec<f64> },
    Gcn { net: GcnNet, params: Vec<f64>, input: DMatrix<f64>, frame: Frame },
}

impl<'a> Block<'a> {
    fn new(
        mesh: TriMesh,
        target: &'a [Vec3],
        features: Option<&FeatureGrid>,
        cfg: &FitConfig,
        frame: Frame,
        level: u64,
        index: u64,
    ) -> Result<Self> {
        // Face samples change only with the topology.
        let ctx = LossContext::new(&mesh, target, cfg.weights, block_seed(cfg.seed, level))?;
        let graph = MeshGraph::from_mesh(mesh);
        let (kind, n) = match cfg.mode {
            FitMode::Direct => {
                let n = 3 * graph.len();
                (BlockKind::Direct { offsets: vec![0.0; n] }, n)
            }
            FitMode::Gcn => {
                let input = network_input(&graph, features, frame);
                let net = GcnNet::new(input.ncols(), cfg.hidden, cfg.layers, block_seed(cfg.seed, index) ^ 0x5bd1_e995);
                let params = net.params();
                let n = params.len();
                (
                    BlockKind::Gcn {
                        net,
                        params,
                        input,
                        frame,
                    },
                    n,
                )
            }
        };
        Ok(Block {
            graph,
            ctx,
            kind,
            adam: Adam::new(n, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps),
        })
    }

    fn positions(&self) -> Vec<Vec3> {
        let base = &self.graph.mesh.vertices;
        match &self.kind {
            BlockKind::Direct { offsets } => base
                .iter()
                .enumerate()
                .map(|(i, p)| p + Vec3::new(offsets[3 * i], offsets[3 * i + 1], offsets[3 * i + 2]))
                .collect(),
            BlockKind::Gcn { net, input, frame, .. } => {
                let (out, _) = net.forward(&self.graph, input);
                base.iter()
                    .enumerate()
                    .map(|(i, p)| p + Vec3::new(out[(i, 0)], out[(i, 1)], out[(i, 2)]) * frame.scale)
                    .collect()
            }
        }
    }

    /// Evaluates the loss at the current state and takes one Adam step.
    fn step(&mut self) -> Result<LossBreakdown> {
        let p = self.positions();
        let (loss, grad) = self.ctx.evaluate(&p)?;
        match &mut self.kind {
            BlockKind::Direct { offsets } => {
                let flat: Vec<f64> = grad.iter().flat_map(|g| [g.x, g.y, g.z]).collect();
                self.adam.step(offsets, &flat);
            }
            BlockKind::Gcn {
                net,
                params,
                input,
                frame,
            } => {
                let (_, cache) = net.forward(&self.graph, input);
                let d_out = DMatrix::from_fn(grad.len(), 3, |i, c| grad[i][c] * frame.scale);
                let g = net.backward(&self.graph, &cache, &d_out);
                self.adam.step(params, &g);
                net.set_params(params);
            }
        }
        Ok(loss)
    }

    fn into_mesh(self) -> TriMesh {
        let p = self.positions();
        TriMesh {
            vertices: p,
            faces: self.graph.mesh.faces,
        }
    }
}

fn block_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Normalized coordinates followed by the sampled feature channels.
fn network_input(graph: &MeshGraph, features: Option<&FeatureGrid>, frame: Frame) -> DMatrix<f64> {
    let extra = features.map_or(0, |f| f.channels());
    let mut x = DMatrix::zeros(graph.len(), 3 + extra);
    for (i, p) in graph.mesh.vertices.iter().enumerate() {
        let q = (p - frame.center) / frame.scale;
        for c in 0..3 {
            x[(i, c)] = q[c];
        }
        if let Some(f) = features {
            for (c, v) in f.sample_trilinear(p).into_iter().enumerate() {
                x[(i, 3 + c)] = v;
            }
        }
    }
    x
}

/// Runs stage 1 (with unpooling at `unpool_at`) then stage 2 (none).
///
/// Each unpool and the start of stage 2 freeze the current mesh as the new
/// base and restart the optimizer; in gcn mode a fresh network is drawn.
pub fn fit_mesh(
    initial: &MeshGraph,
    target: &[Vec3],
    features: Option<&FeatureGrid>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if initial.mesh.faces.is_empty() {
        return Err(Error::Empty("initial mesh has no faces".into()));
    }
    let bb = initial.mesh.bounds();
    let frame = Frame {
        center: (bb.min + bb.max) * 0.5,
        scale: (0.5 * (bb.max - bb.min).max()).max(1e-9),
    };
    let total = cfg.iters_stage1 + cfg.iters_stage2;
    let (mut level, mut index) = (0u64, 0u64);
    let mut block = Block::new(initial.mesh.clone(), target, features, cfg, frame, level, index)?;
    let mut history = Vec::with_capacity(total);
    let mut first: Option<f64> = None;
    for it in 0..total {
        let unpool_now = it < cfg.iters_stage1 && cfg.unpool_at.contains(&it);
        let stage2_start = it == cfg.iters_stage1 && it > 0;
        if unpool_now || stage2_start {
            let mut mesh = block.into_mesh();
            if unpool_now {
                mesh = unpool(&MeshGraph::from_mesh(mesh)).mesh;
                level += 1;
                log::debug!("iteration {it}: unpooled to {} vertices", mesh.vertices.len());
            }
            index += 1;
            block = Block::new(mesh, target, features, cfg, frame, level, index)?;
        }
        let loss = block.step()?;
        let initial_total = *first.get_or_insert(loss.total);
        let runaway = initial_total > 0.0 && loss.total > DIVERGENCE_FACTOR * initial_total;
        if !loss.total.is_finite() || runaway {
            return Err(Error::Diverged {
                iteration: it,
                value: loss.total,
                initial: initial_total,
            });
        }
        history.push(LossRecord { iter: it, loss });
    }
    Ok(FitResult {
        mesh: block.into_mesh(),
        history,
    })
}
