//! Central finite-difference verification of the analytic loss gradients.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{chamfer_loss, edge_at, laplacian_at, normal_consistency_at, LossGrad, MeshTopology};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriMesh;

/// Finite-difference step, mm.
pub const FD_STEP: f64 = 1e-5;
/// Coordinates probed per check.
pub const MIN_COORDINATES: usize = 30;

#[derive(Debug, Clone, Copy)]
pub enum LossKind<'a> {
    /// Chamfer between the mesh vertices and a fixed target.
    Chamfer(&'a [Vec3]),
    Laplacian,
    NormalConsistency,
    Edge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates redrawn because a nearest-neighbour match changed.
    pub skipped: usize,
    pub passed: bool,
}

struct Eval {
    value: f64,
    grad: Vec<Vec3>,
    matches: Option<(Vec<usize>, Vec<usize>)>,
}

fn evaluate(kind: LossKind, topo: &MeshTopology, p: &[Vec3]) -> Result<Eval> {
    let plain = |l: LossGrad| Eval {
        value: l.value,
        grad: l.grad,
        matches: None,
    };
    Ok(match kind {
        LossKind::Chamfer(target) => {
            let c = chamfer_loss(p, target)?;
            Eval {
                value: c.value,
                grad: c.grad,
                matches: Some((c.a_to_b, c.b_to_a)),
            }
        }
        LossKind::Laplacian => plain(laplacian_at(topo, p)?),
        LossKind::NormalConsistency => plain(normal_consistency_at(topo, p)?),
        LossKind::Edge => plain(edge_at(topo, p)?),
    })
}

/// Compares analytic and central-difference derivatives on `coordinates`
/// (at least 30) random vertex coordinates. Relative error is
/// `|analytic − numeric| / max(1e-8, |numeric|)`.
pub fn grad_check(
    kind: LossKind,
    mesh: &TriMesh,
    coordinates: usize,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if mesh.vertices.is_empty() {
        return Err(Error::Empty("grad check needs vertices".into()));
    }
    let wanted = coordinates.max(MIN_COORDINATES);
    let topo = MeshTopology::new(mesh);
    let base = evaluate(kind, &topo, &mesh.vertices)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        passed: true,
    };
    let max_draws = 20 * wanted;
    let mut p = mesh.vertices.clone();
    for _ in 0..max_draws {
        if report.checked == wanted {
            break;
        }
        let v = rng.random_range(0..p.len());
        let c = rng.random_range(0..3usize);
        let orig = p[v][c];
        p[v][c] = orig + FD_STEP;
        let up = evaluate(kind, &topo, &p)?;
        p[v][c] = orig - FD_STEP;
        let down = evaluate(kind, &topo, &p)?;
        p[v][c] = orig;
        if base.matches.is_some() && (up.matches != base.matches || down.matches != base.matches) {
            report.skipped += 1;
            continue;
        }
        let numeric = (up.value - down.value) / (2.0 * FD_STEP);
        let analytic = base.grad[v][c];
        let rel = (analytic - numeric).abs() / numeric.abs().max(1e-8);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    if report.checked < wanted {
        return Err(Error::InvalidArgument(format!(
            "grad check: only {} of {wanted} coordinates free of nearest-neighbour ties",
            report.checked
        )));
    }
    report.passed = report.max_rel_error <= tolerance;
    Ok(report)
}
