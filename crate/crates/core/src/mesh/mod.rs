//! Indexed triangle meshes and the operations the pipeline needs on them:
//! integrity checks, boolean union, winding numbers, voxelization, surface
//! sampling and point-to-surface distances.

mod boolean;
mod distance;
mod integrity;
mod io;
mod sample;
pub(crate) mod trimesh;
mod voxelize;
mod winding;

pub use boolean::{mesh_union, mesh_union_all, UnionOptions};
pub use boolean::self_intersections;
pub use distance::SurfaceDistance;
pub use integrity::{integrity_report, IntegrityReport};
pub use io::{read_mesh, read_obj, read_ply, write_obj, write_ply};
pub use sample::sample_surface;
pub use trimesh::{EdgeMap, TriMesh};
pub use voxelize::{voxelize, voxelize_unchecked};
pub use winding::{winding_number, winding_number_crossings};

/// Volume of the region enclosed by a closed, outward-oriented mesh.
pub fn enclosed_volume(mesh: &TriMesh) -> f64 {
    mesh.signed_volume()
}
