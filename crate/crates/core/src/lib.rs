//! Reconstruction, fitting and evaluation of watertight meshes for tubular
//! trees such as the coronary arteries.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`volume`]: voxel grids (labels and scalar feature grids), file I/O,
//!   connected components, Dice overlap and trilinear sampling.
//! - [`skeleton`]: 3-D thinning, key-point trees and root-to-leaf branches.
//! - [`centerline`]: interpolating cubic splines, uniform arc-length
//!   resampling and rotation-minimizing frames.
//! - [`reconstruct`]: cross-section ray casting, radius smoothing and ring
//!   stitching into per-branch tube meshes.
//! - [`mesh`]: the triangle mesh type, integrity checks, boolean union,
//!   winding numbers and voxelization.
//! - [`deform`]: graph convolution, unpooling, the composite fitting loss and
//!   the two-stage fitting loop.
//! - [`metrics`]: Dice, Hausdorff, ASSD, chamfer, smoothness, segment count
//!   and hit ratios.
//! - [`synth`]: analytic vessel phantoms used as ground truth.
//! - [`pipeline`]: the end-to-end annotation pipeline (mask to mesh).
//!
//! All coordinates are world millimetres.

pub mod centerline;
pub mod deform;
pub mod error;
pub mod geom;
pub mod kv;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod reconstruct;
pub mod skeleton;
pub mod spatial;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use geom::Vec3;
pub use mesh::TriMesh;
pub use volume::VoxelVolume;
