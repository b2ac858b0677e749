//! Deformable mesh fitting: graph convolution over mesh graphs, face
//! unpooling, the composite geometric loss and the cascaded fitting loop.

mod fit;
mod gcn;
mod gradcheck;
mod graph;
mod loss;

pub use fit::{fit_mesh, history_csv, Adam, FitConfig, FitMode, FitResult, LossRecord, DIVERGENCE_FACTOR};
pub use gcn::GcnNet;
pub use gradcheck::{grad_check, GradCheckReport, LossKind, FD_STEP, MIN_COORDINATES};
pub use graph::{coordinate_features, graph_conv, make_icosphere, unpool, GraphConvLayer, MeshGraph};
pub use loss::{
    chamfer_loss, chamfer_points, edge_loss, laplacian_loss, normal_consistency_loss, total_loss, Chamfer, FaceSamples,
    LossBreakdown, LossContext, LossGrad, LossWeights, MeshTopology,
};
