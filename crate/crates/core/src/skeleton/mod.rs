//! Key-point trees of tubular masks: 3-D thinning, minimum-spanning-tree
//! construction, spur pruning and root-to-leaf branch splitting.

mod thinning;
mod tree;

pub use thinning::{thin_mask, thin_skeletonize};
pub use tree::{
    build_tree, build_tree_with_report, prune_spurs, read_tree, split_branches, write_tree, BranchPath,
    KeyPoint, KeyPointTree, TreeBuild,
};
