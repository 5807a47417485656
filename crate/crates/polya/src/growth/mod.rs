//! Growth processes driven by periodic urns.

pub mod crp;
pub mod stirling;
pub mod tree;

pub use crp::{crp_step, verify_crp_tree_equivalence, CrpParams, PartitionState};
pub use stirling::{perm_to_tree, stirling_count, stirling_grow, tree_to_perm, PeriodicStirlingPerm};
pub use tree::{Forest, ForestConfig, NodeKind, OffsetMode, TreeFamily};
