//! Datasets, partitioning, desk-scale models and the sign-based update.

mod dataset;
mod mnist;
mod model;
mod partition;

pub use dataset::{make_synthetic, Dataset};
pub use mnist::{load_mnist_idx, parse_idx_images, parse_idx_labels};
pub use model::{
    apply_mv_update, evaluate, local_gradient, local_update, sign_quantize, Arch, GradientVector,
    Model,
};
pub use partition::{partition, partition_summary, NodeSummary, PartitionMode};
