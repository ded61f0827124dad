//! The federated objective: synthetic data, label-skewed partitioning, a
//! small softmax classifier, and local momentum SGD.

mod data;
mod model;
mod train;

pub use data::{
    dirichlet_partition, parse_dataset_text, read_dataset_text, synth_dataset, write_dataset_text, Dataset,
    GaussianMixture, Partition,
};
pub use model::{Architecture, Model};
pub use train::{
    compute_trusted_update, estimate_smoothness, evaluate, gradient_heterogeneity, gradient_norm_sq, gradient_variance,
    local_train, sample_batch, MomentumState, TrainParams,
};
