//! The point-contribution network: a spatial transformer, shared point
//! MLPs, the SEF local-feature extractor, pooled global latents, per-point
//! contribution heads summed per branch, and a small combining head with a
//! sigmoid output.
//!
//! Gradients are computed by hand-written reverse passes. All code is
//! generic over [`Real`] so the same network can be checked in `f64`.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod optim;
mod params;
mod train;

pub use checkpoint::{load_params, save_params, Checkpoint, Tensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, GradientEntry};
pub use layers::{Dense, Real};
pub use model::{
    backward, batch_loss, forward, loss_and_gradient, loss_l2, network_forward, stn_transform, ForwardCache,
    SampleTensors,
};
pub use optim::{Adam, AdamConfig};
pub use params::{NetworkDims, NetworkParams, TensorMut, TensorRef, GROUPS};
pub use train::{batch_gradient, dataset_tensors, train, LossRecord, TrainConfig, Trainer};
