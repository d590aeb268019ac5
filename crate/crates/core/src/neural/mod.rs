//! Sequence models for caching and prefetch decisions, their losses,
//! gradients, training loop and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod train;

pub use checkpoint::{load_checkpoint, load_for_inference, parse_checkpoint, render_checkpoint, save_checkpoint};
pub use loss::{chamfer_loss, chamfer_loss_grad, chamfer_one_sided, cross_entropy_loss, LossConfig, LossKind, PrefetchTarget};
pub use model::{decode_indices, forward_caching, forward_prefetch, normalize_id};
pub use optim::Adam;
pub use params::{Gradients, Hyper, Init, ModelKind, ModelParameters, ParamTensor};
pub use train::{
    backward, caching_accuracy, eligible, output_spread, predict_prefetch_ids, prefetch_correctness, train, train_until_diverged, EpochReport,
    TrainConfig, TrainRun,
};
