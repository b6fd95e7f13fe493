//! Self-supervised network reconstruction: a randomly initialized network
//! maps a fixed random field to an image and is optimized until the image's
//! simulated bucket signal matches the measured one.

pub mod model;
pub mod spec;
pub mod train;

pub use model::{build_model, Model, ReconInput, ShapeTrace};
pub use spec::{Architecture, InputDistribution, LatentMode, ModelSpec};
pub use train::{
    physics_loss, reconstruct, reconstruct_tracked, train_reconstruct, train_reconstruct_tracked, Adam, LossReduction,
    TrainConfig, TrainResult,
};
