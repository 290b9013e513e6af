//! Full architectures: hybrid CNN and LSTM (early fusion), late fusion,
//! covariate replication and covariate-free baselines, plus the two-branch
//! gated fixture and the checkpoint format.

mod checkpoint;
mod gated;
mod model;
mod spec;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC,
};
pub use gated::{check_one_hot, gated_feature_fixture, GatedFeatureModel};
pub use model::{Model, ParamInfo};
pub use spec::{ArchitectureSpec, Family, FusionMode, LATE_FUSE_WIDTH};

use crate::error::Result;
use crate::numeric::{NodeId, Tape, Tensor};
use crate::pipeline::Sample;

/// Seeds for training-time randomness: covariate-dropout masks are drawn per
/// minibatch, dropout masks per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseSeeds {
    pub batch: u64,
    pub sample: u64,
}

/// A recorded per-sample loss.
pub struct LossTape {
    pub tape: Tape,
    /// Parameter leaves, in the network's parameter order.
    pub params: Vec<NodeId>,
    pub loss: NodeId,
}

/// Anything the trainer can fit.
pub trait Network: Clone + Send + Sync {
    fn parameters(&self) -> &[Tensor];
    fn parameters_mut(&mut self) -> &mut [Tensor];
    fn parameter_names(&self) -> Vec<String>;
    fn num_classes(&self) -> usize;
    fn dropout(&self) -> f64;
    fn loss_tape(&self, sample: &Sample, noise: Option<NoiseSeeds>) -> Result<LossTape>;
    fn classify(&self, sample: &Sample) -> Result<usize>;
}
