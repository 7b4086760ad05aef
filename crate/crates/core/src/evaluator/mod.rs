//! State evaluation: a prior over actions and a success estimate in `[0, 1]`.

mod checkpoint;
mod encode;
mod network;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointError,
    CheckpointMeta, MAGIC,
};
pub use encode::{
    SceneEncoder, StateTensor, CHANNELS, CH_CURRENT, CH_DESTINATION, CH_GEAR, CH_PARENT, CH_STEER, GRID_SIZE,
    OCCUPANCY_CHANNELS,
};
pub use network::{sample_loss, Network, NetworkError, NetworkShape, TensorSpec, Trainer, TrainingSample};

use crate::vehicle::MotionState;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub policy: Vec<f64>,
    pub value: f64,
}

pub trait Evaluator: Sync {
    fn action_count(&self) -> usize;

    fn evaluate(&self, scene: &SceneEncoder, state: &MotionState, parent: &MotionState) -> Evaluation;
}

/// Flat prior and a neutral value; the search baseline before any training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformEvaluator {
    pub actions: usize,
}

impl Evaluator for UniformEvaluator {
    fn action_count(&self) -> usize {
        self.actions
    }

    fn evaluate(&self, _scene: &SceneEncoder, _state: &MotionState, _parent: &MotionState) -> Evaluation {
        Evaluation {
            policy: vec![1.0 / self.actions as f64; self.actions],
            value: 0.5,
        }
    }
}

impl Evaluator for Network {
    fn action_count(&self) -> usize {
        self.shape().actions
    }

    fn evaluate(&self, scene: &SceneEncoder, state: &MotionState, parent: &MotionState) -> Evaluation {
        let input = scene.encode(state, parent);
        let (policy, value) = self.forward(&input).expect("scene encoder matches the network grid");
        Evaluation { policy, value }
    }
}

#[cfg(test)]
mod tests;
