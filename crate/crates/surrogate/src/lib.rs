//! Neural surrogate for frame displacement fields: a split-input network,
//! its training losses, gradient-normalized task weighting and Adam.

pub mod error;
pub mod gradnorm;
pub mod losses;
pub mod model;
pub mod network;
pub mod normalize;
pub mod optim;
pub mod train;

pub use error::{Result, SurrogateError};
pub use gradnorm::{gradnorm_step, gradnorm_update, GradNormStep, TaskWeights};
pub use model::{ModelArtifact, Prediction, SurrogateModel, MODEL_SCHEMA_VERSION};
pub use network::{
    backward_params, forward, input_gradient, Activation, Architecture, Batch, Forward, Layer, Mlp, NetworkParameters,
};
pub use normalize::NormalizationStats;
pub use optim::{sgd_step, Adam, AdamConfig, OptimizerState};
pub use train::{
    train, train_from, EpochRecord, MaterialPenalty, SobolevConfig, StepEvaluation, TrainOutcome, Trainer,
    TrainingConfig, TrainingResult, TrainingSet, TrainingState,
};
