//! Multi-view multi-row attention fusion classifier.

pub mod attention;
pub mod encoder;
pub mod model;
pub mod segment;
pub mod train;

use crate::ir::Dimension;

pub use attention::{attention_backward, fuse_attention, Attention, AttentionGrad};
pub use encoder::{Hidden, MixingEncoder, RowEncoder};
pub use model::{loss_and_grad, multiview_forward, FusionModel, FusionState, Forward};
pub use segment::{segment_input, MultiViewInput, Rows, SegmentConfig, TokenHasher, ENT_ID, ENT_TOKEN, PAD_ID};
pub use train::{
    predict_fusion, train_fusion, Adam, EpochMetrics, FusionConfig, FusionOutcome, RunMetrics, TrainedFusion,
    REFERENCE_LEARNING_RATE,
};

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("every attention position is masked")]
    AllMasked,
    #[error("training set for {dimension} needs both poles: {first}={n_first}, {second}={n_second}")]
    DegenerateTrainingSet { dimension: Dimension, first: char, n_first: usize, second: char, n_second: usize },
    #[error("model dimension {model} does not match requested {requested}")]
    DimensionMismatch { model: Dimension, requested: Dimension },
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
}
