//! Fair demographic annotator: a small MLP over frozen image features,
//! trained with a Vector-Scaling imbalance loss, an optimal-transport
//! fairness penalty on its representation, and sharpness-aware updates.

pub mod fairness;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod sinkhorn;
pub mod train;

pub use fairness::{fairness_loss, FairnessLoss};
pub use loss::{vs_loss, ClassStats};
pub use mlp::MlpParams;
pub use sinkhorn::{sinkhorn, SinkhornConfig, SinkhornState};
pub use train::{
    load_model, loss_and_grad, predict, predict_rows, save_model, train, AnnotatorModel,
    Prediction, Task, TrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum AnnotatorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("feature dimension {found} does not match the model input {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("parameters became non-finite during epoch {0}")]
    Diverged(usize),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
