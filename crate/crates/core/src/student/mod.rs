//! Reference student: hashed bag-of-n-grams features feeding a multinomial
//! logistic regression trained by mini-batch SGD with early stopping.

mod checkpoint;
mod featurize;
mod model;
mod train;

use thiserror::Error;

use crate::corpus::{ClassId, SampleId};

pub use featurize::{featurize, FeaturizerConfig, SparseFeatures};
pub use model::{log_softmax, loss, objective_gradient, softmax, Classifier, Gradient, StudentModel};
pub use train::{train, train_from, StudentConfig, TrainingLog, BERT_REFERENCE_LEARNING_RATE};

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {id} has label {label} outside the taxonomy")]
    InvalidLabel { id: SampleId, label: ClassId },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parameter shape mismatch: {classes} classes x {dimension} dims, got {weights} weights / {bias} bias")]
    ShapeMismatch {
        classes: usize,
        dimension: usize,
        weights: usize,
        bias: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
