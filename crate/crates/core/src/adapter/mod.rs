//! Small-scale numerics for the trainable adapter pieces: visual token
//! merging, the linear projection into the language model, LoRA layers with
//! a frozen base weight, the cosine learning-rate schedule, and a
//! gradient-checked full-batch trainer.
//!
//! Everything here is double precision and dependency-light; shapes are
//! tiny and meant for verification, not throughput.

mod lora;
mod matrix;
mod schedule;
mod tokens;

use thiserror::Error;

pub use lora::{
    grad_check, lora_forward, lora_gradients, lora_merge, mse_loss, toy_train, LoraGrads,
    LoraLinear, PlantedTask, FD_STEP, LORA_INIT_STD,
};
pub use matrix::{Matrix, TokenMatrix};
pub use schedule::CosineSchedule;
pub use tokens::{merge_tokens, project, TOKEN_GROUP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdapterError {
    #[error("{rows} tokens cannot be merged in groups of {group}")]
    Indivisible { rows: usize, group: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("matrix contains non-finite values")]
    NonFinite,
    #[error("step {step} outside schedule of {total_steps} steps")]
    StepOutOfRange { step: usize, total_steps: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid LoRA configuration: {0}")]
    InvalidLora(String),
}
