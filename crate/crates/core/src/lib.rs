//! Deterministic tooling around a phrase-grounding multimodal model for chest
//! X-rays: the quantized box codec, two-stage instruction templates,
//! patient-level splits, IoU/Dice evaluation with table-style aggregation,
//! a mock grounder, and small-scale LoRA numerics.

pub mod adapter;
pub mod api;
pub mod codec;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod grounder;
pub mod prompt;
pub mod seed;

pub use codec::{FailureKind, NormBox, ParseOutcome};
pub use dataset::{Category, GroundingSample, Split, SplitAssignment};
pub use eval::{EvalReport, SampleScore};
pub use geometry::PixelBox;
