//! Multi-Source Visual Attention (MSVA) for supervised video summarization.
//!
//! The model scores every sub-sampled frame of a video with an importance
//! value in (0, 1) by running a windowed self-attention branch over each
//! pre-extracted feature stream (object, rgb, flow), fusing the per-stream
//! latents, and passing the result through a small scoring head. Summaries
//! are then formed by 0/1-knapsack selection over segment scores and judged
//! against human annotations with F1 and rank correlations.
//!
//! Module map:
//! - [`tensor`]: dense f64 tensors with a reverse-mode differentiation tape
//!   and a finite-difference gradient checker
//! - [`model`]: the attention branches, fusion strategies and scoring head
//! - [`train`]: per-fold Adam training with stall-based early stopping and
//!   bit-exact checkpoints
//! - [`data`]: the portable feature-bundle format, non-overlapping k-fold
//!   split generation and a synthetic dataset generator
//! - [`eval`]: score upsampling, knapsack summary selection, F1 against user
//!   summaries, Kendall tau-b / Spearman rho, per-fold reports
//! - [`cli`]: the pipeline commands behind the `msva` binary
//!
//! See the crate's `examples/` directory for one runnable walkthrough per
//! capability.

pub mod cli;
pub mod data;
pub mod eval;
pub mod model;
pub mod rng;
pub mod stream;
pub mod tensor;
pub mod train;

pub use stream::Stream;
pub use tensor::{Tensor, TensorError};
