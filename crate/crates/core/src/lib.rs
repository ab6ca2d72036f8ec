//! Class-adaptive late fusion of multi-stream classifier scores.
//!
//! Streams enter as per-class score matrices in `[0, 1]`. A class-confusion
//! prior estimated per stream anchors a logistic fusion model whose weights
//! are fit by proximal gradient descent with an l1 sparsity term. Around
//! that core: baseline fusers, accuracy/AP/mAP metrics, a deterministic
//! synthetic dataset generator, and a toy two-layer LSTM trained with BPTT
//! for long-range sequence labeling.

pub mod baselines;
pub mod class_prior;
pub mod error;
pub mod fusion_solver;
pub mod metrics;
pub mod numeric;
pub mod parallel;
pub mod score_data;
pub mod temporal_lstm;

pub use error::{Error, Result};
