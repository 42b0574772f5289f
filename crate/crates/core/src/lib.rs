//! Training core for noise-robust, saliency-aware video-music retrieval.
//!
//! Everything here is pure computation over in-memory feature banks: a small
//! reverse-mode autodiff engine, the two-branch embedding network, the triplet,
//! consistency and mix objectives, loss-based noisy-label partitioning, span-level
//! saliency mixup, back retrieval and Recall@K evaluation. File formats and the
//! command line live in the `ssvmr` crate.
#![no_std]
#![warn(rust_2018_idioms, unused_qualifications)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ablation;
pub mod autodiff;
pub mod back_retrieval;
pub mod backbone;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod losses;
pub mod noise;
pub mod optim;
pub mod rng;
pub mod saliency;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
