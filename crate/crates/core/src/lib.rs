//! Balanced attention entropy for retrieval-augmented generation.
//!
//! Attention over many retrieved documents grows more diffuse as the context
//! gets longer: the entropy of a softmax over `n` Gaussian logits grows like
//! `ln n`. This crate adds a per-document additive bias (the *balancing
//! factor*, β) to the attention logits and provides the machinery around it:
//!
//! - [`tensor`] and [`rng`]: small dense linear algebra, stable softmax and
//!   entropy, reproducible Gaussian draws and orthogonal initialization.
//! - [`attention`]: scaled dot-product attention with a per-key bias and an
//!   additive `-inf` mask, plus per-row entropies.
//! - [`theory`]: the closed-form entropy approximation for Gaussian logits and
//!   Gaussian β, the invariance constraint and its σ solver, and a Monte Carlo
//!   estimator to check both.
//! - [`balancing`]: chunk layouts, normalization of raw document scores to a
//!   target (μ, σ), token expansion, and scorers.
//! - [`parallel`]: attention masks isolating documents from one another.
//! - [`adaptive`]: learned β from a low-rank sentence-vector transform, with
//!   analytic gradients and a small trainer.
//! - [`bench`]: a synthetic needle-in-documents benchmark.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

mod error;

pub mod adaptive;
pub mod attention;
pub mod balancing;
pub mod bench;
pub mod parallel;
pub mod rng;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Matrix;
