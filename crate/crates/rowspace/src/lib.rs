//! Parameter-efficient deep learning layers built on transpose weight tying.
//!
//! A weight matrix `W` maps into its column space; `Wᵀ` maps into its row
//! space. With a nonlinearity between the two applications, one stored
//! matrix can serve both roles of a layer that conventionally needs two.
//! This crate implements that idea end to end:
//!
//! - a from-scratch reverse-mode autodiff core whose accumulate-on-backward
//!   rule makes weight tying correct by construction ([`tape`], [`ops`]),
//! - conventional attention / feed-forward / bottleneck layers ([`nn`]) and
//!   their tied counterparts ([`pe`]),
//! - declarative ViT / ResNet-50 model construction ([`model`]),
//! - an exact parameter and multiply-accumulate auditor ([`audit`]),
//! - a toy training harness, gradient checker and binary checkpoints
//!   ([`data`], [`optim`], [`train`], [`gradcheck`], [`checkpoint`]),
//! - the `rowspace` CLI ([`cli`]).
//!
//! The narrative guide lives in `book/`; its code snippets are compiled as
//! doc-tests through the [`guide`] module.

pub mod audit;
pub mod checkpoint;
pub mod cli;
pub mod data;
mod error;
pub mod gradcheck;
pub mod guide;
mod kernels;
pub mod model;
mod module;
pub mod nn;
pub mod ops;
pub mod optim;
mod param;
pub mod pe;
mod scalar;
mod tape;
mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use module::{Mode, Module};
pub use param::{dedup_params, InitKind, Parameter};
pub use scalar::{Dtype, Scalar};
pub use tape::Tape;
pub use tensor::Tensor;
