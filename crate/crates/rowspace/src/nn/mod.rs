//! Conventional (untied) layers: the baselines the tied layers are
//! measured against, plus the ViT/ResNet scaffolding.
//!
//! Each layer's math lives in a `*_core` function taking plain weight
//! tensors. The tied counterparts in [`crate::pe`] call the same cores with
//! transpose views, so a tied forward and its untied twin initialized at
//! `(W, Wᵀ)` run the identical instruction sequence.

mod attention;
mod bottleneck;
mod ffn;
mod linear;
mod norm;
mod patch;

pub use attention::{mha_core, MhaLayer, MhaWeights};
pub use bottleneck::{bottleneck_core, BottleneckBlock, BottleneckParts};
pub use ffn::{ffn_core, FfnLayer};
pub use linear::{linear_core, LinearLayer};
pub use norm::{BatchNorm2d, LayerNorm};
pub use patch::PatchEmbed;
