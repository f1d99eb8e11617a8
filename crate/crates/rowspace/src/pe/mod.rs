//! Transpose-tied (parameter-efficient) layers.
//!
//! Where a conventional layer stores two matrices to project in and back
//! out, these layers store one matrix `W` and use it in two roles: `W` maps
//! into its column space, the transpose view `Wᵀ` into its row space, with a
//! nonlinearity between the applications. Both roles share storage, so
//! matrix parameter counts halve while the computation (and MAC count)
//! stays identical; backward accumulates both roles' contributions into the
//! single gradient buffer.

mod attention;
mod bottleneck;
mod ffn;

pub use attention::TiedMhaLayer;
pub use bottleneck::{SharedStage, StageEntryBlock, TiedBottleneckBlock};
pub use ffn::TiedFfnLayer;
