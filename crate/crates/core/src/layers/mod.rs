//! Building blocks of the hybrid decoder.

mod attention;
mod mlp;
mod moe;
mod norm;
mod ssm;

pub use attention::{Attention, KvCache};
pub use mlp::SwiGlu;
pub use moe::{top_k_indices, Moe, MoeOutput, RoutingRecord};
pub use norm::{RmsNorm, DEFAULT_EPS};
pub use ssm::{Mamba, SsmDims, SsmState};
