pub mod bench;
pub mod cli;
pub mod error;
pub mod eval;
pub mod layers;
pub mod mllm;
pub mod model;
pub mod params;
pub mod protocol;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod vision;

pub use error::{Error, Result};
