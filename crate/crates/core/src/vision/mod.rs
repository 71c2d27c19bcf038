//! Desk-scale vision tower: procedural images, a patch encoder, token
//! pooling and the projector into the language model's embedding space.

mod encoder;
mod image;
mod pool;
mod projector;
mod segment;
pub mod synth;

pub use encoder::{EncoderConfig, PatchGrid, VisionEncoder};
pub use image::{Image, RASTER_MAGIC};
pub use pool::{pool1d, pool2d, upsample, PoolMode};
pub use projector::{Projector, ProjectorConfig};
pub use segment::{segment_image, Segmented};
