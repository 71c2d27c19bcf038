//! Token counts along the vision path: patch grid, 2D and 1D pooling, and
//! the long-video arithmetic.

use hybrid_mllm::bench::video_tokens;
use hybrid_mllm::rng;
use hybrid_mllm::vision::synth::{colored_shape, Color, Shape};
use hybrid_mllm::vision::{pool1d, pool2d, EncoderConfig, PoolMode, VisionEncoder};

fn main() -> hybrid_mllm::Result<()> {
    let cfg = EncoderConfig::default();
    let enc = VisionEncoder::<f32>::random(&cfg)?;
    let img = colored_shape(cfg.image_side, Shape::Square, Color::Green, &mut rng::seeded(0));
    let grid = enc.encode(&img)?;
    let p2 = pool2d(&grid, 2, PoolMode::Mean)?;
    let p1 = pool1d(&grid, 4)?;
    println!("image {}x{} px, patch {}", cfg.image_side, cfg.image_side, cfg.patch);
    println!("encoder tokens     {:>7} ({}x{})", grid.len(), grid.side, grid.side);
    println!("pool2d 2x2         {:>7} ({}x{})", p2.len(), p2.side, p2.side);
    println!("pool1d stride 4    {:>7}", p1.shape()[0]);
    for (minutes, fps) in [(1, 1), (3, 1), (3, 2), (10, 1)] {
        println!(
            "video {minutes:>2} min @ {fps} fps: {:>9} tokens unpooled, {:>8} pooled",
            video_tokens(minutes, fps, grid.len() as u64),
            video_tokens(minutes, fps, p2.len() as u64)
        );
    }
    Ok(())
}
