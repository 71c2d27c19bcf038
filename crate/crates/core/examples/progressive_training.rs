//! Runs the four-stage progressive chain on synthetic data at desk scale
//! and reports per-stage loss, timing and frozen-component checksums.
//! Usage: `progressive_training [seed] [checkpoint_dir]`.

use std::time::Instant;

use hybrid_mllm::mllm::{VisionLanguageModel, VlmConfig};
use hybrid_mllm::training::{desk_stages, run_chain, SynthTaskSpec};

fn main() -> hybrid_mllm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0u64);
    let out = std::env::args().nth(2).map(std::path::PathBuf::from);
    let cfg = VlmConfig::desk();
    let spec = SynthTaskSpec::new(cfg.encoder.image_side, cfg.tokens_per_image());
    let mut vlm = VisionLanguageModel::<f32>::random(&cfg, seed)?;
    let stages = desk_stages(&spec, seed)?;
    if let Some(d) = &out {
        std::fs::create_dir_all(d).map_err(|e| hybrid_mllm::Error::io(d, e))?;
    }
    let t0 = Instant::now();
    let reports = run_chain(&mut vlm, &stages, out.as_deref(), seed)?;
    for r in &reports {
        println!(
            "{:<10} steps {:>4}  loss {:.3} -> {:.3}  unchanged {:?}",
            r.stage.name(),
            r.steps.len(),
            r.initial_loss(),
            r.final_loss(),
            r.unchanged()
        );
    }
    println!("chain took {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
