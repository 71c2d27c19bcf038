//! Packs a synthetic multi-image SFT corpus into fixed-length batches and
//! reports fill rate at several pack lengths.

use hybrid_mllm::mllm::VlmConfig;
use hybrid_mllm::protocol::{batch_len, plan_packing};
use hybrid_mllm::training::{build_corpus, Example, Stage, StageConfig, SynthTaskSpec};

fn main() -> hybrid_mllm::Result<()> {
    let cfg = VlmConfig::desk();
    let spec = SynthTaskSpec::new(cfg.encoder.image_side, cfg.tokens_per_image());
    let stage = StageConfig {
        items: 2000,
        ..StageConfig::desk(Stage::MultiSft)
    };
    let corpus = build_corpus(&spec, &stage, 7)?;
    let lengths: Vec<usize> = corpus.iter().map(Example::len).collect();
    let longest = *lengths.iter().max().unwrap_or(&0);
    let tokens: usize = lengths.iter().sum();
    println!("{} items, {tokens} tokens, longest {longest}", corpus.len());
    for limit in [longest, 256, 512, 1024, 4096] {
        if limit < longest {
            continue;
        }
        let plan = plan_packing(&lengths, limit)?;
        let used: usize = plan.iter().map(|m| batch_len(&lengths, m)).sum();
        println!(
            "pack {limit:>5}: {:>5} batches, fill {:5.1}%",
            plan.len(),
            100.0 * used as f64 / (plan.len() * limit) as f64
        );
    }
    Ok(())
}
