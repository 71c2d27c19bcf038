//! Collapses every MoE layer to its first expert and compares parameter
//! counts and logits with forced expert-0 routing.

use hybrid_mllm::mllm::VlmConfig;
use hybrid_mllm::model::{HybridConfig, HybridModel, MlpKind, ModelInput};
use hybrid_mllm::rng;

fn main() -> hybrid_mllm::Result<()> {
    let full = HybridConfig::default();
    let n_moe = full.count_layers(None, Some(MlpKind::Moe));
    let p = full.param_count();
    println!(
        "default build: {} layers, {} attention, {n_moe} MoE, {} total / {} active parameters",
        full.n_layers(),
        full.n_attn_layers(),
        p.total,
        p.active
    );

    let cfg = VlmConfig::desk().model;
    let mut model = HybridModel::<f64>::random(&cfg, 1)?;
    let (pruned, status) = model.prune_to_expert0()?;
    let (before, after) = (model.count_params(), pruned.count_params());
    println!("desk build: {status:?}");
    println!("  parameters {} -> {} (removed {})", before.total, after.total, before.total - after.total);
    println!("  active     {} -> {}", before.active, after.active);
    model.set_forced_expert(Some(0));
    let mut r = rng::seeded(2);
    let ids: Vec<usize> = (0..32).map(|_| rng::below(&mut r, cfg.vocab_size)).collect();
    let a = model.logits(ModelInput::text(&ids))?;
    let b = pruned.logits(ModelInput::text(&ids))?;
    println!("  max |forced - pruned| logits: {:.2e}", a.max_abs_diff(&b));
    Ok(())
}
