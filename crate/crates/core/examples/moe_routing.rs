//! Expert load and top-2 combination weights of each MoE layer on a random
//! prompt, with and without forced routing to expert 0.

use hybrid_mllm::mllm::VlmConfig;
use hybrid_mllm::model::{HybridModel, ModelInput};
use hybrid_mllm::rng;

fn main() -> hybrid_mllm::Result<()> {
    let cfg = VlmConfig::desk().model;
    let mut model = HybridModel::<f32>::random(&cfg, 3)?;
    let mut r = rng::seeded(4);
    let ids: Vec<usize> = (0..128).map(|_| rng::below(&mut r, cfg.vocab_size)).collect();
    for forced in [None, Some(0)] {
        model.set_forced_expert(forced);
        let out = model.forward(ModelInput::text(&ids))?;
        println!("forced expert: {forced:?}");
        for (i, rec) in out.routing.iter().enumerate() {
            let mut load = vec![0usize; cfg.n_experts];
            rec.experts.iter().flatten().for_each(|&e| load[e] += 1);
            let top_weight = rec.weights.iter().map(|w| w[0]).sum::<f64>() / rec.weights.len() as f64;
            println!("  moe layer {i}: load {load:?}, mean top weight {top_weight:.3}");
        }
    }
    Ok(())
}
