//! Int8 weight quantization of the desk decoder: storage, logit error and
//! agreement of greedy continuations.

use hybrid_mllm::mllm::VlmConfig;
use hybrid_mllm::model::{HybridModel, ModelInput, QuantizedModel};
use hybrid_mllm::rng;

fn main() -> hybrid_mllm::Result<()> {
    let cfg = VlmConfig::desk().model;
    let model = HybridModel::<f32>::random(&cfg, 5)?;
    let q = QuantizedModel::quantize(&model);
    let dense_bytes: usize = model.to_map().values().map(|t| t.byte_size()).sum();
    println!("f32 weights {dense_bytes} B, int8 {} B ({:.2}x)", q.byte_size(), dense_bytes as f64 / q.byte_size() as f64);
    let dq = q.dequantize()?;
    let mut r = rng::seeded(6);
    let ids: Vec<usize> = (0..24).map(|_| rng::below(&mut r, cfg.vocab_size)).collect();
    let a = model.logits(ModelInput::text(&ids))?;
    let b = dq.logits(ModelInput::text(&ids))?;
    println!("max |logit error| {:.3e}", a.max_abs_diff(&b));
    let greedy = |m: &HybridModel<f32>| -> hybrid_mllm::Result<Vec<usize>> {
        let mut s = m.new_session();
        let first = s.prefill(ModelInput::text(&ids))?;
        s.generate_greedy(&first, 24, None)
    };
    let (x, y) = (greedy(&model)?, greedy(&dq)?);
    let agree = x.iter().zip(&y).take_while(|(p, q)| p == q).count();
    println!("greedy continuations agree on the first {agree} of {} tokens", x.len());
    Ok(())
}
