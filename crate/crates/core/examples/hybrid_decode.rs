//! Prefill plus token-by-token decoding on the desk decoder, checked
//! against a full forward pass, with the session's cache footprint.

use hybrid_mllm::mllm::VlmConfig;
use hybrid_mllm::model::{HybridModel, ModelInput};
use hybrid_mllm::rng;
use hybrid_mllm::tensor::Tensor;

fn main() -> hybrid_mllm::Result<()> {
    let cfg = VlmConfig::desk().model;
    let model = HybridModel::<f32>::random(&cfg, 0)?;
    let mut r = rng::seeded(1);
    let ids: Vec<usize> = (0..48).map(|_| rng::below(&mut r, cfg.vocab_size)).collect();
    let full = model.logits(ModelInput::text(&ids))?;
    let split = 32;
    let mut session = model.new_session();
    // Prefill yields the last position; each decode step one more.
    let mut rows = session.prefill(ModelInput::text(&ids[..split]))?.into_data();
    println!(
        "after prefill of {split}: kv {} B, ssm {} B",
        session.kv_bytes(),
        session.ssm_bytes()
    );
    for &t in &ids[split..] {
        rows.extend(session.decode_step(t)?.into_data());
    }
    let last_rows = Tensor::new(vec![ids.len() - split + 1, cfg.vocab_size], rows)?;
    let mut ref_rows = Vec::new();
    for p in split - 1..ids.len() {
        ref_rows.extend_from_slice(full.row(p));
    }
    let reference = Tensor::new(vec![ids.len() - split + 1, cfg.vocab_size], ref_rows)?;
    println!("max |full - incremental| over decoded positions: {:.2e}", reference.max_abs_diff(&last_rows));
    println!(
        "after {} tokens: kv {} B ({} scalars/token), ssm {} B",
        session.position(),
        session.kv_bytes(),
        cfg.kv_scalars_per_token(),
        session.ssm_bytes()
    );
    let first = session.decode_step(ids[0])?;
    let generated = session.generate_greedy(&first, 8, None)?;
    println!("greedy continuation: {generated:?}");
    Ok(())
}
