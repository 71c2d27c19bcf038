use hybrid_mllm::model::checkpoint;
use hybrid_mllm::model::{
    argmax, HybridConfig, HybridModel, MixerKind, MlpKind, ModelInput, PruneStatus, QuantizedModel,
};
use hybrid_mllm::rng;
use hybrid_mllm::tensor::{Tensor, Var};
use hybrid_mllm::Error;

fn tiny(seed: u64) -> HybridConfig {
    let mut r = rng::seeded(seed);
    let n_kv = [1, 2][rng::below(&mut r, 2)];
    HybridConfig {
        d_model: 16,
        d_ff: 24,
        vocab_size: 32,
        n_stacks: 1 + rng::below(&mut r, 2),
        layers_per_stack: 4,
        attn_positions: vec![rng::below(&mut r, 4)],
        n_experts: 4,
        top_k: 2,
        n_heads: 4,
        n_kv_heads: n_kv,
        head_dim: 4,
        d_state: 4,
        d_conv: 4,
        init_std: 0.2,
        ..Default::default()
    }
}

fn ids(n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| rng::below(&mut r, 32)).collect()
}

#[test]
fn default_structure() {
    let cfg = HybridConfig::default();
    let specs = cfg.layer_specs();
    assert_eq!(specs.len(), 32);
    assert_eq!(specs.iter().filter(|s| s.mixer == MixerKind::Mamba).count(), 28);
    assert_eq!(specs.iter().filter(|s| s.mixer == MixerKind::Attention).count(), 4);
    assert_eq!(specs.iter().filter(|s| s.mlp == MlpKind::Moe).count(), 16);
    for s in &specs {
        assert_eq!(s.mixer == MixerKind::Attention, s.index % 8 == 3);
        assert_eq!(s.mlp == MlpKind::Moe, s.index % 2 == 1);
    }
}

#[test]
fn same_seed_same_parameters() {
    let cfg = tiny(1);
    let a = HybridModel::<f64>::random(&cfg, 9).unwrap();
    let b = HybridModel::<f64>::random(&cfg, 9).unwrap();
    let c = HybridModel::<f64>::random(&cfg, 10).unwrap();
    assert_eq!(a.to_map(), b.to_map());
    assert_ne!(a.to_map(), c.to_map());
}

#[test]
fn forward_is_finite_and_causal() {
    let cfg = tiny(2);
    let m = HybridModel::<f64>::random(&cfg, 1).unwrap();
    let x = ids(9, 3);
    let l1 = m.logits(ModelInput::text(&x)).unwrap();
    assert_eq!(l1.shape(), &[9, 32]);
    assert!(l1.is_finite());
    let mut x2 = x.clone();
    x2[5] = (x2[5] + 1) % 32;
    let l2 = m.logits(ModelInput::text(&x2)).unwrap();
    assert_eq!(l1.data()[..5 * 32], l2.data()[..5 * 32]);
}

#[test]
fn image_slots_must_match_embeddings() {
    let cfg = tiny(3);
    let m = HybridModel::<f64>::random(&cfg, 1).unwrap();
    let x = ids(6, 1);
    let emb = Var::constant(Tensor::<f64>::zeros(&[2, 16]));
    let bad = ModelInput {
        ids: &x,
        image_slots: &[1, 2, 3],
        image_embeds: Some(&emb),
    };
    assert!(matches!(m.logits(bad), Err(Error::SlotMismatch { declared: 3, supplied: 2 })));
    let good = ModelInput {
        ids: &x,
        image_slots: &[1, 2],
        image_embeds: Some(&emb),
    };
    assert!(m.logits(good).is_ok());
}

#[test]
fn incremental_decoding_matches_full_forward() {
    for seed in 0..20 {
        let cfg = tiny(seed);
        let m = HybridModel::<f32>::random(&cfg, seed).unwrap();
        let x = ids(12, seed + 100);
        let full = m.logits(ModelInput::text(&x)).unwrap();
        let mut s = m.new_session();
        let split = 1 + (seed as usize % 7);
        let mut rows = s.extend(ModelInput::text(&x[..split])).unwrap().into_data();
        for &tok in &x[split..] {
            rows.extend(s.decode_step(tok).unwrap().into_data());
        }
        let inc = Tensor::new(vec![12, 32], rows).unwrap();
        let err = full.max_abs_diff(&inc);
        assert!(err <= 1e-5, "seed {seed}: {err}");
        assert_eq!(s.position(), 12);
    }
}

#[test]
fn session_memory_law() {
    let cfg = tiny(4);
    let m = HybridModel::<f32>::random(&cfg, 1).unwrap();
    let mut s = m.new_session();
    let empty_ssm = s.ssm_bytes();
    s.prefill(ModelInput::text(&ids(10, 1))).unwrap();
    assert_eq!(s.position(), 10);
    let per_tok = cfg.kv_scalars_per_token() * 4;
    assert_eq!(s.kv_bytes(), 10 * per_tok);
    assert_eq!(s.ssm_bytes(), empty_ssm);
    let mut long = m.new_session();
    long.prefill(ModelInput::text(&ids(300, 2))).unwrap();
    assert_eq!(long.ssm_bytes(), empty_ssm);
    assert_eq!(long.byte_size(), empty_ssm + 300 * per_tok);
}

#[test]
fn greedy_decoding_is_reproducible() {
    let cfg = tiny(5);
    let run = || {
        let m = HybridModel::<f32>::random(&cfg, 7).unwrap();
        let mut s = m.new_session();
        let first = s.prefill(ModelInput::text(&ids(5, 1))).unwrap();
        s.generate_greedy(&first, 8, None).unwrap()
    };
    assert_eq!(run(), run());
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
}

#[test]
fn pruning_matches_forced_routing_and_removes_exact_count() {
    let cfg = tiny(6);
    let mut m = HybridModel::<f64>::random(&cfg, 2).unwrap();
    let (pruned, status) = m.prune_to_expert0().unwrap();
    let n_moe = cfg.count_layers(None, Some(MlpKind::Moe));
    assert_eq!(status, PruneStatus::Pruned { moe_layers: n_moe });
    assert!(pruned.layers.iter().all(|l| l.spec.mlp == MlpKind::Dense));

    let before = m.count_params();
    let after = pruned.count_params();
    let expert = 3 * cfg.d_model * cfg.d_ff;
    let router = cfg.d_model * cfg.n_experts;
    assert_eq!(before.total - after.total, n_moe * ((cfg.n_experts - 1) * expert + router));
    assert_eq!(after.total, after.active);
    println!("active ratio pruned/original: {:.4}", after.active as f64 / before.active as f64);

    m.set_forced_expert(Some(0));
    let x = ids(7, 4);
    let a = m.logits(ModelInput::text(&x)).unwrap();
    let b = pruned.logits(ModelInput::text(&x)).unwrap();
    assert_eq!(a.data(), b.data());

    let (again, status) = pruned.prune_to_expert0().unwrap();
    assert_eq!(status, PruneStatus::AlreadyDense);
    assert_eq!(again.to_map(), pruned.to_map());
    assert_eq!(again.cfg, pruned.cfg);
}

#[test]
fn closed_form_counts_match_enumeration() {
    for seed in 0..5 {
        let mut cfg = tiny(seed);
        cfg.tie_embeddings = seed % 2 == 0;
        let m = HybridModel::<f64>::random(&cfg, 1).unwrap();
        assert_eq!(m.count_params(), cfg.param_count());
    }
    let dense = HybridConfig { moe_stride: 0, ..tiny(0) };
    let c = HybridModel::<f64>::random(&dense, 1).unwrap().count_params();
    assert_eq!(c.total, c.active);
    let cfg = tiny(1);
    let expert_block = cfg.n_experts * 3 * cfg.d_model * cfg.d_ff;
    let p = cfg.param_count();
    let n_moe = cfg.count_layers(None, Some(MlpKind::Moe));
    assert_eq!(p.total - p.active, n_moe * (expert_block - expert_block * cfg.top_k / cfg.n_experts));
}

#[test]
fn quantized_model_round_trip() {
    let cfg = tiny(7);
    let m = HybridModel::<f32>::random(&cfg, 3).unwrap();
    let q = QuantizedModel::quantize(&m);
    assert!(q.byte_size() < m.to_map().values().map(|t| t.byte_size()).sum::<usize>());
    let dq = q.dequantize().unwrap();
    assert_eq!(dq.embed.value(), m.embed.value());
    let x = ids(6, 1);
    let run = |model: &HybridModel<f32>| {
        let mut s = model.new_session();
        let first = s.prefill(ModelInput::text(&x)).unwrap();
        s.generate_greedy(&first, 16, None).unwrap()
    };
    let (a, b) = (run(&m), run(&dq));
    let divergence = a.iter().zip(&b).position(|(x, y)| x != y);
    println!("first divergence: {divergence:?}");
}

#[test]
fn checkpoint_round_trip_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let cfg = tiny(8);
    let m = HybridModel::<f32>::random(&cfg, 5).unwrap();
    m.save(&path).unwrap();
    let back = HybridModel::<f32>::load(&path).unwrap();
    assert_eq!(back.cfg, m.cfg);
    assert_eq!(back.to_map(), m.to_map());

    let bytes = std::fs::read(&path).unwrap();
    let (manifest, start) = checkpoint::decode_manifest(&bytes).unwrap();
    assert_eq!(manifest.payload_len as usize, bytes.len() - start);
    assert_eq!(manifest.entries.iter().map(|e| e.len).sum::<u64>(), manifest.payload_len);

    let mut corrupt = bytes.clone();
    let last = corrupt.len() - 1;
    corrupt[last] ^= 0x40;
    assert!(matches!(checkpoint::decode::<f32>(&corrupt), Err(Error::CheckpointChecksum { .. })));

    let truncated = &bytes[..bytes.len() - 10];
    assert!(matches!(checkpoint::decode::<f32>(truncated), Err(Error::CheckpointTruncated { .. })));

    let mut versioned = bytes.clone();
    versioned[4] = 9;
    assert!(matches!(checkpoint::decode::<f32>(&versioned), Err(Error::CheckpointVersion { found: 9, .. })));

    let (_, map) = checkpoint::decode::<f32>(&bytes).unwrap();
    let wider = HybridConfig { d_ff: cfg.d_ff + 1, ..cfg };
    assert!(matches!(HybridModel::from_map(&wider, &map), Err(Error::CheckpointShape { .. })));
}
