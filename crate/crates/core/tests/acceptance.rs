//! Acceptance criteria 1 to 11, one pass/fail line each.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, OnceLock};

use hybrid_mllm::bench::{
    calibrated_overhead, efficiency_ladder, fit_exponent, fit_line, flops_estimate, kv_cache_bytes, max_images,
    toy_pair, video_tokens, CostModelConfig, Timing, WallClock,
};
use hybrid_mllm::eval::{
    icl_grid, needle_index, niah_grid, sweep_frames, EvalGrid, FrameSweep, ModelRunner, OracleRunner, RandomRunner,
};
use hybrid_mllm::layers::{Attention, Mamba, Moe, RmsNorm, SsmDims, SwiGlu};
use hybrid_mllm::mllm::{VisionLanguageModel, VlmConfig};
use hybrid_mllm::model::{HybridConfig, HybridModel, MixerKind, MlpKind, ModelInput, PruneStatus};
use hybrid_mllm::params::{Builder, Init, ParamSource, RandomInit, TensorMap};
use hybrid_mllm::protocol::{
    batch_len, pack, plan_packing, MultimodalSequence, Protocol, Vocabulary, FRAME_SEP, REFERENCE_PACK_LEN,
};
use hybrid_mllm::rng;
use hybrid_mllm::tensor::gradcheck;
use hybrid_mllm::tensor::kernels::{scan_parallel, scan_sequential, ScanDims, ScanInputs};
use hybrid_mllm::tensor::{ScanMode, Tensor, Var};
use hybrid_mllm::training::tasks::gen_caption_task;
use hybrid_mllm::training::{
    desk_stages, evaluate_loss, lr_schedule, run_chain, Component, Relation, Stage, SynthTaskSpec, TrainingReport,
    REFERENCE_PEAK_LR, REFERENCE_WARMUP_FRACTION,
};
use hybrid_mllm::vision::synth::{colored_shape, Color, Shape};
use hybrid_mllm::vision::{pool1d, pool2d, EncoderConfig, PoolMode, VisionEncoder};

/// Serializes the heavy training run and the wall-clock measurements.
static CPU: Mutex<()> = Mutex::new(());

/// Writes the verdict line past the test harness's output capture, then
/// fails the test if the criterion failed.
fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {n:>2} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{}", line.trim_end());
}

fn close(got: f64, want: f64, rel: f64) -> bool {
    ((got - want) / want).abs() <= rel
}

#[test]
fn criterion_01_token_geometry() {
    let cfg = EncoderConfig::default();
    let enc = VisionEncoder::<f32>::random(&cfg).unwrap();
    let img = colored_shape(cfg.image_side, Shape::Circle, Color::Red, &mut rng::seeded(0));
    let grid = enc.encode(&img).unwrap();
    let p2 = pool2d(&grid, 2, PoolMode::Mean).unwrap().len();
    let p1 = pool1d(&grid, 4).unwrap().shape()[0];
    let video = video_tokens(3, 1, 576);
    let pass = grid.len() == 576 && p2 == 144 && p1 == 144 && video == 103_680;
    verdict(
        1,
        "token geometry",
        pass,
        format!("encode {} pool2d {p2} pool1d {p1} video {video}", grid.len()),
    );
}

#[test]
fn criterion_02_kv_cache_arithmetic() {
    let cfg = CostModelConfig::dense_9b();
    let t = 262_144u64;
    let bytes = kv_cache_bytes(&cfg, t);
    // keys and values, per attention layer, per KV head
    let oracle = 2 * cfg.n_attn_layers as u64 * cfg.n_kv_heads as u64 * cfg.head_dim as u64 * cfg.bytes_per_scalar as u64 * t;
    let gib = bytes as f64 / (1u64 << 30) as f64;
    let pass = bytes == oracle && close(gib, 4.0, 0.005);
    verdict(2, "KV-cache arithmetic", pass, format!("{gib:.4} GiB at T={t}"));
}

#[test]
fn criterion_03_flops_table() {
    let dense = CostModelConfig::dense_9b();
    let moe = CostModelConfig::moe_a13b();
    let cases = [
        ("9B x128", flops_estimate(&dense, 128), 0.15),
        ("A13B x128", flops_estimate(&moe, 128), 0.22),
        ("9B x54", flops_estimate(&dense, 54), 0.07),
        ("A13B x54", flops_estimate(&moe, 54), 0.09),
    ];
    let mut detail = Vec::new();
    let mut pass = dense.kappa == 1 && moe.kappa == 1;
    for (name, flops, reference) in cases {
        let pf = flops / 1e15;
        pass &= close(pf, reference, 0.25);
        detail.push(format!("{name} {pf:.3} vs {reference}"));
    }
    verdict(3, "FLOPs table", pass, detail.join(", "));
}

#[test]
fn criterion_04_max_image_budget() {
    let cfg = CostModelConfig::dense_9b();
    let overhead = calibrated_overhead(&cfg).unwrap();
    let full = max_images(80e9, &cfg, &overhead).images().unwrap_or(0);
    let half = max_images(40e9, &cfg, &overhead).images().unwrap_or(0);
    // Closed form from the raw geometry: fixed weights and prompt slack,
    // then a constant number of bytes per image.
    let kv_per_token = 2.0 * (cfg.n_attn_layers * cfg.n_kv_heads * cfg.head_dim * cfg.bytes_per_scalar) as f64;
    // int8 weights: one byte per parameter
    let fixed = cfg.total_params + kv_per_token * overhead.prompt_slack_tokens as f64;
    let per_image = kv_per_token * cfg.tokens_per_image as f64 + overhead.bytes_per_image;
    let predicted = ((40e9 - fixed) / per_image).floor();
    let pass = full.abs_diff(1173) <= 2 && close(half as f64, predicted, 0.05);
    verdict(
        4,
        "max-image budget",
        pass,
        format!("80 GB -> {full}, 40 GB -> {half} (closed form {predicted:.0})"),
    );
}

#[test]
fn criterion_05_structure() {
    let cfg = HybridConfig::default();
    let specs = cfg.layer_specs();
    let mamba = specs.iter().filter(|s| s.mixer == MixerKind::Mamba).count();
    let attn = specs.iter().filter(|s| s.mixer == MixerKind::Attention).count();
    let moe = specs.iter().filter(|s| s.mlp == MlpKind::Moe).count();
    let model = HybridModel::<f32>::random(&cfg, 0).unwrap();
    let (pruned, status) = model.prune_to_expert0().unwrap();
    let before = model.to_map();
    let after = pruned.to_map();
    let mut exact = status == PruneStatus::Pruned { moe_layers: moe };
    let mut removed_total = 0usize;
    for s in specs.iter().filter(|s| s.mlp == MlpKind::Moe) {
        let prefix = format!("layers.{}.", s.index);
        let count = |m: &TensorMap<f32>, part: &str| -> usize {
            m.iter()
                .filter(|(n, _)| n.starts_with(&prefix) && n.contains(part))
                .map(|(_, t)| t.numel())
                .sum()
        };
        let experts = count(&before, ".experts.");
        let router = count(&before, ".router");
        let removed = count(&before, "") - count(&after, "");
        removed_total += removed;
        exact &= removed == experts * (cfg.n_experts - 1) / cfg.n_experts + router;
        exact &= count(&after, ".router") == 0;
    }
    let pass = specs.len() == 32 && mamba == 28 && attn == 4 && moe == 16 && exact;
    verdict(
        5,
        "structure",
        pass,
        format!(
            "{} layers = {mamba} Mamba + {attn} attention, {moe} MoE, pruning removed {removed_total} parameters",
            specs.len()
        ),
    );
}

/// Hands out caller-supplied vars by name.
struct VarSource(HashMap<String, Var<f64>>);

impl ParamSource<f64> for VarSource {
    fn fetch(&mut self, name: &str, _shape: &[usize], _init: Init) -> hybrid_mllm::Result<Var<f64>> {
        Ok(self.0[name].clone())
    }
}

/// Worst relative gradient error of a layer with respect to its input and
/// every parameter.
fn layer_grad_error<L>(
    x: Tensor<f64>,
    build: impl Fn(&mut Builder<'_, f64>) -> hybrid_mllm::Result<L>,
    run: impl Fn(&L, &Var<f64>) -> hybrid_mllm::Result<Var<f64>>,
) -> f64 {
    let mut init = RandomInit::new(11);
    let mut b = Builder::new(&mut init);
    build(&mut b).unwrap();
    let params = b.finish();
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut inputs = vec![x];
    inputs.extend(params.iter().map(|(_, v)| v.value().clone()));
    gradcheck::check(&inputs, 1e-4, 1e-6, |vars| {
        let mut src = VarSource(names.iter().cloned().zip(vars[1..].iter().cloned()).collect());
        let mut b = Builder::new(&mut src);
        run(&build(&mut b)?, &vars[0])
    })
    .unwrap()
    .max_rel_err
}

#[test]
fn criterion_06_numerical_core() {
    // (a) parallel versus sequential scan
    let mut scan_err = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng::seeded(seed);
        let (t, c, s) = (1 + rng::below(&mut r, 64), 1 + rng::below(&mut r, 8), 1 + rng::below(&mut r, 6));
        let u = Tensor::<f64>::randn(&[t, c], 1.0, &mut r);
        let delta = Tensor::<f64>::uniform(&[t, c], 1e-3, 1.0, &mut r);
        let a = Tensor::<f64>::uniform(&[c, s], -2.0, -0.05, &mut r);
        let b = Tensor::<f64>::randn(&[t, s], 1.0, &mut r);
        let cm = Tensor::<f64>::randn(&[t, s], 1.0, &mut r);
        let d = Tensor::<f64>::randn(&[c], 1.0, &mut r);
        let h0: Vec<f64> = (0..c * s).map(|_| rng::normal(&mut r)).collect();
        let inputs = ScanInputs {
            u: u.data(),
            delta: delta.data(),
            a: a.data(),
            b: b.data(),
            cm: cm.data(),
            d: d.data(),
        };
        let dims = ScanDims { t, c, s };
        let (mut s1, mut s2) = (h0.clone(), h0);
        let y1 = scan_sequential(inputs, dims, &mut s1, None);
        let y2 = scan_parallel(inputs, dims, &mut s2, None);
        for (p, q) in y1.iter().zip(&y2).chain(s1.iter().zip(&s2)) {
            scan_err = scan_err.max((p - q).abs());
        }
    }

    // (b) gradients of every layer and of a whole model
    let x = Tensor::randn(&[5, 6], 1.0, &mut rng::seeded(50));
    let dims = SsmDims {
        d_model: 6,
        d_inner: 8,
        d_state: 3,
        d_conv: 3,
        dt_rank: 2,
    };
    let mut grads = vec![
        ("rmsnorm", layer_grad_error(x.clone(), |b| RmsNorm::new(b, 6, 1e-6), |l, x| l.forward(x))),
        ("swiglu", layer_grad_error(x.clone(), |b| SwiGlu::new(b, 6, 8, 0.5, 0.5), |l, x| l.forward(x))),
        (
            "attention",
            layer_grad_error(x.clone(), |b| Attention::new(b, 6, 4, 2, 3, 0.5, 0.5), |l, x| l.forward(x)),
        ),
        (
            "mamba",
            layer_grad_error(x.clone(), |b| Mamba::new(b, dims, 0.5, 0.5), |l, x| l.forward_with(x, ScanMode::Parallel)),
        ),
        (
            "moe",
            layer_grad_error(x.clone(), |b| Moe::new(b, 6, 5, 4, 2, 0.5, 0.5), |l, x| Ok(l.forward(x)?.out)),
        ),
    ];
    let cfg = HybridConfig {
        d_model: 8,
        d_ff: 6,
        vocab_size: 11,
        n_stacks: 1,
        layers_per_stack: 4,
        attn_positions: vec![1],
        n_experts: 3,
        top_k: 2,
        n_heads: 2,
        n_kv_heads: 1,
        head_dim: 4,
        d_state: 3,
        d_conv: 3,
        init_std: 0.4,
        ..Default::default()
    };
    let model = HybridModel::<f64>::random(&cfg, 3).unwrap();
    let names: Vec<String> = model.params().iter().map(|(n, _)| n.to_string()).collect();
    let inputs: Vec<Tensor<f64>> = model.params().iter().map(|(_, v)| v.value().clone()).collect();
    let model_err = gradcheck::check(&inputs, 1e-4, 1e-6, |vars| {
        let mut src = VarSource(names.iter().cloned().zip(vars.iter().cloned()).collect());
        let m = HybridModel::build(&cfg, &mut src)?;
        m.forward(ModelInput::text(&[1, 4, 9, 4, 0]))?.logits.cross_entropy(&[4, 9, 4, 0, 2])
    })
    .unwrap()
    .max_rel_err;
    grads.push(("model", model_err));
    let grad_err = grads.iter().map(|(_, e)| *e).fold(0.0, f64::max);

    // (c) full forward versus prefill plus decode
    let mut decode_err = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng::seeded(seed);
        let cfg = HybridConfig {
            d_model: 16,
            d_ff: 24,
            vocab_size: 32,
            n_stacks: 1 + rng::below(&mut r, 2),
            layers_per_stack: 4,
            attn_positions: vec![rng::below(&mut r, 4)],
            n_experts: 4,
            top_k: 2,
            n_heads: 4,
            n_kv_heads: [1, 2][rng::below(&mut r, 2)],
            head_dim: 4,
            d_state: 4,
            d_conv: 4,
            init_std: 0.2,
            ..Default::default()
        };
        let m = HybridModel::<f32>::random(&cfg, seed).unwrap();
        let ids: Vec<usize> = (0..12).map(|_| rng::below(&mut r, 32)).collect();
        let full = m.logits(ModelInput::text(&ids)).unwrap();
        let mut s = m.new_session();
        let split = 1 + seed as usize % 7;
        let mut rows = s.extend(ModelInput::text(&ids[..split])).unwrap().into_data();
        for &t in &ids[split..] {
            rows.extend(s.decode_step(t).unwrap().into_data());
        }
        let inc = Tensor::new(vec![12, 32], rows).unwrap();
        decode_err = decode_err.max(full.max_abs_diff(&inc) as f64);
    }

    let pass = scan_err <= 1e-6 && grad_err <= 1e-4 && decode_err <= 1e-5;
    verdict(
        6,
        "numerical core",
        pass,
        format!("scan {scan_err:.1e}, gradient {grad_err:.1e}, decode {decode_err:.1e}"),
    );
}

#[test]
fn criterion_07_hybrid_efficiency() {
    let _cpu = CPU.lock().unwrap_or_else(|e| e.into_inner());
    let ladder = [128, 256, 512, 1024];
    let xs: Vec<f64> = ladder.iter().map(|&t| t as f64).collect();
    let (hcfg, acfg) = toy_pair(16);
    let timing = Timing::default();
    let mut clock = WallClock::default();
    let mut fits = Vec::new();
    for cfg in [&hcfg, &acfg] {
        let model = HybridModel::<f32>::random(cfg, 0).unwrap();
        let reports = efficiency_ladder("toy", &model, &ladder, 64, timing, &mut clock).unwrap();
        let step: Vec<f64> = reports.iter().map(|r| r.decode_step_seconds()).collect();
        let mem: Vec<f64> = reports.iter().map(|r| r.session_bytes as f64).collect();
        let prefill: Vec<f64> = reports.iter().map(|r| r.prefill.median).collect();
        fits.push((fit_line(&xs, &step).0, fit_line(&xs, &mem).0, fit_exponent(&xs, &prefill)));
    }
    let ((h_step, h_mem, h_exp), (a_step, a_mem, a_exp)) = (fits[0], fits[1]);
    let kv_constant = (hcfg.kv_scalars_per_token() * std::mem::size_of::<f32>()) as f64;
    let pass = h_step < a_step && close(h_mem, kv_constant, 0.02) && h_mem < a_mem && a_exp > 1.5 && h_exp < a_exp;
    verdict(
        7,
        "hybrid efficiency",
        pass,
        format!(
            "decode-step slope {h_step:.2e} vs {a_step:.2e} s/token; memory slope {h_mem:.1} (KV {kv_constant}) vs {a_mem:.1} B/token; prefill exponent {h_exp:.2} vs {a_exp:.2}"
        ),
    );
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}.txt", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn criterion_08_protocol() {
    let p = Protocol::new(Vocabulary::default(), 144);
    let cases = [
        ("single", "What is this?", p.single("What is this?")),
        ("multi", "This is a cat. | This is a:", p.multi(&["This is a cat.", "This is a:"]).unwrap()),
        ("video", "frames=3 | What are they?", p.video(3, "What are they?").unwrap()),
        ("patched", "rows=3,3 | What are they?", p.patched(&[3, 3], "What are they?").unwrap()),
    ];
    let mut golden = 0;
    for (name, input, seq) in &cases {
        let rendered = format!(
            "template: {name}\ninput: {input}\nslots: {}\nstream: {}\n",
            p.slots_per_image,
            p.vocab.dump(&seq.render())
        );
        golden += usize::from(rendered == fixture(name));
    }
    let separators_ok = (1..=64).all(|n| {
        let s = p.video(n, "").unwrap().render();
        s.iter().filter(|&&t| t == FRAME_SEP).count() == n - 1
    });

    let small = Protocol::new(Vocabulary::default(), 5);
    let mut r = rng::seeded(8);
    let seqs: Vec<MultimodalSequence> = (0..200)
        .map(|i| match rng::below(&mut r, 4) {
            0 => small.single("a"),
            1 => small.video(1 + rng::below(&mut r, 6), "b").unwrap(),
            2 => small.multi(&["x", "y", "z"][..1 + i % 3]).unwrap(),
            _ => small.text("plain text"),
        })
        .collect();
    let batches = pack(&seqs, 64).unwrap();
    let packed: usize = batches.iter().map(|b| b.tokens.len()).sum();
    let expected: usize = seqs.iter().map(|s| s.len()).sum::<usize>() + batches.iter().map(|b| b.spans.len() - 1).sum::<usize>();
    let conserved = packed == expected && batches.iter().all(|b| b.tokens.len() <= 64);

    let mut r = rng::seeded(11);
    let mut arithmetic = true;
    for dist in 0..3 {
        let lengths: Vec<usize> = (0..20_000)
            .map(|_| match dist {
                0 => 50 + rng::below(&mut r, 2_000),
                1 => 147 * (1 + rng::below(&mut r, 16)) + rng::below(&mut r, 300),
                _ => 2 + 146 * (1 + rng::below(&mut r, 400)),
            })
            .collect();
        let plan = plan_packing(&lengths, REFERENCE_PACK_LEN).unwrap();
        let mut seen = vec![0u8; lengths.len()];
        plan.iter().flatten().for_each(|&i| seen[i] += 1);
        let total: usize = plan.iter().map(|m| batch_len(&lengths, m)).sum();
        let separators: usize = plan.iter().map(|m| m.len() - 1).sum();
        arithmetic &= seen.iter().all(|&c| c == 1)
            && plan.iter().all(|m| batch_len(&lengths, m) <= REFERENCE_PACK_LEN)
            && total == lengths.iter().sum::<usize>() + separators;
    }
    let pass = golden == 4 && separators_ok && conserved && arithmetic;
    verdict(
        8,
        "protocol golden tests",
        pass,
        format!("{golden}/4 fixtures, separators {separators_ok}, packing {conserved}, 176k arithmetic {arithmetic}"),
    );
}

const CHAIN_SEED: u64 = 0;
const EVAL_SEED: u64 = 0xE7A1;

struct Chain {
    cfg: VlmConfig,
    weights: TensorMap<f32>,
    spec: SynthTaskSpec,
    reports: Vec<TrainingReport>,
    caption_before: f64,
    caption_after: f64,
}

/// The four-stage desk chain, trained once and shared.
fn chain() -> &'static Chain {
    static CHAIN: OnceLock<Chain> = OnceLock::new();
    CHAIN.get_or_init(|| {
        let _cpu = CPU.lock().unwrap_or_else(|e| e.into_inner());
        let cfg = VlmConfig::desk();
        let spec = SynthTaskSpec::new(cfg.encoder.image_side, cfg.tokens_per_image());
        let mut vlm = VisionLanguageModel::<f32>::random(&cfg, CHAIN_SEED).unwrap();
        let held_out = gen_caption_task(&spec, 200, EVAL_SEED);
        let caption_before = evaluate_loss(&vlm, &held_out, true).unwrap();
        let stages = desk_stages(&spec, CHAIN_SEED).unwrap();
        let reports = run_chain(&mut vlm, &stages, None, CHAIN_SEED).unwrap();
        let caption_after = evaluate_loss(&vlm, &held_out, true).unwrap();
        Chain {
            weights: vlm.to_map(),
            cfg,
            spec,
            reports,
            caption_before,
            caption_after,
        }
    })
}

#[test]
fn criterion_09_training_strategy() {
    use Component::*;
    let c = chain();
    let unchanged = |s: Stage| c.reports.iter().find(|r| r.stage == s).unwrap().unchanged();
    let align_frozen = unchanged(Stage::Align) == vec![Encoder, Llm];
    let single_frozen = unchanged(Stage::SingleSft).contains(&Encoder);
    let total = 10_000;
    let warm = (REFERENCE_WARMUP_FRACTION * total as f64) as usize;
    let lr0 = lr_schedule(0, total, REFERENCE_PEAK_LR, REFERENCE_WARMUP_FRACTION);
    let lr_peak = lr_schedule(warm, total, REFERENCE_PEAK_LR, REFERENCE_WARMUP_FRACTION);
    let lr_end = lr_schedule(total, total, REFERENCE_PEAK_LR, REFERENCE_WARMUP_FRACTION);
    let schedule = lr0 == 0.0 && (lr_peak - 1e-5).abs() < 1e-15 && lr_end < 1e-12;
    let ratio = c.caption_after / c.caption_before;
    let pass = align_frozen && single_frozen && schedule && ratio < 0.6;
    verdict(
        9,
        "training strategy",
        pass,
        format!(
            "align frozen {align_frozen}, single-sft encoder frozen {single_frozen}, lr {lr0}/{lr_peak:.0e}/{lr_end:.0e}, held-out caption loss {:.3} -> {:.3} ({:.1}% of initial)",
            c.caption_before,
            c.caption_after,
            100.0 * ratio
        ),
    );
}

fn perfect(g: &EvalGrid) -> bool {
    g.cells.iter().all(|c| c.accuracy() == Some(1.0))
}

fn within_3_sigma(g: &EvalGrid, p: f64) -> bool {
    let trials: usize = g.cells.iter().map(|c| c.trials).sum();
    let correct: usize = g.cells.iter().map(|c| c.correct).sum();
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    (correct as f64 / trials as f64 - p).abs() <= 3.0 * sigma
}

#[test]
fn criterion_10_evaluation_harness() {
    let t = SynthTaskSpec::new(24, 9);
    let depths = [0.0, 0.25, 0.5, 0.75, 1.0];
    let sweep = FrameSweep {
        video_len: 64,
        needle: None,
    };
    let oracle = perfect(&niah_grid(&mut OracleRunner, &t, &[1, 4, 8, 16], &depths, 10, 1))
        && perfect(&icl_grid(&mut OracleRunner, &t, Relation::SameShape, &[0, 1, 2, 4, 5], 10, 2))
        && perfect(&icl_grid(&mut OracleRunner, &t, Relation::SameColor, &[0, 1, 2, 4, 5], 10, 3))
        && perfect(&sweep_frames(&mut OracleRunner, &t, sweep, &[4, 16, 64], 10, 4));
    let random = within_3_sigma(&niah_grid(&mut RandomRunner, &t, &[2, 4, 8], &depths, 80, 11), 0.25)
        && within_3_sigma(&icl_grid(&mut RandomRunner, &t, Relation::SameShape, &[0, 1, 2, 4], 300, 12), 0.5)
        && within_3_sigma(&sweep_frames(&mut RandomRunner, &t, sweep, &[4, 8, 16], 300, 13), 0.25);
    let placement = (1..=64usize).all(|n| {
        (0..n).all(|k| {
            let depth = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
            needle_index(n, depth) == k
        }) && (0..=1000).all(|i| {
            let depth = i as f64 / 1000.0;
            needle_index(n, depth) == (depth * (n - 1) as f64).round() as usize
        })
    });
    let pass = oracle && random && placement;
    verdict(
        10,
        "evaluation harness",
        pass,
        format!("oracle perfect {oracle}, random at chance {random}, needle placement n<=64 {placement}"),
    );
}

#[test]
fn criterion_11_desk_capability() {
    let c = chain();
    let vlm = VisionLanguageModel::from_map(&c.cfg, &c.weights).unwrap();
    let mut runner = ModelRunner { vlm: &vlm };
    let depths = [0.0, 0.25, 0.5, 0.75, 1.0];
    let niah = niah_grid(&mut runner, &c.spec, &[8], &depths, 40, EVAL_SEED).overall().unwrap_or(0.0);
    let icl = icl_grid(&mut runner, &c.spec, Relation::SameShape, &[0, 1, 2, 3, 4], 200, EVAL_SEED + 1);
    let curve: Vec<f64> = icl.cells.iter().map(|c| c.accuracy().unwrap_or(0.0)).collect();
    let monotone = curve.windows(2).all(|w| w[1] >= w[0]);
    let pass = niah >= 0.9 && monotone;
    let fallback = if niah < 0.9 {
        format!(", below the bar; {:.1}x chance", niah / 0.25)
    } else {
        String::new()
    };
    verdict(
        11,
        "desk capability",
        pass,
        format!(
            "seed {CHAIN_SEED}: 8-frame NIAH {:.1}%{fallback}; same-shape ICL 0..4 shots {:?}",
            100.0 * niah,
            curve.iter().map(|a| format!("{:.3}", a)).collect::<Vec<_>>()
        ),
    );
}
