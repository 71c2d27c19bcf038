use hybrid_mllm::layers::{top_k_indices, Attention, Mamba, Moe, RmsNorm, SsmDims, SwiGlu};
use hybrid_mllm::params::{Builder, Params, RandomInit};
use hybrid_mllm::rng;
use hybrid_mllm::tensor::kernels::{self, ScanDims, ScanInputs};
use hybrid_mllm::tensor::{ScanMode, Tensor, Var};
use proptest::prelude::*;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut rng::seeded(seed))
}

fn build<L>(seed: u64, f: impl FnOnce(&mut Builder<'_, f64>) -> hybrid_mllm::Result<L>) -> (L, Params<f64>) {
    let mut init = RandomInit::new(seed);
    let mut b = Builder::new(&mut init);
    let l = f(&mut b).unwrap();
    (l, b.finish())
}

fn c(t: Tensor<f64>) -> Var<f64> {
    Var::constant(t)
}

const DIMS: SsmDims = SsmDims {
    d_model: 8,
    d_inner: 8,
    d_state: 4,
    d_conv: 4,
    dt_rank: 1,
};

#[test]
fn rmsnorm_examples() {
    let (n, _) = build(0, |b| RmsNorm::new(b, 4, 1e-6));
    let y = n.forward(&c(Tensor::full(&[4], 3.0))).unwrap();
    for &v in y.value().data() {
        assert!((v - 1.0).abs() < 1e-6);
    }
    let z = n.forward(&c(Tensor::zeros(&[4]))).unwrap();
    assert!(z.value().data().iter().all(|&v| v == 0.0));
    let x = randn(&[3, 4], 1);
    let y = n.forward(&c(x.clone())).unwrap();
    for r in 0..3 {
        let ms_in = x.row(r).iter().map(|v| v * v).sum::<f64>() / 4.0;
        let rms = (y.value().row(r).iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
        assert!((rms - (ms_in / (ms_in + 1e-6)).sqrt()).abs() < 1e-12, "{rms}");
        assert!((rms - 1.0).abs() < 1e-5, "{rms}");
    }
}

#[test]
fn swiglu_param_count() {
    let (_, p) = build(0, |b| SwiGlu::new(b, 6, 10, 0.02, 0.02));
    assert_eq!(p.numel(), SwiGlu::<f64>::param_count(6, 10));
}

/// Plain multi-head attention over `[T, d]` written directly from the
/// definition.
fn naive_mha(x: &Tensor<f64>, p: &Params<f64>, h: usize, hd: usize) -> Tensor<f64> {
    let xv = c(x.clone());
    let proj = |n: &str| xv.matmul(p.get(n).unwrap()).unwrap().into_tensor();
    let (q, k, v) = (proj("w_q"), proj("w_k"), proj("w_v"));
    let t = x.shape()[0];
    let mut out = vec![0.0; t * h * hd];
    for head in 0..h {
        for i in 0..t {
            let mut w: Vec<f64> = (0..=i)
                .map(|j| (0..hd).map(|e| q.get(&[i, head * hd + e]) * k.get(&[j, head * hd + e])).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let m = w.iter().copied().fold(f64::MIN, f64::max);
            let z: f64 = w.iter().map(|s| (s - m).exp()).sum();
            w.iter_mut().for_each(|s| *s = (*s - m).exp() / z);
            for e in 0..hd {
                out[i * h * hd + head * hd + e] = (0..=i).map(|j| w[j] * v.get(&[j, head * hd + e])).sum();
            }
        }
    }
    c(Tensor::new(vec![t, h * hd], out).unwrap()).matmul(p.get("w_o").unwrap()).unwrap().into_tensor()
}

#[test]
fn attention_single_position_is_value_projection() {
    let (a, p) = build(2, |b| Attention::new(b, 8, 4, 2, 2, 0.3, 0.3));
    let x = randn(&[1, 8], 3);
    let y = a.forward(&c(x.clone())).unwrap();
    let xv = c(x);
    let v = xv.matmul(p.get("w_v").unwrap()).unwrap();
    // every query head reads its group's single value row
    let expanded: Vec<f64> = (0..4).flat_map(|h| v.value().data()[(h / 2) * 2..(h / 2) * 2 + 2].to_vec()).collect();
    let want = c(Tensor::new(vec![1, 8], expanded).unwrap()).matmul(p.get("w_o").unwrap()).unwrap();
    assert!(y.value().max_abs_diff(want.value()) < 1e-12);
}

#[test]
fn degenerate_gqa_matches_plain_attention() {
    let (a, p) = build(4, |b| Attention::new(b, 8, 2, 2, 4, 0.3, 0.3));
    let x = randn(&[5, 8], 5);
    let y = a.forward(&c(x.clone())).unwrap();
    assert!(y.value().max_abs_diff(&naive_mha(&x, &p, 2, 4)) < 1e-12);
}

#[test]
fn attention_prefill_then_decode_matches_full() {
    let (a, _) = build(6, |b| Attention::new(b, 8, 4, 2, 2, 0.3, 0.3));
    let x = randn(&[6, 8], 7);
    let full = a.forward(&c(x.clone())).unwrap().into_tensor();
    let mut cache = a.new_cache();
    let mut rows = a.forward_cached(&Tensor::new(vec![3, 8], x.data()[..24].to_vec()).unwrap(), &mut cache).unwrap().into_data();
    for t in 3..6 {
        let step = Tensor::new(vec![1, 8], x.row(t).to_vec()).unwrap();
        let before = cache.byte_size();
        rows.extend(a.forward_cached(&step, &mut cache).unwrap().into_data());
        assert_eq!(cache.byte_size() - before, 2 * a.kv_width() * 8);
    }
    assert_eq!(cache.len(), 6);
    let inc = Tensor::new(vec![6, 8], rows).unwrap();
    assert!(full.max_abs_diff(&inc) < 1e-5);
}

#[test]
fn ssm_single_step_state_is_delta_b_x() {
    let (t, ch, s) = (1, 3, 2);
    let u = randn(&[t, ch], 8);
    let delta = randn(&[t, ch], 9).map(f64::abs);
    let a = randn(&[ch, s], 10).map(|v| -v.abs());
    let b = randn(&[t, s], 11);
    let cm = randn(&[t, s], 12);
    let d = randn(&[ch], 13);
    let inputs = ScanInputs {
        u: u.data(),
        delta: delta.data(),
        a: a.data(),
        b: b.data(),
        cm: cm.data(),
        d: d.data(),
    };
    let dims = ScanDims { t, c: ch, s };
    let mut state = vec![0.0; ch * s];
    let y = kernels::scan_sequential(inputs, dims, &mut state, None);
    for c_ in 0..ch {
        for k in 0..s {
            assert_eq!(state[c_ * s + k], delta.data()[c_] * b.data()[k] * u.data()[c_]);
        }
    }
    let mut pstate = vec![0.0; ch * s];
    assert_eq!(kernels::scan_parallel(inputs, dims, &mut pstate, None), y);
}

#[test]
fn ssm_zero_input_gives_zero_output() {
    let (m, _) = build(14, |b| Mamba::new(b, DIMS, 0.3, 0.3));
    let y = m.forward(&c(Tensor::zeros(&[5, 8]))).unwrap();
    assert!(y.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn ssm_layer_parallel_and_stepwise_match_sequential() {
    let (m, p) = build(15, |b| Mamba::new(b, DIMS, 0.3, 0.3));
    assert_eq!(p.numel(), DIMS.param_count());
    let x = randn(&[32, 8], 16);
    let seq = m.forward_with(&c(x.clone()), ScanMode::Sequential).unwrap().into_tensor();
    let par = m.forward_with(&c(x.clone()), ScanMode::Parallel).unwrap().into_tensor();
    assert!(seq.max_abs_diff(&par) < 1e-6);

    let mut state = m.new_state();
    let size = state.byte_size();
    let mut rows = Vec::new();
    for t in 0..32 {
        let step = Tensor::new(vec![1, 8], x.row(t).to_vec()).unwrap();
        rows.extend(m.forward_stateful(&step, &mut state).unwrap().into_data());
        assert_eq!(state.byte_size(), size);
    }
    let stepped = Tensor::new(vec![32, 8], rows).unwrap();
    assert!(seq.max_abs_diff(&stepped) < 1e-6);

    let mut fresh = m.new_state();
    let first = m.forward_stateful(&Tensor::new(vec![1, 8], x.row(0).to_vec()).unwrap(), &mut fresh).unwrap();
    let one = m.forward(&c(Tensor::new(vec![1, 8], x.row(0).to_vec()).unwrap())).unwrap();
    assert_eq!(first.data(), one.value().data());
}

#[test]
fn both_mixers_are_causal() {
    let (m, _) = build(17, |b| Mamba::new(b, DIMS, 0.3, 0.3));
    let (a, _) = build(18, |b| Attention::new(b, 8, 4, 2, 2, 0.3, 0.3));
    let x = randn(&[7, 8], 19);
    let mut x2 = x.clone();
    for v in &mut x2.data_mut()[4 * 8..5 * 8] {
        *v += 1.0;
    }
    for f in [
        &|x: &Tensor<f64>| m.forward(&c(x.clone())).unwrap().into_tensor() as Tensor<f64>,
        &|x: &Tensor<f64>| a.forward(&c(x.clone())).unwrap().into_tensor(),
    ] as [&dyn Fn(&Tensor<f64>) -> Tensor<f64>; 2]
    {
        let (y1, y2) = (f(&x), f(&x2));
        assert_eq!(y1.data()[..4 * 8], y2.data()[..4 * 8]);
        assert_ne!(y1.data()[4 * 8..5 * 8], y2.data()[4 * 8..5 * 8]);
    }
}

#[test]
fn top_k_ties_prefer_lower_index() {
    assert_eq!(top_k_indices(&[1.0, 3.0, 3.0, 0.0], 2), vec![1, 2]);
    assert_eq!(top_k_indices(&[2.0, 2.0, 2.0], 2), vec![0, 1]);
}

#[test]
fn forced_routing_reproduces_expert_zero() {
    let (mut moe, _) = build(20, |b| Moe::new(b, 8, 6, 4, 2, 0.3, 0.3));
    moe.forced_expert = Some(0);
    let x = c(randn(&[5, 8], 21));
    let out = moe.forward(&x).unwrap();
    let direct = moe.experts[0].forward(&x).unwrap();
    assert_eq!(out.out.value().data(), direct.value().data());
    assert!(out.routing.weights.iter().all(|w| w == &vec![1.0]));
}

#[test]
fn routing_is_deterministic_and_recomputable() {
    let (moe, _) = build(22, |b| Moe::new(b, 8, 6, 16, 2, 0.3, 0.3));
    let mut x = randn(&[4, 8], 23);
    let row0 = x.row(0).to_vec();
    x.data_mut()[3 * 8..].copy_from_slice(&row0);
    let xv = c(x.clone());
    let out = moe.forward(&xv).unwrap();
    assert_eq!(out.routing.experts[0], out.routing.experts[3]);
    for t in 0..4 {
        let w = &out.routing.weights[t];
        assert_eq!(w.len(), 2);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let row = c(Tensor::new(vec![1, 8], x.row(t).to_vec()).unwrap());
        let mut want = vec![0.0; 8];
        for (&e, &g) in out.routing.experts[t].iter().zip(w) {
            let y = moe.experts[e].forward(&row).unwrap();
            for (acc, v) in want.iter_mut().zip(y.value().data()) {
                *acc += g * v;
            }
        }
        let got = out.out.value().row(t);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn parallel_scan_matches_sequential(t in 1usize..=64, ch in 1usize..=8, s in 1usize..=6, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let u = Tensor::<f64>::randn(&[t, ch], 1.0, &mut r);
        let delta = Tensor::<f64>::uniform(&[t, ch], 1e-3, 1.0, &mut r);
        let a = Tensor::<f64>::uniform(&[ch, s], -2.0, -0.05, &mut r);
        let b = Tensor::<f64>::randn(&[t, s], 1.0, &mut r);
        let cm = Tensor::<f64>::randn(&[t, s], 1.0, &mut r);
        let d = Tensor::<f64>::randn(&[ch], 1.0, &mut r);
        let h0: Vec<f64> = (0..ch * s).map(|_| rng::normal(&mut r)).collect();
        let inputs = ScanInputs { u: u.data(), delta: delta.data(), a: a.data(), b: b.data(), cm: cm.data(), d: d.data() };
        let dims = ScanDims { t, c: ch, s };
        let (mut s1, mut s2) = (h0.clone(), h0);
        let y1 = kernels::scan_sequential(inputs, dims, &mut s1, None);
        let y2 = kernels::scan_parallel(inputs, dims, &mut s2, None);
        for (a, b) in y1.iter().zip(&y2).chain(s1.iter().zip(&s2)) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn contraction_factor_in_unit_interval(delta in 1e-4f64..10.0, a_log in -3.0f64..3.0) {
        let decay = (delta * -(a_log.exp())).exp();
        prop_assert!(decay > 0.0 && decay < 1.0);
    }
}
