//! Analytic gradients against central finite differences (ε = 1e-4, f64).

use std::collections::HashMap;

use hybrid_mllm::layers::{Attention, Mamba, Moe, RmsNorm, SsmDims, SwiGlu};
use hybrid_mllm::model::{HybridConfig, HybridModel, ModelInput};
use hybrid_mllm::params::{Builder, Init, ParamSource, RandomInit};
use hybrid_mllm::rng;
use hybrid_mllm::tensor::gradcheck::{self, GradReport};
use hybrid_mllm::tensor::{ScanMode, Tensor, Var};
use hybrid_mllm::Result;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut rng::seeded(seed))
}

fn assert_ok(what: &str, r: GradReport) {
    assert!(r.max_rel_err <= TOL, "{what}: {r:?}");
}

fn check(what: &str, inputs: &[Tensor<f64>], f: impl Fn(&[Var<f64>]) -> Result<Var<f64>>) {
    assert_ok(what, gradcheck::check(inputs, EPS, FLOOR, f).unwrap());
}

/// Hands out caller-supplied vars by name.
struct VarSource(HashMap<String, Var<f64>>);

impl ParamSource<f64> for VarSource {
    fn fetch(&mut self, name: &str, _shape: &[usize], _init: Init) -> Result<Var<f64>> {
        Ok(self.0[name].clone())
    }
}

/// Checks gradients of a layer output with respect to its input and every
/// parameter.
fn check_layer<L>(
    what: &str,
    x: Tensor<f64>,
    build: impl Fn(&mut Builder<'_, f64>) -> Result<L>,
    run: impl Fn(&L, &Var<f64>) -> Result<Var<f64>>,
) {
    let mut init = RandomInit::new(11);
    let mut b = Builder::new(&mut init);
    build(&mut b).unwrap();
    let params = b.finish();
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut inputs = vec![x];
    inputs.extend(params.iter().map(|(_, v)| v.value().clone()));
    check(what, &inputs, |vars| {
        let map = names.iter().cloned().zip(vars[1..].iter().cloned()).collect();
        let mut src = VarSource(map);
        let mut b = Builder::new(&mut src);
        let layer = build(&mut b)?;
        run(&layer, &vars[0])
    });
}

#[test]
fn elementwise_primitives() {
    let x = randn(&[3, 4], 1);
    let y = randn(&[3, 4], 2);
    check("add", &[x.clone(), y.clone()], |v| v[0].add(&v[1]));
    check("sub", &[x.clone(), y.clone()], |v| v[0].sub(&v[1]));
    check("mul", &[x.clone(), y.clone()], |v| v[0].mul(&v[1]));
    check("neg", &[x.clone()], |v| v[0].neg());
    check("scale", &[x.clone()], |v| v[0].scale(-2.5));
    check("exp", &[x.clone()], |v| v[0].exp());
    check("log", &[x.map(|v| v.abs() + 0.5)], |v| v[0].log());
    check("silu", &[x.clone()], |v| v[0].silu());
    check("softplus", &[x.clone()], |v| v[0].softplus());
    check("gelu", &[x.clone()], |v| v[0].gelu());
    check("reduce_sum", &[x.clone()], |v| v[0].reduce_sum());
    check("reduce_mean", &[x.clone()], |v| v[0].reduce_mean());
    check("mean_rows", &[x.clone()], |v| v[0].mean_rows());
    check("transpose", &[x.clone()], |v| v[0].transpose());
    check("reshape", &[x.clone()], |v| v[0].reshape(&[2, 6]));
    check("add_bias", &[x.clone(), randn(&[4], 3)], |v| v[0].add_bias(&v[1]));
}

#[test]
fn matrix_and_structural_primitives() {
    let a = randn(&[3, 5], 4);
    let b = randn(&[5, 2], 5);
    check("matmul", &[a.clone(), b.clone()], |v| v[0].matmul(&v[1]));
    check("matmul_nt", &[a.clone(), randn(&[4, 5], 6)], |v| v[0].matmul_nt(&v[1]));
    check("softmax", &[a.clone()], |v| v[0].softmax_lastdim());
    check("rmsnorm", &[a.clone(), randn(&[5], 7)], |v| v[0].rmsnorm(&v[1], 1e-6));
    check("concat0", &[a.clone(), randn(&[2, 5], 8)], |v| Var::concat(&v[..2], 0));
    check("concat1", &[a.clone(), randn(&[3, 2], 9)], |v| Var::concat(&v[..2], 1));
    check("slice", &[a.clone()], |v| v[0].slice(1, 1, 4));
    check("embedding", &[a.clone()], |v| Var::embedding_lookup(&v[0], &[2, 0, 2, 1]));
    check("gather_rows", &[a.clone()], |v| v[0].gather_rows(&[1, 1, 0]));
    check("scatter_add_rows", &[a.clone()], |v| v[0].scatter_add_rows(&[3, 0, 3], 4));
    check("mul_rows", &[a.clone(), randn(&[3], 10)], |v| v[0].mul_rows(&v[1]));
    check("gather_cells", &[a.clone()], |v| v[0].gather_cells(&[(0, 1), (2, 4), (0, 1)]));
    check("place_rows", &[randn(&[4, 5], 11), randn(&[2, 5], 12)], |v| {
        v[0].place_rows(&[3, 1], &v[1])
    });
    check("topk_gates", &[randn(&[3, 6], 13)], |v| {
        v[0].topk_gates(&[vec![0, 3], vec![5, 1], vec![2, 4]])
    });
    check("cross_entropy", &[randn(&[4, 7], 14)], |v| v[0].cross_entropy(&[0, 6, 3, 3]));
    check("cross_entropy_masked", &[randn(&[4, 7], 15)], |v| {
        v[0].cross_entropy_masked(&[None, Some(2), None, Some(5)])
    });
}

#[test]
fn sequence_primitives() {
    let (t, h, kv, hd) = (5, 4, 2, 3);
    let q = randn(&[t, h * hd], 20);
    let k = randn(&[t, kv * hd], 21);
    let v = randn(&[t, kv * hd], 22);
    check("attention causal", &[q.clone(), k.clone(), v.clone()], |x| {
        Var::attention(&x[0], &x[1], &x[2], h, kv, true)
    });
    check("attention bidirectional", &[q, k, v], |x| {
        Var::attention(&x[0], &x[1], &x[2], h, kv, false)
    });
    check("causal_conv1d", &[randn(&[6, 3], 23), randn(&[3, 4], 24), randn(&[3], 25)], |x| {
        x[0].causal_conv1d(&x[1], &x[2])
    });
    let (t, c, n) = (6, 3, 2);
    let scan_inputs = [
        randn(&[t, c], 30),
        randn(&[t, c], 31).map(|v| 0.1 + v.abs()),
        randn(&[c, n], 32).map(|v| -0.2 - v.abs()),
        randn(&[t, n], 33),
        randn(&[t, n], 34),
        randn(&[c], 35),
    ];
    for mode in [ScanMode::Sequential, ScanMode::Parallel] {
        check(&format!("selective_scan {mode:?}"), &scan_inputs, |x| {
            Var::selective_scan(&x[0], &x[1], &x[2], &x[3], &x[4], &x[5], mode)
        });
    }
}

#[test]
fn composite_mlp_loss() {
    // two-layer network with softmax cross entropy on top
    let inputs = [randn(&[4, 3], 40), randn(&[3, 5], 41), randn(&[5], 42), randn(&[5, 6], 43)];
    let r = gradcheck::check(&inputs, EPS, FLOOR, |v| {
        v[0].matmul(&v[1])?.add_bias(&v[2])?.gelu()?.matmul(&v[3])?.cross_entropy(&[1, 0, 5, 2])
    })
    .unwrap();
    assert_ok("mlp", r);
}

#[test]
fn layer_gradients() {
    let x = randn(&[5, 6], 50);
    check_layer("rmsnorm", x.clone(), |b| RmsNorm::new(b, 6, 1e-6), |l, x| l.forward(x));
    check_layer("swiglu", x.clone(), |b| SwiGlu::new(b, 6, 8, 0.5, 0.5), |l, x| l.forward(x));
    check_layer(
        "attention",
        x.clone(),
        |b| Attention::new(b, 6, 4, 2, 3, 0.5, 0.5),
        |l, x| l.forward(x),
    );
    let dims = SsmDims {
        d_model: 6,
        d_inner: 8,
        d_state: 3,
        d_conv: 3,
        dt_rank: 2,
    };
    for mode in [ScanMode::Sequential, ScanMode::Parallel] {
        check_layer(
            &format!("mamba {mode:?}"),
            x.clone(),
            |b| Mamba::new(b, dims, 0.5, 0.5),
            move |l, x| l.forward_with(x, mode),
        );
    }
    check_layer(
        "moe",
        x.clone(),
        |b| Moe::new(b, 6, 5, 4, 2, 0.5, 0.5),
        |l, x| Ok(l.forward(x)?.out),
    );
    check_layer(
        "moe with balance loss",
        x,
        |b| {
            let mut m = Moe::new(b, 6, 5, 4, 2, 0.5, 0.5)?;
            m.aux_loss = true;
            Ok(m)
        },
        |l, x| Ok(l.forward(x)?.aux_loss.expect("enabled")),
    );
}

#[test]
fn whole_model_gradients() {
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
    let ids = [1, 4, 9, 4, 0];
    let r = gradcheck::check(&inputs, EPS, FLOOR, |vars| {
        let mut src = VarSource(names.iter().cloned().zip(vars.iter().cloned()).collect());
        let m = HybridModel::build(&cfg, &mut src)?;
        m.forward(ModelInput::text(&ids))?.logits.cross_entropy(&[4, 9, 4, 0, 2])
    })
    .unwrap();
    assert_ok("model", r);
}

#[test]
fn projector_gradients() {
    use hybrid_mllm::vision::{Projector, ProjectorConfig};
    let cfg = ProjectorConfig {
        d_vision: 4,
        d_hidden: 6,
        d_model: 5,
        init_std: 0.5,
    };
    let p = Projector::<f64>::random(&cfg, 0).unwrap();
    let names: Vec<String> = p.params().iter().map(|(n, _)| n.to_string()).collect();
    let mut inputs = vec![randn(&[3, 4], 60)];
    inputs.extend(p.params().iter().enumerate().map(|(i, (_, v))| {
        v.value().map(|x| x + 0.1 * (i as f64 + 1.0))
    }));
    check("projector", &inputs, |vars| {
        let mut src = VarSource(names.iter().cloned().zip(vars[1..].iter().cloned()).collect());
        Projector::build(&cfg, &mut src)?.forward(&vars[0])
    });
}
