//! Parallel versus sequential selective scan on random inputs: worst
//! max-abs deviation and wall time over sequence lengths.

use std::time::Instant;

use hybrid_mllm::rng;
use hybrid_mllm::tensor::kernels::{scan_parallel, scan_sequential, ScanDims, ScanInputs};
use hybrid_mllm::tensor::Tensor;

fn main() {
    let (c, s) = (16, 8);
    for t in [16, 64, 256, 1024] {
        let mut r = rng::seeded(t as u64);
        let u = Tensor::<f64>::randn(&[t, c], 1.0, &mut r);
        let delta = Tensor::<f64>::uniform(&[t, c], 1e-3, 1.0, &mut r);
        let a = Tensor::<f64>::uniform(&[c, s], -2.0, -0.05, &mut r);
        let b = Tensor::<f64>::randn(&[t, s], 1.0, &mut r);
        let cm = Tensor::<f64>::randn(&[t, s], 1.0, &mut r);
        let d = Tensor::<f64>::randn(&[c], 1.0, &mut r);
        let inputs = ScanInputs {
            u: u.data(),
            delta: delta.data(),
            a: a.data(),
            b: b.data(),
            cm: cm.data(),
            d: d.data(),
        };
        let dims = ScanDims { t, c, s };
        let (mut h1, mut h2) = (vec![0.0; c * s], vec![0.0; c * s]);
        let t0 = Instant::now();
        let y1 = scan_sequential(inputs, dims, &mut h1, None);
        let seq = t0.elapsed();
        let t0 = Instant::now();
        let y2 = scan_parallel(inputs, dims, &mut h2, None);
        let par = t0.elapsed();
        let err = y1
            .iter()
            .zip(&y2)
            .chain(h1.iter().zip(&h2))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        println!("T {t:>5}: max |seq - par| {err:.2e}  sequential {seq:?}  parallel {par:?}");
    }
}
