//! Central finite-difference verification of recorded gradients.

use crate::error::Result;
use crate::rng;

use super::{Tape, Tensor, Var};

/// Worst disagreement found by [`check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares the gradients of `sum(f(inputs) ⊙ R)` (with a fixed random `R`)
/// against central differences of step `eps`. Magnitudes below `floor`
/// are compared absolutely against `floor`.
pub fn check(
    inputs: &[Tensor<f64>],
    eps: f64,
    floor: f64,
    f: impl Fn(&[Var<f64>]) -> Result<Var<f64>>,
) -> Result<GradReport> {
    let weights = {
        let probe: Vec<Var<f64>> = inputs.iter().cloned().map(Var::constant).collect();
        let shape = f(&probe)?.shape().to_vec();
        let mut r = rng::seeded(0x9e37);
        Tensor::uniform(&shape, -1.0, 1.0, &mut r)
    };
    let loss_of = |vars: &[Var<f64>]| -> Result<Var<f64>> {
        f(vars)?.mul(&Var::constant(weights.clone()))?.reduce_sum()
    };

    let tape = Tape::new();
    let vars: Vec<Var<f64>> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let grads = loss_of(&vars)?.backward()?;

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_input: 0,
        worst_index: 0,
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(var);
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            let eval = |x: f64, work: &mut Vec<Tensor<f64>>| -> Result<f64> {
                work[i].data_mut()[j] = x;
                let consts: Vec<Var<f64>> = work.iter().cloned().map(Var::constant).collect();
                Ok(loss_of(&consts)?.value().item())
            };
            let plus = eval(orig + eps, &mut work)?;
            let minus = eval(orig - eps, &mut work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_input = i;
                report.worst_index = j;
            }
        }
    }
    Ok(report)
}
