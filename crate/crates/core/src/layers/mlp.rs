use crate::error::Result;
use crate::params::{Builder, Init};
use crate::tensor::{Scalar, Var};

/// Gated feed-forward block: `(silu(x·W_gate) ⊙ x·W_up)·W_down`.
#[derive(Clone, Debug)]
pub struct SwiGlu<S: Scalar> {
    pub w_gate: Var<S>,
    pub w_up: Var<S>,
    pub w_down: Var<S>,
}

impl<S: Scalar> SwiGlu<S> {
    /// `out_std` is the initialization scale of the output projection.
    pub fn new(b: &mut Builder<'_, S>, d_model: usize, d_ff: usize, std: f64, out_std: f64) -> Result<Self> {
        Ok(Self {
            w_gate: b.param("w_gate", &[d_model, d_ff], Init::Normal(std))?,
            w_up: b.param("w_up", &[d_model, d_ff], Init::Normal(std))?,
            w_down: b.param("w_down", &[d_ff, d_model], Init::Normal(out_std))?,
        })
    }

    pub fn param_count(d_model: usize, d_ff: usize) -> usize {
        3 * d_model * d_ff
    }

    pub fn forward(&self, x: &Var<S>) -> Result<Var<S>> {
        let gate = x.matmul(&self.w_gate)?.silu()?;
        let up = x.matmul(&self.w_up)?;
        gate.mul(&up)?.matmul(&self.w_down)
    }
}
