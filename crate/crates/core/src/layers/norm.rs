use crate::error::Result;
use crate::params::{Builder, Init};
use crate::tensor::{Scalar, Var};

pub const DEFAULT_EPS: f64 = 1e-6;

/// Root-mean-square normalization with a learned per-feature gain.
#[derive(Clone, Debug)]
pub struct RmsNorm<S: Scalar> {
    pub gain: Var<S>,
    pub eps: f64,
}

impl<S: Scalar> RmsNorm<S> {
    pub fn new(b: &mut Builder<'_, S>, d: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            gain: b.param("gain", &[d], Init::Ones)?,
            eps,
        })
    }

    pub fn forward(&self, x: &Var<S>) -> Result<Var<S>> {
        x.rmsnorm(&self.gain, self.eps)
    }
}
