use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Builder, Init, ParamSource, Params, RandomInit, TensorMap};
use crate::tensor::{Scalar, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorConfig {
    pub d_vision: usize,
    pub d_hidden: usize,
    pub d_model: usize,
    pub init_std: f64,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        Self {
            d_vision: 64,
            d_hidden: 256,
            d_model: 256,
            init_std: 0.02,
        }
    }
}

/// Two affine maps with a GELU between them, applied tokenwise.
#[derive(Clone, Debug)]
pub struct Projector<S: Scalar> {
    pub cfg: ProjectorConfig,
    pub w1: Var<S>,
    pub b1: Var<S>,
    pub w2: Var<S>,
    pub b2: Var<S>,
    params: Params<S>,
}

impl<S: Scalar> Projector<S> {
    pub fn build(cfg: &ProjectorConfig, source: &mut dyn ParamSource<S>) -> Result<Self> {
        if cfg.d_vision == 0 || cfg.d_hidden == 0 || cfg.d_model == 0 {
            return Err(Error::InvalidConfig(vec!["projector widths must be positive".into()]));
        }
        let mut b = Builder::new(source);
        let (w1, b1, w2, b2) = b.scope("projector", |b| {
            Ok((
                b.param("w1", &[cfg.d_vision, cfg.d_hidden], Init::Normal(1.0 / (cfg.d_vision as f64).sqrt()))?,
                b.param("b1", &[cfg.d_hidden], Init::Zeros)?,
                b.param("w2", &[cfg.d_hidden, cfg.d_model], Init::Normal(cfg.init_std))?,
                b.param("b2", &[cfg.d_model], Init::Zeros)?,
            ))
        })?;
        Ok(Self {
            cfg: cfg.clone(),
            w1,
            b1,
            w2,
            b2,
            params: b.finish(),
        })
    }

    pub fn random(cfg: &ProjectorConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, &mut RandomInit::new(seed))
    }

    pub fn from_map(cfg: &ProjectorConfig, map: &TensorMap<S>) -> Result<Self> {
        Self::build(cfg, &mut &*map)
    }

    pub fn params(&self) -> &Params<S> {
        &self.params
    }

    /// `x: [n, d_vision] → [n, d_model]`.
    pub fn forward(&self, x: &Var<S>) -> Result<Var<S>> {
        if x.shape().last() != Some(&self.cfg.d_vision) {
            return Err(Error::ShapeMismatch {
                op: "project",
                lhs: x.shape().to_vec(),
                rhs: vec![self.cfg.d_vision],
            });
        }
        x.matmul(&self.w1)?
            .add_bias(&self.b1)?
            .gelu()?
            .matmul(&self.w2)?
            .add_bias(&self.b2)
    }
}
