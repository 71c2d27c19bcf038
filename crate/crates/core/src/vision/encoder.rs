use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Attention, RmsNorm, SwiGlu, DEFAULT_EPS};
use crate::params::{Builder, Init, ParamSource, Params, RandomInit, TensorMap};
use crate::tensor::{Scalar, Tensor, Var};

use super::Image;

/// Geometry and width of the vision encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub image_side: usize,
    pub patch: usize,
    pub channels: usize,
    pub d_vision: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_side: 96,
            patch: 4,
            channels: 3,
            d_vision: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            init_std: 0.02,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Patches per side.
    pub fn grid(&self) -> usize {
        self.image_side / self.patch
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.patch == 0 || self.image_side == 0 || self.image_side % self.patch != 0 {
            errs.push(format!("image side {} must be a positive multiple of patch {}", self.image_side, self.patch));
        }
        if self.d_vision == 0 || self.n_heads == 0 || self.d_vision % self.n_heads != 0 {
            errs.push(format!("d_vision {} must be a positive multiple of n_heads {}", self.d_vision, self.n_heads));
        }
        if self.channels == 0 || self.d_ff == 0 {
            errs.push("channels and d_ff must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

/// Square grid of patch features in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid<S: Scalar> {
    pub side: usize,
    /// `[side², d]`
    pub tokens: Tensor<S>,
}

impl<S: Scalar> PatchGrid<S> {
    pub fn new(side: usize, tokens: Tensor<S>) -> Result<Self> {
        if tokens.rank() != 2 || tokens.shape()[0] != side * side {
            return Err(Error::shape("patch grid", format!("{:?} is not a {side}x{side} grid", tokens.shape())));
        }
        Ok(Self { side, tokens })
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.tokens.shape()[1]
    }

    pub fn token(&self, y: usize, x: usize) -> &[S] {
        self.tokens.row(y * self.side + x)
    }
}

#[derive(Clone, Debug)]
struct EncoderLayer<S: Scalar> {
    attn_norm: RmsNorm<S>,
    attn: Attention<S>,
    mlp_norm: RmsNorm<S>,
    mlp: SwiGlu<S>,
}

/// Patchify, linear embedding, then a small bidirectional attention stack.
/// No position embedding is added.
#[derive(Clone, Debug)]
pub struct VisionEncoder<S: Scalar> {
    pub cfg: EncoderConfig,
    patch_w: Var<S>,
    patch_b: Var<S>,
    layers: Vec<EncoderLayer<S>>,
    params: Params<S>,
}

impl<S: Scalar> VisionEncoder<S> {
    pub fn build(cfg: &EncoderConfig, source: &mut dyn ParamSource<S>) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder::new(source);
        let (d, std) = (cfg.d_vision, cfg.init_std);
        let out_std = std / (2.0 * cfg.n_layers.max(1) as f64).sqrt();
        let patch_in = cfg.patch * cfg.patch * cfg.channels;
        let (patch_w, patch_b, layers) = b.scope("encoder", |b| {
            let w = b.param("patch_w", &[patch_in, d], Init::Normal(1.0 / (patch_in as f64).sqrt()))?;
            let bias = b.param("patch_b", &[d], Init::Zeros)?;
            let layers = (0..cfg.n_layers)
                .map(|i| {
                    b.scope(format!("layers.{i}"), |b| {
                        let hd = d / cfg.n_heads;
                        let mut attn = b.scope("attn", |b| Attention::new(b, d, cfg.n_heads, cfg.n_heads, hd, std, out_std))?;
                        attn.causal = false;
                        Ok(EncoderLayer {
                            attn_norm: b.scope("attn_norm", |b| RmsNorm::new(b, d, DEFAULT_EPS))?,
                            attn,
                            mlp_norm: b.scope("mlp_norm", |b| RmsNorm::new(b, d, DEFAULT_EPS))?,
                            mlp: b.scope("mlp", |b| SwiGlu::new(b, d, cfg.d_ff, std, out_std))?,
                        })
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((w, bias, layers))
        })?;
        Ok(Self {
            cfg: cfg.clone(),
            patch_w,
            patch_b,
            layers,
            params: b.finish(),
        })
    }

    pub fn random(cfg: &EncoderConfig) -> Result<Self> {
        Self::build(cfg, &mut RandomInit::new(cfg.seed))
    }

    pub fn from_map(cfg: &EncoderConfig, map: &TensorMap<S>) -> Result<Self> {
        Self::build(cfg, &mut &*map)
    }

    pub fn params(&self) -> &Params<S> {
        &self.params
    }

    /// Flattened `patch × patch × channels` pixel blocks in raster order.
    pub fn patchify(&self, image: &Image) -> Result<Tensor<S>> {
        let side = self.cfg.image_side;
        if image.height() != side || image.width() != side || image.channels() != self.cfg.channels {
            return Err(Error::ImageSize {
                got_h: image.height(),
                got_w: image.width(),
                want: side,
            });
        }
        let (p, g, c) = (self.cfg.patch, self.cfg.grid(), self.cfg.channels);
        let mut data = Vec::with_capacity(g * g * p * p * c);
        for gy in 0..g {
            for gx in 0..g {
                for y in 0..p {
                    for x in 0..p {
                        data.extend(image.pixel(gy * p + y, gx * p + x).iter().map(|&v| S::of(v as f64)));
                    }
                }
            }
        }
        Tensor::new(vec![g * g, p * p * c], data)
    }

    /// Linear patch embeddings before the attention stack, `[g², d_vision]`.
    pub fn patch_embeddings(&self, image: &Image) -> Result<Tensor<S>> {
        let x = Var::constant(self.patchify(image)?);
        Ok(x.matmul(&self.patch_w)?.add_bias(&self.patch_b)?.into_tensor())
    }

    pub fn encode(&self, image: &Image) -> Result<PatchGrid<S>> {
        let mut h = Var::constant(self.patch_embeddings(image)?);
        for l in &self.layers {
            h = h.add(&l.attn.forward(&l.attn_norm.forward(&h)?)?)?;
            h = h.add(&l.mlp.forward(&l.mlp_norm.forward(&h)?)?)?;
        }
        PatchGrid::new(self.cfg.grid(), h.into_tensor())
    }
}
