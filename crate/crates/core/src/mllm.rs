//! The assembled multimodal model: vision encoder, 2D pooling, projector
//! and hybrid decoder, with a single parameter namespace.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{checkpoint, HybridConfig, HybridModel, ModelInput};
use crate::params::{Bind, ParamSource, RandomInit, TensorMap};
use crate::protocol::MultimodalSequence;
use crate::tensor::{Scalar, Tape, Tensor, Var};
use crate::vision::{pool2d, EncoderConfig, Image, PoolMode, Projector, ProjectorConfig, VisionEncoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmConfig {
    pub model: HybridConfig,
    pub encoder: EncoderConfig,
    pub projector: ProjectorConfig,
    /// Side of the square pooling window applied to encoder outputs.
    pub pool: usize,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            model: HybridConfig::default(),
            encoder: EncoderConfig::default(),
            projector: ProjectorConfig::default(),
            pool: 2,
        }
    }
}

impl VlmConfig {
    /// CPU-sized configuration: 24-pixel images, 36 patches pooled to 9
    /// tokens, and one 8-layer hybrid stack of width 64.
    pub fn desk() -> Self {
        let d = 64;
        Self {
            model: HybridConfig {
                d_model: d,
                d_ff: 128,
                n_stacks: 1,
                layers_per_stack: 8,
                n_experts: 4,
                top_k: 2,
                n_heads: 4,
                n_kv_heads: 2,
                head_dim: 16,
                d_state: 8,
                tokens_per_image: 9,
                ..HybridConfig::default()
            },
            encoder: EncoderConfig {
                image_side: 24,
                patch: 4,
                d_vision: 32,
                n_layers: 1,
                n_heads: 2,
                d_ff: 64,
                ..EncoderConfig::default()
            },
            projector: ProjectorConfig {
                d_vision: 32,
                d_hidden: 64,
                d_model: d,
                ..ProjectorConfig::default()
            },
            pool: 2,
        }
    }

    /// Tokens per image after pooling.
    pub fn tokens_per_image(&self) -> usize {
        let side = self.encoder.grid() / self.pool.max(1);
        side * side
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for r in [self.model.validate(), self.encoder.validate()] {
            if let Err(Error::InvalidConfig(e)) = r {
                errs.extend(e);
            }
        }
        if self.pool == 0 || self.encoder.grid() % self.pool != 0 {
            errs.push(format!("pool {} must divide the patch grid {}", self.pool, self.encoder.grid()));
        } else if self.tokens_per_image() != self.model.tokens_per_image {
            errs.push(format!(
                "pooled tokens per image {} differ from model tokens_per_image {}",
                self.tokens_per_image(),
                self.model.tokens_per_image
            ));
        }
        if self.projector.d_vision != self.encoder.d_vision {
            errs.push("projector input width must equal encoder width".into());
        }
        if self.projector.d_model != self.model.d_model {
            errs.push("projector output width must equal model width".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

#[derive(Clone, Debug)]
pub struct VisionLanguageModel<S: Scalar> {
    pub cfg: VlmConfig,
    pub model: HybridModel<S>,
    pub encoder: VisionEncoder<S>,
    pub projector: Projector<S>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: VlmConfig,
}

const KIND: &str = "vision_language_model";

impl<S: Scalar> VisionLanguageModel<S> {
    pub fn build(cfg: &VlmConfig, source: &mut dyn ParamSource<S>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            model: HybridModel::build(&cfg.model, source)?,
            encoder: VisionEncoder::build(&cfg.encoder, source)?,
            projector: Projector::build(&cfg.projector, source)?,
        })
    }

    pub fn random(cfg: &VlmConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, &mut RandomInit::new(seed))
    }

    pub fn from_map(cfg: &VlmConfig, map: &TensorMap<S>) -> Result<Self> {
        Self::build(cfg, &mut &*map)
    }

    /// Same parameters as tape leaves; `trainable` selects which get
    /// gradients.
    pub fn bind(cfg: &VlmConfig, map: &TensorMap<S>, tape: &Tape<S>, trainable: &dyn Fn(&str) -> bool) -> Result<Self> {
        Self::build(cfg, &mut Bind { map, tape, trainable })
    }

    pub fn to_map(&self) -> TensorMap<S> {
        let mut map = self.model.to_map();
        map.extend(self.encoder.params().to_map());
        map.extend(self.projector.params().to_map());
        map
    }

    /// Every parameter name with its tracked variable.
    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Var<S>)> {
        self.model
            .params()
            .iter()
            .chain(self.encoder.params().iter())
            .chain(self.projector.params().iter())
    }

    /// Saves configuration and parameters; returns the file's SHA-256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let meta = serde_json::to_value(Meta {
            kind: KIND.into(),
            config: self.cfg.clone(),
        })?;
        checkpoint::write(path, meta, &self.to_map())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, map) = checkpoint::read::<S>(path)?;
        let meta: Meta = serde_json::from_value(meta)?;
        if meta.kind != KIND {
            return Err(Error::CheckpointFormat(format!("expected a {KIND} checkpoint, found {}", meta.kind)));
        }
        Self::from_map(&meta.config, &map)
    }

    /// Pooled encoder features of one image, `[tokens_per_image, d_vision]`.
    pub fn features(&self, image: &Image) -> Result<Tensor<S>> {
        let side = self.cfg.encoder.image_side;
        if image.height() != side || image.width() != side {
            return Err(Error::ImageSize {
                got_h: image.height(),
                got_w: image.width(),
                want: side,
            });
        }
        let grid = self.encoder.encode(image)?;
        Ok(pool2d(&grid, self.cfg.pool, PoolMode::Mean)?.tokens)
    }

    /// Slot positions and projected embeddings for `seq`, taking image `i`
    /// from `features[i]`.
    pub fn image_inputs(&self, seq: &MultimodalSequence, features: &[Tensor<S>]) -> Result<(Vec<usize>, Option<Var<S>>)> {
        let placed = seq.image_positions();
        if placed.is_empty() {
            return Ok((Vec::new(), None));
        }
        let mut slots = Vec::new();
        let mut rows = Vec::with_capacity(placed.len());
        for (index, range) in placed {
            let f = features.get(index).ok_or(Error::SlotMismatch {
                declared: index + 1,
                supplied: features.len(),
            })?;
            if f.shape()[0] != range.len() {
                return Err(Error::SlotMismatch {
                    declared: range.len(),
                    supplied: f.shape()[0],
                });
            }
            slots.extend(range);
            rows.push(Var::constant(f.clone()));
        }
        let stacked = Var::concat(&rows, 0)?;
        Ok((slots, Some(self.projector.forward(&stacked)?)))
    }

    /// Logits `[T, vocab]` for a whole rendered sequence.
    pub fn logits(&self, seq: &MultimodalSequence, features: &[Tensor<S>]) -> Result<Tensor<S>> {
        let ids = seq.render();
        let (slots, embeds) = self.image_inputs(seq, features)?;
        self.model.logits(ModelInput {
            ids: &ids,
            image_slots: &slots,
            image_embeds: embeds.as_ref(),
        })
    }

    /// Next-token logits after the prompt, `[vocab]`.
    pub fn next_logits(&self, seq: &MultimodalSequence, features: &[Tensor<S>]) -> Result<Tensor<S>> {
        let ids = seq.render();
        let (slots, embeds) = self.image_inputs(seq, features)?;
        let mut session = self.model.new_session();
        session.prefill(ModelInput {
            ids: &ids,
            image_slots: &slots,
            image_embeds: embeds.as_ref(),
        })
    }

    /// Greedy continuation of up to `max_new` tokens, stopping after `stop`.
    pub fn generate(
        &self,
        seq: &MultimodalSequence,
        features: &[Tensor<S>],
        max_new: usize,
        stop: Option<usize>,
    ) -> Result<Vec<usize>> {
        if max_new == 0 {
            return Ok(Vec::new());
        }
        let ids = seq.render();
        let (slots, embeds) = self.image_inputs(seq, features)?;
        let mut session = self.model.new_session();
        let first = session.prefill(ModelInput {
            ids: &ids,
            image_slots: &slots,
            image_embeds: embeds.as_ref(),
        })?;
        session.generate_greedy(&first, max_new, stop)
    }
}
