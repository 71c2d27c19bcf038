use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Attention, SsmDims, SwiGlu, DEFAULT_EPS};
use crate::tensor::ScanMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixerKind {
    Mamba,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpKind {
    Dense,
    Moe,
}

/// Structural role of one decoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub mixer: MixerKind,
    pub mlp: MlpKind,
}

/// Complete structural description of the hybrid decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub n_stacks: usize,
    pub layers_per_stack: usize,
    /// Indices within each stack that hold attention; all others are Mamba.
    pub attn_positions: Vec<usize>,
    /// MoE replaces the dense MLP on stack indices `i` with
    /// `i % moe_stride == moe_stride − 1`; 0 disables MoE.
    pub moe_stride: usize,
    pub n_experts: usize,
    pub top_k: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
    pub d_state: usize,
    pub d_conv: usize,
    /// `d_inner = ssm_expand · d_model`.
    pub ssm_expand: usize,
    pub tokens_per_image: usize,
    pub norm_eps: f64,
    pub init_std: f64,
    pub tie_embeddings: bool,
    pub scan_mode: ScanMode,
    pub moe_aux_loss: bool,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            d_ff: 704,
            vocab_size: 512,
            n_stacks: 4,
            layers_per_stack: 8,
            attn_positions: vec![3],
            moe_stride: 2,
            n_experts: 16,
            top_k: 2,
            n_heads: 8,
            n_kv_heads: 2,
            head_dim: 32,
            d_state: 16,
            d_conv: 4,
            ssm_expand: 2,
            tokens_per_image: 144,
            norm_eps: DEFAULT_EPS,
            init_std: 0.02,
            tie_embeddings: true,
            scan_mode: ScanMode::Sequential,
            moe_aux_loss: false,
        }
    }
}

/// Closed-form parameter totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub active: usize,
}

impl HybridConfig {
    pub fn n_layers(&self) -> usize {
        self.n_stacks * self.layers_per_stack
    }

    pub fn dt_rank(&self) -> usize {
        self.d_model.div_ceil(16)
    }

    pub fn ssm_dims(&self) -> SsmDims {
        SsmDims {
            d_model: self.d_model,
            d_inner: self.ssm_expand * self.d_model,
            d_state: self.d_state,
            d_conv: self.d_conv,
            dt_rank: self.dt_rank(),
        }
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        (0..self.n_layers())
            .map(|index| {
                let pos = index % self.layers_per_stack;
                LayerSpec {
                    index,
                    mixer: if self.attn_positions.contains(&pos) {
                        MixerKind::Attention
                    } else {
                        MixerKind::Mamba
                    },
                    mlp: if self.moe_stride > 0 && pos % self.moe_stride == self.moe_stride - 1 {
                        MlpKind::Moe
                    } else {
                        MlpKind::Dense
                    },
                }
            })
            .collect()
    }

    pub fn count_layers(&self, mixer: Option<MixerKind>, mlp: Option<MlpKind>) -> usize {
        self.layer_specs()
            .iter()
            .filter(|s| mixer.is_none_or(|m| s.mixer == m) && mlp.is_none_or(|m| s.mlp == m))
            .count()
    }

    pub fn n_attn_layers(&self) -> usize {
        self.count_layers(Some(MixerKind::Attention), None)
    }

    /// Mamba layers per attention layer (infinite when there is none).
    pub fn mamba_to_attn_ratio(&self) -> f64 {
        self.count_layers(Some(MixerKind::Mamba), None) as f64 / self.n_attn_layers() as f64
    }

    /// Scalars appended to the KV caches for every processed position.
    pub fn kv_scalars_per_token(&self) -> usize {
        2 * self.n_kv_heads * self.head_dim * self.n_attn_layers()
    }

    /// Every violated invariant, or `Ok` when there are none.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let positive = [
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("n_stacks", self.n_stacks),
            ("layers_per_stack", self.layers_per_stack),
            ("n_heads", self.n_heads),
            ("n_kv_heads", self.n_kv_heads),
            ("head_dim", self.head_dim),
            ("d_state", self.d_state),
            ("d_conv", self.d_conv),
            ("ssm_expand", self.ssm_expand),
            ("tokens_per_image", self.tokens_per_image),
        ];
        for (name, v) in positive {
            if v == 0 {
                errs.push(format!("{name} must be positive"));
            }
        }
        if self.n_kv_heads > 0 && self.n_heads % self.n_kv_heads != 0 {
            errs.push(format!(
                "n_heads ({}) must be a multiple of n_kv_heads ({})",
                self.n_heads, self.n_kv_heads
            ));
        }
        if let Some(p) = self.attn_positions.iter().find(|&&p| p >= self.layers_per_stack) {
            errs.push(format!("attention position {p} outside a stack of {}", self.layers_per_stack));
        }
        if self.moe_stride > 0 && (self.n_experts == 0 || self.top_k == 0 || self.top_k > self.n_experts) {
            errs.push(format!(
                "top_k ({}) must be in 1..=n_experts ({})",
                self.top_k, self.n_experts
            ));
        }
        if !(self.norm_eps > 0.0) {
            errs.push("norm_eps must be positive".into());
        }
        if !(self.init_std > 0.0) {
            errs.push("init_std must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    /// Initialization scale of projections that write into the residual
    /// stream.
    pub fn out_std(&self) -> f64 {
        self.init_std / (2.0 * self.n_layers() as f64).sqrt()
    }

    /// Parameters of one MoE block: router plus every expert.
    pub fn moe_params(&self) -> usize {
        self.d_model * self.n_experts + self.n_experts * SwiGlu::<f64>::param_count(self.d_model, self.d_ff)
    }

    /// Totals derived from the configuration alone.
    pub fn param_count(&self) -> ParamCount {
        let d = self.d_model;
        let dense = SwiGlu::<f64>::param_count(d, self.d_ff);
        let attn = Attention::<f64>::param_count(d, self.n_heads, self.n_kv_heads, self.head_dim);
        let ssm = self.ssm_dims().param_count();
        let mut total = self.vocab_size * d + d;
        if !self.tie_embeddings {
            total += self.vocab_size * d;
        }
        let mut active = total;
        for spec in self.layer_specs() {
            let mixer = match spec.mixer {
                MixerKind::Attention => attn,
                MixerKind::Mamba => ssm,
            };
            let base = 2 * d + mixer;
            total += base;
            active += base;
            match spec.mlp {
                MlpKind::Dense => {
                    total += dense;
                    active += dense;
                }
                MlpKind::Moe => {
                    total += self.moe_params();
                    active += d * self.n_experts + self.top_k * dense;
                }
            }
        }
        ParamCount { total, active }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_seven_to_one_with_sixteen_moe_layers() {
        let c = HybridConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_layers(), 32);
        assert_eq!(c.n_attn_layers(), 4);
        assert_eq!(c.count_layers(Some(MixerKind::Mamba), None), 28);
        assert_eq!(c.mamba_to_attn_ratio(), 7.0);
        assert_eq!(c.count_layers(None, Some(MlpKind::Moe)), 16);
        assert_eq!(c.dt_rank(), 16);
    }

    #[test]
    fn validation_lists_every_violation() {
        let c = HybridConfig {
            d_model: 0,
            n_heads: 6,
            n_kv_heads: 4,
            attn_positions: vec![9],
            ..Default::default()
        };
        let Err(Error::InvalidConfig(errs)) = c.validate() else {
            panic!("expected invalid config")
        };
        assert_eq!(errs.len(), 3, "{errs:?}");
    }
}
