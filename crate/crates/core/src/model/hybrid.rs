use crate::error::{Error, Result};
use crate::layers::{Attention, KvCache, Mamba, Moe, RmsNorm, RoutingRecord, SsmState, SwiGlu};
use crate::params::{Bind, Builder, Init, ParamSource, Params, RandomInit, TensorMap};
use crate::tensor::{Scalar, Tape, Tensor, Var};

use super::config::{HybridConfig, LayerSpec, MixerKind, MlpKind, ParamCount};

#[derive(Clone, Debug)]
pub enum Mixer<S: Scalar> {
    Attention(Attention<S>),
    Mamba(Mamba<S>),
}

#[derive(Clone, Debug)]
pub enum Mlp<S: Scalar> {
    Dense(SwiGlu<S>),
    Moe(Moe<S>),
}

/// Pre-norm residual layer: `h = x + mixer(norm(x))`, `out = h + mlp(norm(h))`.
#[derive(Clone, Debug)]
pub struct Layer<S: Scalar> {
    pub spec: LayerSpec,
    pub mixer_norm: RmsNorm<S>,
    pub mixer: Mixer<S>,
    pub mlp_norm: RmsNorm<S>,
    pub mlp: Mlp<S>,
}

/// Token and image-slot input of one sequence.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a, S: Scalar> {
    pub ids: &'a [usize],
    /// Positions whose embeddings are replaced by rows of `image_embeds`.
    pub image_slots: &'a [usize],
    pub image_embeds: Option<&'a Var<S>>,
}

impl<'a, S: Scalar> ModelInput<'a, S> {
    pub fn text(ids: &'a [usize]) -> Self {
        Self {
            ids,
            image_slots: &[],
            image_embeds: None,
        }
    }
}

pub struct ForwardOutput<S: Scalar> {
    /// `[T, vocab]`
    pub logits: Var<S>,
    /// One record per MoE layer, in layer order.
    pub routing: Vec<RoutingRecord>,
    /// Sum of MoE balance penalties when enabled.
    pub aux_loss: Option<Var<S>>,
}

/// Outcome of [`HybridModel::prune_to_expert0`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneStatus {
    Pruned { moe_layers: usize },
    /// The model had no MoE layer; it is returned unchanged.
    AlreadyDense,
}

/// The hybrid Mamba/attention decoder with a tied output head.
#[derive(Clone, Debug)]
pub struct HybridModel<S: Scalar> {
    pub cfg: HybridConfig,
    pub embed: Var<S>,
    pub layers: Vec<Layer<S>>,
    pub final_norm: RmsNorm<S>,
    pub head: Option<Var<S>>,
    params: Params<S>,
}

impl<S: Scalar> HybridModel<S> {
    /// Builds the model, drawing every parameter from `source`.
    pub fn build(cfg: &HybridConfig, source: &mut dyn ParamSource<S>) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder::new(source);
        let (d, std, out_std) = (cfg.d_model, cfg.init_std, cfg.out_std());
        let embed = b.param("embed", &[cfg.vocab_size, d], Init::Normal(std))?;
        let mut layers = Vec::with_capacity(cfg.n_layers());
        for spec in cfg.layer_specs() {
            let layer = b.scope(format!("layers.{}", spec.index), |b| {
                let mixer_norm = b.scope("mixer_norm", |b| RmsNorm::new(b, d, cfg.norm_eps))?;
                let mixer = match spec.mixer {
                    MixerKind::Attention => Mixer::Attention(b.scope("attn", |b| {
                        Attention::new(b, d, cfg.n_heads, cfg.n_kv_heads, cfg.head_dim, std, out_std)
                    })?),
                    MixerKind::Mamba => Mixer::Mamba(b.scope("ssm", |b| {
                        let mut m = Mamba::new(b, cfg.ssm_dims(), std, out_std)?;
                        m.mode = cfg.scan_mode;
                        Ok(m)
                    })?),
                };
                let mlp_norm = b.scope("mlp_norm", |b| RmsNorm::new(b, d, cfg.norm_eps))?;
                let mlp = match spec.mlp {
                    MlpKind::Dense => Mlp::Dense(b.scope("mlp", |b| SwiGlu::new(b, d, cfg.d_ff, std, out_std))?),
                    MlpKind::Moe => Mlp::Moe(b.scope("moe", |b| {
                        let mut m = Moe::new(b, d, cfg.d_ff, cfg.n_experts, cfg.top_k, std, out_std)?;
                        m.aux_loss = cfg.moe_aux_loss;
                        Ok(m)
                    })?),
                };
                Ok(Layer {
                    spec,
                    mixer_norm,
                    mixer,
                    mlp_norm,
                    mlp,
                })
            })?;
            layers.push(layer);
        }
        let final_norm = b.scope("final_norm", |b| RmsNorm::new(b, d, cfg.norm_eps))?;
        let head = if cfg.tie_embeddings {
            None
        } else {
            Some(b.param("head", &[d, cfg.vocab_size], Init::Normal(std))?)
        };
        Ok(Self {
            cfg: cfg.clone(),
            embed,
            layers,
            final_norm,
            head,
            params: b.finish(),
        })
    }

    /// Deterministic random initialization.
    pub fn random(cfg: &HybridConfig, seed: u64) -> Result<Self> {
        Self::build(cfg, &mut RandomInit::new(seed))
    }

    pub fn from_map(cfg: &HybridConfig, map: &TensorMap<S>) -> Result<Self> {
        Self::build(cfg, &mut &*map)
    }

    /// Same parameters registered on `tape`; names accepted by `trainable`
    /// receive gradients.
    pub fn bind(&self, tape: &Tape<S>, trainable: &dyn Fn(&str) -> bool) -> Result<Self> {
        let map = self.to_map();
        let mut model = Self::build(
            &self.cfg,
            &mut Bind {
                map: &map,
                tape,
                trainable,
            },
        )?;
        model.copy_runtime_switches(self);
        Ok(model)
    }

    fn copy_runtime_switches(&mut self, from: &Self) {
        for (dst, src) in self.layers.iter_mut().zip(&from.layers) {
            if let (Mlp::Moe(d), Mlp::Moe(s)) = (&mut dst.mlp, &src.mlp) {
                d.forced_expert = s.forced_expert;
                d.aux_loss = s.aux_loss;
            }
            if let (Mixer::Mamba(d), Mixer::Mamba(s)) = (&mut dst.mixer, &src.mixer) {
                d.mode = s.mode;
            }
        }
    }

    pub fn params(&self) -> &Params<S> {
        &self.params
    }

    pub fn to_map(&self) -> TensorMap<S> {
        self.params.to_map()
    }

    /// Routes every token of every MoE layer to `expert` alone (or restores
    /// normal routing with `None`).
    pub fn set_forced_expert(&mut self, expert: Option<usize>) {
        for layer in &mut self.layers {
            if let Mlp::Moe(m) = &mut layer.mlp {
                m.forced_expert = expert;
            }
        }
    }

    /// Parameter totals by enumeration of the named tensors.
    pub fn count_params(&self) -> ParamCount {
        let mut total = 0;
        let mut expert = 0;
        for (name, v) in self.params.iter() {
            total += v.value().numel();
            if name.contains(".moe.experts.") {
                expert += v.value().numel();
            }
        }
        let inactive = if self.cfg.n_experts == 0 {
            0
        } else {
            expert - expert * self.cfg.top_k / self.cfg.n_experts
        };
        ParamCount {
            total,
            active: total - inactive,
        }
    }

    /// Input embeddings with image slots overwritten.
    pub fn embed_input(&self, input: ModelInput<'_, S>) -> Result<Var<S>> {
        let x = Var::embedding_lookup(&self.embed, input.ids)?;
        match input.image_embeds {
            None if input.image_slots.is_empty() => Ok(x),
            None => Err(Error::SlotMismatch {
                declared: input.image_slots.len(),
                supplied: 0,
            }),
            Some(e) => {
                if e.shape().first() != Some(&input.image_slots.len()) {
                    return Err(Error::SlotMismatch {
                        declared: input.image_slots.len(),
                        supplied: e.shape().first().copied().unwrap_or(0),
                    });
                }
                x.place_rows(input.image_slots, e)
            }
        }
    }

    /// Logits from final hidden states.
    pub fn head_logits(&self, h: &Var<S>) -> Result<Var<S>> {
        let h = self.final_norm.forward(h)?;
        match &self.head {
            Some(w) => h.matmul(w),
            None => h.matmul_nt(&self.embed),
        }
    }

    /// Whole-sequence causal forward pass.
    pub fn forward(&self, input: ModelInput<'_, S>) -> Result<ForwardOutput<S>> {
        let mut h = self.embed_input(input)?;
        let mut routing = Vec::new();
        let mut aux: Option<Var<S>> = None;
        for layer in &self.layers {
            let x = layer.mixer_norm.forward(&h)?;
            let mixed = match &layer.mixer {
                Mixer::Attention(a) => a.forward(&x)?,
                Mixer::Mamba(m) => m.forward(&x)?,
            };
            h = h.add(&mixed)?;
            let x = layer.mlp_norm.forward(&h)?;
            let y = match &layer.mlp {
                Mlp::Dense(m) => m.forward(&x)?,
                Mlp::Moe(m) => {
                    let out = m.forward(&x)?;
                    routing.push(out.routing);
                    if let Some(l) = out.aux_loss {
                        aux = Some(match aux {
                            Some(a) => a.add(&l)?,
                            None => l,
                        });
                    }
                    out.out
                }
            };
            h = h.add(&y)?;
        }
        Ok(ForwardOutput {
            logits: self.head_logits(&h)?,
            routing,
            aux_loss: aux,
        })
    }

    /// `[T, vocab]` logits of a whole sequence.
    pub fn logits(&self, input: ModelInput<'_, S>) -> Result<Tensor<S>> {
        Ok(self.forward(input)?.logits.into_tensor())
    }

    pub fn new_session(&self) -> DecodeSession<'_, S> {
        let states = self
            .layers
            .iter()
            .map(|l| match &l.mixer {
                Mixer::Attention(a) => LayerState::Kv(a.new_cache()),
                Mixer::Mamba(m) => LayerState::Ssm(m.new_state()),
            })
            .collect();
        DecodeSession {
            model: self,
            states,
            position: 0,
        }
    }

    /// Collapses every MoE layer to its first expert as a dense MLP and drops
    /// the routers. Every other tensor is shared unchanged.
    pub fn prune_to_expert0(&self) -> Result<(Self, PruneStatus)> {
        let moe_layers = self.cfg.count_layers(None, Some(MlpKind::Moe));
        if moe_layers == 0 {
            return Ok((self.clone(), PruneStatus::AlreadyDense));
        }
        let mut map = TensorMap::new();
        for (name, v) in self.params.iter() {
            let renamed = match name.split_once(".moe.") {
                None => Some(name.to_string()),
                Some((layer, rest)) => rest
                    .strip_prefix("experts.0.")
                    .map(|w| format!("{layer}.mlp.{w}")),
            };
            if let Some(n) = renamed {
                map.insert(n, v.shared_value());
            }
        }
        let cfg = HybridConfig {
            moe_stride: 0,
            ..self.cfg.clone()
        };
        let mut pruned = Self::from_map(&cfg, &map)?;
        pruned.copy_runtime_switches(self);
        Ok((pruned, PruneStatus::Pruned { moe_layers }))
    }
}

enum LayerState<S: Scalar> {
    Kv(KvCache<S>),
    Ssm(SsmState<S>),
}

/// Incremental inference state of one sequence: a KV cache per attention
/// layer and a recurrent state per Mamba layer.
pub struct DecodeSession<'m, S: Scalar> {
    model: &'m HybridModel<S>,
    states: Vec<LayerState<S>>,
    position: usize,
}

impl<S: Scalar> DecodeSession<'_, S> {
    pub fn position(&self) -> usize {
        self.position
    }

    /// Runs the rows of `input` through every layer, advancing caches and
    /// states, and returns the final hidden states.
    fn advance(&mut self, input: ModelInput<'_, S>) -> Result<Var<S>> {
        let model = self.model;
        let mut h = model.embed_input(input)?.detach().into_tensor();
        for (layer, state) in model.layers.iter().zip(&mut self.states) {
            let x = layer.mixer_norm.forward(&Var::constant(h.clone()))?.into_tensor();
            let mixed = match (&layer.mixer, state) {
                (Mixer::Attention(a), LayerState::Kv(c)) => a.forward_cached(&x, c)?,
                (Mixer::Mamba(m), LayerState::Ssm(s)) => m.forward_stateful(&x, s)?,
                _ => unreachable!("session states follow the layer specs"),
            };
            let hv = Var::constant(h).add(&Var::constant(mixed))?;
            let x = layer.mlp_norm.forward(&hv)?;
            let y = match &layer.mlp {
                Mlp::Dense(m) => m.forward(&x)?,
                Mlp::Moe(m) => m.forward(&x)?.out,
            };
            h = hv.add(&y)?.into_tensor();
        }
        self.position += input.ids.len();
        Ok(Var::constant(h))
    }

    /// Processes `input` and returns logits for all of its rows, `[T, vocab]`.
    pub fn extend(&mut self, input: ModelInput<'_, S>) -> Result<Tensor<S>> {
        let h = self.advance(input)?;
        Ok(self.model.head_logits(&h)?.into_tensor())
    }

    /// Processes `input` and returns the logits of its last position.
    pub fn prefill(&mut self, input: ModelInput<'_, S>) -> Result<Tensor<S>> {
        let h = self.advance(input)?;
        let t = h.shape()[0];
        let last = h.slice(0, t - 1, t)?;
        Ok(self.model.head_logits(&last)?.into_tensor().reshape(&[self.model.cfg.vocab_size])?)
    }

    /// One-token advance; returns `[vocab]` logits.
    pub fn decode_step(&mut self, token: usize) -> Result<Tensor<S>> {
        self.prefill(ModelInput::text(&[token]))
    }

    /// Greedy continuation of up to `n` tokens, stopping after `stop`.
    pub fn generate_greedy(&mut self, first_logits: &Tensor<S>, n: usize, stop: Option<usize>) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(n);
        let mut logits = first_logits.clone();
        for _ in 0..n {
            let next = argmax(logits.data());
            out.push(next);
            if Some(next) == stop {
                break;
            }
            if out.len() < n {
                logits = self.decode_step(next)?;
            }
        }
        Ok(out)
    }

    pub fn kv_bytes(&self) -> usize {
        self.states
            .iter()
            .map(|s| match s {
                LayerState::Kv(c) => c.byte_size(),
                LayerState::Ssm(_) => 0,
            })
            .sum()
    }

    pub fn ssm_bytes(&self) -> usize {
        self.states
            .iter()
            .map(|s| match s {
                LayerState::Ssm(st) => st.byte_size(),
                LayerState::Kv(_) => 0,
            })
            .sum()
    }

    pub fn byte_size(&self) -> usize {
        self.kv_bytes() + self.ssm_bytes()
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
