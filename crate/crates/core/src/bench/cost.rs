//! Analytic cost model: token counts, KV-cache bytes, inference FLOPs and
//! the memory-bounded image budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and size of a deployed model, as far as costs are concerned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModelConfig {
    pub total_params: f64,
    pub active_params: f64,
    pub n_attn_layers: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
    /// KV element width: 2 for bf16, 1 for an int8 cache.
    pub bytes_per_scalar: usize,
    pub tokens_per_image: usize,
    /// FLOPs per parameter per token: 1 counts multiply-accumulates, 2
    /// counts multiplies and adds separately.
    pub kappa: u32,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        Self::dense_9b()
    }
}

impl CostModelConfig {
    /// Dense 9B variant with a Jamba-class KV geometry: 4 attention layers,
    /// 8 KV heads of width 128, bf16 cache, 144 tokens per image.
    pub fn dense_9b() -> Self {
        Self {
            total_params: 9e9,
            active_params: 9e9,
            n_attn_layers: 4,
            n_kv_heads: 8,
            head_dim: 128,
            bytes_per_scalar: 2,
            tokens_per_image: 144,
            kappa: 1,
        }
    }

    /// Mixture-of-experts variant: 13B active of 53B total parameters.
    pub fn moe_a13b() -> Self {
        Self {
            total_params: 53e9,
            active_params: 13e9,
            ..Self::dense_9b()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.total_params > 0.0 && self.active_params > 0.0) {
            errs.push("parameter counts must be positive".to_string());
        }
        if self.active_params > self.total_params {
            errs.push("active_params exceeds total_params".into());
        }
        for (name, v) in [
            ("n_attn_layers", self.n_attn_layers),
            ("n_kv_heads", self.n_kv_heads),
            ("head_dim", self.head_dim),
            ("bytes_per_scalar", self.bytes_per_scalar),
            ("tokens_per_image", self.tokens_per_image),
        ] {
            if v == 0 {
                errs.push(format!("{name} must be positive"));
            }
        }
        if !matches!(self.kappa, 1 | 2) {
            errs.push(format!("kappa {} must be 1 or 2", self.kappa));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    /// Cache bytes added per context token.
    pub fn kv_bytes_per_token(&self) -> u64 {
        (2 * self.n_attn_layers * self.n_kv_heads * self.head_dim * self.bytes_per_scalar) as u64
    }
}

/// Visual tokens of a video sampled at `fps` for `minutes`.
pub fn video_tokens(minutes: u64, fps: u64, tokens_per_image: u64) -> u64 {
    minutes * 60 * fps * tokens_per_image
}

/// Keys and values of every attention layer for `t` tokens.
pub fn kv_cache_bytes(cfg: &CostModelConfig, t: u64) -> u64 {
    cfg.kv_bytes_per_token() * t
}

/// `κ · active_params · n_images · tokens_per_image`.
pub fn flops_estimate(cfg: &CostModelConfig, n_images: u64) -> f64 {
    cfg.kappa as f64 * cfg.active_params * n_images as f64 * cfg.tokens_per_image as f64
}

/// Memory outside the KV cache: weights, a fixed prompt allowance and a
/// per-image activation cost `bytes_per_image`, the model's one free
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadModel {
    pub weight_bytes: f64,
    pub prompt_slack_tokens: u64,
    pub bytes_per_image: f64,
}

impl OverheadModel {
    /// Int8 weights of `params` parameters, a 1024-token prompt allowance
    /// and no activation cost until calibrated.
    pub fn int8(params: f64) -> Self {
        Self {
            weight_bytes: params,
            prompt_slack_tokens: 1024,
            bytes_per_image: 0.0,
        }
    }

    /// Total bytes needed for `n` images.
    pub fn required(&self, cfg: &CostModelConfig, n: u64) -> f64 {
        self.weight_bytes
            + kv_cache_bytes(cfg, n * cfg.tokens_per_image as u64 + self.prompt_slack_tokens) as f64
            + self.bytes_per_image * n as f64
    }

    /// Bytes per image, KV cache included.
    pub fn marginal(&self, cfg: &CostModelConfig) -> f64 {
        (cfg.kv_bytes_per_token() * cfg.tokens_per_image as u64) as f64 + self.bytes_per_image
    }

    /// Fits `bytes_per_image` so that `budget` holds exactly `images`
    /// images, placing the budget mid-way between `images` and `images + 1`.
    pub fn calibrate(self, cfg: &CostModelConfig, budget: f64, images: u64) -> Result<Self> {
        let fixed = self.required(cfg, 0);
        if budget <= fixed || images == 0 {
            return Err(Error::Precondition(format!(
                "budget {budget} leaves no room for images above fixed {fixed}"
            )));
        }
        let per_image = (budget - fixed) / (images as f64 + 0.5);
        let kv = (cfg.kv_bytes_per_token() * cfg.tokens_per_image as u64) as f64;
        if per_image < kv {
            return Err(Error::Precondition(format!(
                "{images} images do not fit in {budget} bytes even without activations"
            )));
        }
        Ok(Self {
            bytes_per_image: per_image - kv,
            ..self
        })
    }
}

/// Outcome of an image-budget query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ImageBudget {
    Fits(u64),
    /// The budget does not cover the fixed overhead.
    Infeasible { fixed_bytes: f64 },
}

impl ImageBudget {
    pub fn images(self) -> Option<u64> {
        match self {
            ImageBudget::Fits(n) => Some(n),
            ImageBudget::Infeasible { .. } => None,
        }
    }
}

/// Largest `n` with `overhead.required(cfg, n) ≤ budget`, by exponential
/// then binary search over the monotone requirement.
pub fn max_images(budget: f64, cfg: &CostModelConfig, overhead: &OverheadModel) -> ImageBudget {
    let fixed = overhead.required(cfg, 0);
    if budget < fixed {
        return ImageBudget::Infeasible { fixed_bytes: fixed };
    }
    let fits = |n: u64| overhead.required(cfg, n) <= budget;
    let mut hi = 1u64;
    while fits(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2;
    // invariant: fits(lo) or lo == 0, !fits(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ImageBudget::Fits(lo)
}

/// `floor((budget − fixed) / per_image)`, the closed form of
/// [`max_images`].
pub fn max_images_closed_form(budget: f64, cfg: &CostModelConfig, overhead: &OverheadModel) -> Option<f64> {
    let fixed = overhead.required(cfg, 0);
    (budget >= fixed).then(|| ((budget - fixed) / overhead.marginal(cfg)).floor())
}

/// Memory figure of the single published budget point.
pub const CALIBRATION_BUDGET_BYTES: f64 = 80e9;
pub const CALIBRATION_IMAGES: u64 = 1173;

/// Overhead model of the dense variant fitted to the published point.
pub fn calibrated_overhead(cfg: &CostModelConfig) -> Result<OverheadModel> {
    OverheadModel::int8(cfg.total_params).calibrate(cfg, CALIBRATION_BUDGET_BYTES, CALIBRATION_IMAGES)
}

/// One row of the analytic cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub quantity: String,
    pub inputs: String,
    pub value: f64,
    pub unit: String,
}

/// Token, cache, FLOPs and budget rows for `cfg`, including the three
/// anchored figures (3-minute 1 fps video at 576 tokens, a 262,144-token
/// cache and the 80 GB image budget).
pub fn cost_table(cfg: &CostModelConfig) -> Result<Vec<CostRow>> {
    cfg.validate()?;
    let row = |q: &str, i: String, v: f64, u: &str| CostRow {
        quantity: q.into(),
        inputs: i,
        value: v,
        unit: u.into(),
    };
    let mut rows = Vec::new();
    for tpi in [576u64, 144] {
        rows.push(row(
            "video_tokens",
            format!("minutes=3 fps=1 tokens_per_image={tpi}"),
            video_tokens(3, 1, tpi) as f64,
            "tokens",
        ));
    }
    let t = 262_144u64;
    rows.push(row(
        "kv_cache",
        format!(
            "T={t} layers={} kv_heads={} head_dim={} bytes={}",
            cfg.n_attn_layers, cfg.n_kv_heads, cfg.head_dim, cfg.bytes_per_scalar
        ),
        kv_cache_bytes(cfg, t) as f64 / (1u64 << 30) as f64,
        "GiB",
    ));
    for images in [128u64, 54] {
        for (name, c) in [
            ("dense", cfg.clone()),
            ("moe", CostModelConfig::moe_a13b()),
        ] {
            let c = CostModelConfig {
                kappa: cfg.kappa,
                tokens_per_image: cfg.tokens_per_image,
                ..c
            };
            rows.push(row(
                "flops",
                format!(
                    "{name} active={:e} images={images} tokens_per_image={} kappa={}",
                    c.active_params, c.tokens_per_image, c.kappa
                ),
                flops_estimate(&c, images) / 1e15,
                "PFLOPs",
            ));
        }
    }
    let overhead = calibrated_overhead(cfg)?;
    for budget in [CALIBRATION_BUDGET_BYTES, CALIBRATION_BUDGET_BYTES / 2.0] {
        let n = max_images(budget, cfg, &overhead).images().map_or(0.0, |n| n as f64);
        rows.push(row(
            "max_images",
            format!(
                "budget={budget:e} weights={:e} per_image_overhead={:.0}",
                overhead.weight_bytes, overhead.bytes_per_image
            ),
            n,
            "images",
        ));
    }
    Ok(rows)
}

pub fn cost_table_csv(rows: &[CostRow]) -> String {
    let mut out = String::from("quantity,inputs,value,unit\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.quantity, r.inputs, r.value, r.unit));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn video_token_counts() {
        assert_eq!(video_tokens(3, 1, 576), 103_680);
        assert_eq!(video_tokens(3, 1, 144), 25_920);
        assert_eq!(video_tokens(0, 1, 576), 0);
    }

    #[test]
    fn kv_cache_is_linear_in_every_factor() {
        let base = CostModelConfig::dense_9b();
        let b = kv_cache_bytes(&base, 1000);
        assert_eq!(kv_cache_bytes(&base, 0), 0);
        assert_eq!(kv_cache_bytes(&base, 2000), 2 * b);
        let scaled = [
            CostModelConfig { n_attn_layers: 8, ..base.clone() },
            CostModelConfig { n_kv_heads: 16, ..base.clone() },
            CostModelConfig { head_dim: 256, ..base.clone() },
            CostModelConfig { bytes_per_scalar: 4, ..base.clone() },
        ];
        for c in scaled {
            assert_eq!(kv_cache_bytes(&c, 1000), 2 * b);
        }
        assert_eq!(kv_cache_bytes(&base, 262_144), 4_294_967_296);
    }

    #[test]
    fn flops_is_linear_in_tokens_per_image() {
        let c = CostModelConfig::dense_9b();
        let big = CostModelConfig { tokens_per_image: 576, ..c.clone() };
        assert_eq!(flops_estimate(&big, 10) / flops_estimate(&c, 10), 4.0);
        assert_eq!(flops_estimate(&c, 0), 0.0);
        let k2 = CostModelConfig { kappa: 2, ..c.clone() };
        assert_eq!(flops_estimate(&k2, 3), 2.0 * flops_estimate(&c, 3));
    }

    #[test]
    fn budget_edges() {
        let cfg = CostModelConfig::dense_9b();
        let o = OverheadModel {
            prompt_slack_tokens: 0,
            ..OverheadModel::int8(9e9)
        };
        assert_eq!(max_images(9e9, &cfg, &o), ImageBudget::Fits(0));
        assert!(max_images(8e9, &cfg, &o).images().is_none());
        let c = calibrated_overhead(&cfg).unwrap();
        let mut prev = 0;
        for gb in [10.0, 20.0, 40.0, 80.0, 160.0] {
            let n = max_images(gb * 1e9, &cfg, &c).images().unwrap();
            assert!(n >= prev);
            assert_eq!(n as f64, max_images_closed_form(gb * 1e9, &cfg, &c).unwrap());
            prev = n;
        }
        let big = CostModelConfig { tokens_per_image: 576, ..cfg.clone() };
        assert!(max_images(80e9, &big, &c).images().unwrap() <= max_images(80e9, &cfg, &c).images().unwrap());
    }

    #[test]
    fn token_budget_ratio_without_activations() {
        let cfg = CostModelConfig::dense_9b();
        let big = CostModelConfig { tokens_per_image: 576, ..cfg.clone() };
        let o = OverheadModel {
            prompt_slack_tokens: 0,
            ..OverheadModel::int8(9e9)
        };
        let a = max_images(80e9, &cfg, &o).images().unwrap() as f64;
        let b = max_images(80e9, &big, &o).images().unwrap() as f64;
        assert!((b / a - 0.25).abs() < 1e-3);
    }

    #[test]
    fn invalid_configs_are_reported() {
        let c = CostModelConfig {
            kappa: 3,
            head_dim: 0,
            ..CostModelConfig::default()
        };
        match c.validate() {
            Err(Error::InvalidConfig(e)) => assert_eq!(e.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
