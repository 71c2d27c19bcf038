use crate::error::{Error, Result};
use crate::params::{Builder, Init};
use crate::tensor::kernels::{self, AttnDims};
use crate::tensor::{Scalar, Tensor, Var};

/// Append-only key/value store of one attention layer.
#[derive(Clone, Debug)]
pub struct KvCache<S: Scalar> {
    width: usize,
    k: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> KvCache<S> {
    /// `width = n_kv_heads · head_dim`.
    pub fn new(width: usize) -> Self {
        Self {
            width,
            k: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Positions stored so far.
    pub fn len(&self) -> usize {
        self.k.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Bytes held by stored keys and values.
    pub fn byte_size(&self) -> usize {
        (self.k.len() + self.v.len()) * S::DTYPE.size()
    }

    fn append(&mut self, k: &[S], v: &[S]) {
        self.k.extend_from_slice(k);
        self.v.extend_from_slice(v);
    }
}

/// Causal grouped-query attention without positional encoding.
#[derive(Clone, Debug)]
pub struct Attention<S: Scalar> {
    pub w_q: Var<S>,
    pub w_k: Var<S>,
    pub w_v: Var<S>,
    pub w_o: Var<S>,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
    /// Decoder layers are causal; the vision encoder attends both ways.
    pub causal: bool,
}

impl<S: Scalar> Attention<S> {
    pub fn new(
        b: &mut Builder<'_, S>,
        d_model: usize,
        n_heads: usize,
        n_kv_heads: usize,
        head_dim: usize,
        std: f64,
        out_std: f64,
    ) -> Result<Self> {
        if n_kv_heads == 0 || n_heads % n_kv_heads != 0 {
            return Err(Error::InvalidConfig(vec![format!(
                "n_heads ({n_heads}) must be a positive multiple of n_kv_heads ({n_kv_heads})"
            )]));
        }
        let (qw, kw) = (n_heads * head_dim, n_kv_heads * head_dim);
        Ok(Self {
            w_q: b.param("w_q", &[d_model, qw], Init::Normal(std))?,
            w_k: b.param("w_k", &[d_model, kw], Init::Normal(std))?,
            w_v: b.param("w_v", &[d_model, kw], Init::Normal(std))?,
            w_o: b.param("w_o", &[qw, d_model], Init::Normal(out_std))?,
            n_heads,
            n_kv_heads,
            head_dim,
            causal: true,
        })
    }

    pub fn param_count(d_model: usize, n_heads: usize, n_kv_heads: usize, head_dim: usize) -> usize {
        2 * d_model * n_heads * head_dim + 2 * d_model * n_kv_heads * head_dim
    }

    pub fn kv_width(&self) -> usize {
        self.n_kv_heads * self.head_dim
    }

    pub fn new_cache(&self) -> KvCache<S> {
        KvCache::new(self.kv_width())
    }

    /// Whole-sequence attention, `x: [T, d_model]`.
    pub fn forward(&self, x: &Var<S>) -> Result<Var<S>> {
        let q = x.matmul(&self.w_q)?;
        let k = x.matmul(&self.w_k)?;
        let v = x.matmul(&self.w_v)?;
        Var::attention(&q, &k, &v, self.n_heads, self.n_kv_heads, self.causal)?.matmul(&self.w_o)
    }

    /// Attends the new rows of `x` over the cached prefix plus themselves and
    /// appends their keys and values. Inference only.
    pub fn forward_cached(&self, x: &Tensor<S>, cache: &mut KvCache<S>) -> Result<Tensor<S>> {
        let x = Var::constant(x.clone());
        let q = x.matmul(&self.w_q.detach())?;
        let k = x.matmul(&self.w_k.detach())?;
        let v = x.matmul(&self.w_v.detach())?;
        let past = cache.len();
        cache.append(k.value().data(), v.value().data());
        let t = x.shape()[0];
        let dims = AttnDims {
            tq: t,
            tk: past + t,
            n_heads: self.n_heads,
            n_kv_heads: self.n_kv_heads,
            head_dim: self.head_dim,
            causal_offset: Some(past),
        };
        let out = kernels::attention_forward(q.value().data(), &cache.k, &cache.v, dims, None);
        let out = Var::constant(Tensor::new(vec![t, self.n_heads * self.head_dim], out)?);
        Ok(out.matmul(&self.w_o.detach())?.into_tensor())
    }
}
