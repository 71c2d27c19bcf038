use crate::error::Result;
use crate::params::{Builder, Init};
use crate::tensor::kernels::{self, ScanDims, ScanInputs};
use crate::tensor::{ScanMode, Scalar, Tensor, Var};

/// Recurrent state of one selective-SSM layer. Its size depends only on the
/// layer geometry, never on how many positions have been processed.
#[derive(Clone, Debug)]
pub struct SsmState<S: Scalar> {
    /// `[d_inner, d_state]`
    pub h: Vec<S>,
    /// Last `d_conv − 1` convolution inputs, `[d_conv − 1, d_inner]`.
    pub conv: Vec<S>,
}

impl<S: Scalar> SsmState<S> {
    pub fn byte_size(&self) -> usize {
        (self.h.len() + self.conv.len()) * S::DTYPE.size()
    }
}

/// Geometry of a selective state-space mixer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsmDims {
    pub d_model: usize,
    pub d_inner: usize,
    pub d_state: usize,
    pub d_conv: usize,
    pub dt_rank: usize,
}

impl SsmDims {
    pub fn param_count(&self) -> usize {
        let SsmDims {
            d_model: d,
            d_inner: di,
            d_state: n,
            d_conv: w,
            dt_rank: r,
        } = *self;
        d * 2 * di + di * w + di + di * (r + 2 * n) + r * di + di + di * n + di + di * d
    }
}

/// Mamba-style mixer: input projection to a stream and a gate, short causal
/// convolution, input-dependent step size and state matrices, selective
/// scan, gating and output projection.
#[derive(Clone, Debug)]
pub struct Mamba<S: Scalar> {
    pub dims: SsmDims,
    pub in_proj: Var<S>,
    pub conv_w: Var<S>,
    pub conv_b: Var<S>,
    pub x_proj: Var<S>,
    pub dt_proj: Var<S>,
    pub dt_bias: Var<S>,
    pub a_log: Var<S>,
    pub d_skip: Var<S>,
    pub out_proj: Var<S>,
    pub mode: ScanMode,
}

impl<S: Scalar> Mamba<S> {
    pub fn new(b: &mut Builder<'_, S>, dims: SsmDims, std: f64, out_std: f64) -> Result<Self> {
        let SsmDims {
            d_model: d,
            d_inner: di,
            d_state: n,
            d_conv: w,
            dt_rank: r,
        } = dims;
        Ok(Self {
            dims,
            in_proj: b.param("in_proj", &[d, 2 * di], Init::Normal(std))?,
            conv_w: b.param("conv_w", &[di, w], Init::Normal(1.0 / (w as f64).sqrt()))?,
            conv_b: b.param("conv_b", &[di], Init::Zeros)?,
            x_proj: b.param("x_proj", &[di, r + 2 * n], Init::Normal(std))?,
            dt_proj: b.param("dt_proj", &[r, di], Init::Normal(1.0 / (r as f64).sqrt()))?,
            dt_bias: b.param("dt_bias", &[di], Init::DtBias)?,
            a_log: b.param("a_log", &[di, n], Init::ALog)?,
            d_skip: b.param("d_skip", &[di], Init::Ones)?,
            out_proj: b.param("out_proj", &[di, d], Init::Normal(out_std))?,
            mode: ScanMode::default(),
        })
    }

    pub fn new_state(&self) -> SsmState<S> {
        let SsmDims {
            d_inner, d_state, d_conv, ..
        } = self.dims;
        SsmState {
            h: vec![S::zero(); d_inner * d_state],
            conv: vec![S::zero(); (d_conv - 1) * d_inner],
        }
    }

    /// Step sizes and input/readout matrices from the convolved stream.
    fn selective_params(&self, xc: &Var<S>) -> Result<(Var<S>, Var<S>, Var<S>)> {
        let SsmDims {
            d_state: n, dt_rank: r, ..
        } = self.dims;
        let dbc = xc.matmul(&self.x_proj)?;
        let delta = dbc
            .slice(1, 0, r)?
            .matmul(&self.dt_proj)?
            .add_bias(&self.dt_bias)?
            .softplus()?;
        Ok((delta, dbc.slice(1, r, r + n)?, dbc.slice(1, r + n, r + 2 * n)?))
    }

    /// Whole-sequence forward from a zero state, `x: [T, d_model]`.
    pub fn forward(&self, x: &Var<S>) -> Result<Var<S>> {
        self.forward_with(x, self.mode)
    }

    pub fn forward_with(&self, x: &Var<S>, mode: ScanMode) -> Result<Var<S>> {
        let di = self.dims.d_inner;
        let xz = x.matmul(&self.in_proj)?;
        let xc = xz.slice(1, 0, di)?.causal_conv1d(&self.conv_w, &self.conv_b)?.silu()?;
        let gate = xz.slice(1, di, 2 * di)?.silu()?;
        let (delta, bm, cm) = self.selective_params(&xc)?;
        let a = self.a_log.exp()?.neg()?;
        let y = Var::selective_scan(&xc, &delta, &a, &bm, &cm, &self.d_skip, mode)?;
        y.mul(&gate)?.matmul(&self.out_proj)
    }

    fn detached(&self) -> Self {
        Self {
            dims: self.dims,
            in_proj: self.in_proj.detach(),
            conv_w: self.conv_w.detach(),
            conv_b: self.conv_b.detach(),
            x_proj: self.x_proj.detach(),
            dt_proj: self.dt_proj.detach(),
            dt_bias: self.dt_bias.detach(),
            a_log: self.a_log.detach(),
            d_skip: self.d_skip.detach(),
            out_proj: self.out_proj.detach(),
            mode: self.mode,
        }
    }

    /// Advances `state` over the rows of `x` and returns their outputs.
    /// Inference only; one row is a single decode step.
    pub fn forward_stateful(&self, x: &Tensor<S>, state: &mut SsmState<S>) -> Result<Tensor<S>> {
        let SsmDims {
            d_inner: di,
            d_state: n,
            d_conv: w,
            ..
        } = self.dims;
        let m = self.detached();
        let t = x.shape()[0];
        let x = Var::constant(x.clone());
        let xz = x.matmul(&m.in_proj)?;
        let stream = xz.slice(1, 0, di)?;
        let conv = kernels::causal_conv_forward(
            stream.value().data(),
            t,
            di,
            self.conv_w.value().data(),
            w,
            self.conv_b.value().data(),
            &state.conv,
        );
        kernels::causal_conv_advance(&mut state.conv, stream.value().data(), t, di, w);
        let xc = Var::constant(Tensor::new(vec![t, di], conv)?).silu()?;
        let gate = xz.slice(1, di, 2 * di)?.silu()?;
        let (delta, bm, cm) = m.selective_params(&xc)?;
        let a = m.a_log.exp()?.neg()?;
        let inputs = ScanInputs {
            u: xc.value().data(),
            delta: delta.value().data(),
            a: a.value().data(),
            b: bm.value().data(),
            cm: cm.value().data(),
            d: self.d_skip.value().data(),
        };
        let y = kernels::scan_sequential(inputs, ScanDims { t, c: di, s: n }, &mut state.h, None);
        let y = Var::constant(Tensor::new(vec![t, di], y)?);
        Ok(y.mul(&gate)?.matmul(&m.out_proj)?.into_tensor())
    }
}
