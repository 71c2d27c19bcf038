//! Slice-level numeric kernels shared by the differentiable ops and the
//! cache-based inference path. Keeping one implementation per primitive is
//! what makes full-sequence and incremental decoding agree bit for bit.

use super::Scalar;

/// Unrolled dot product with eight independent accumulators.
#[inline]
pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [S::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    let mut tail = S::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c[m,n] += a[m,k] · b[k,n]`
pub fn gemm_nn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            axpy(aip, &b[p * n..(p + 1) * n], crow);
        }
    }
}

/// `c[m,k] += a[m,n] · b[k,n]ᵀ`
pub fn gemm_nt<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] += dot(arow, &b[p * n..(p + 1) * n]);
        }
    }
}

/// `c[k,n] += a[m,k]ᵀ · b[m,n]`
pub fn gemm_tn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(a[i * k + p], brow, &mut c[p * n..(p + 1) * n]);
        }
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[inline]
pub fn silu<S: Scalar>(x: S) -> S {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<S: Scalar>(x: S) -> S {
    let s = sigmoid(x);
    s * (S::one() + x * (S::one() - s))
}

#[inline]
pub fn softplus<S: Scalar>(x: S) -> S {
    // log(1 + e^x) without overflow
    if x > S::of(20.0) {
        x
    } else if x < S::of(-20.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
pub fn gelu<S: Scalar>(x: S) -> S {
    let inner = S::of(GELU_C) * (x + S::of(0.044715) * x * x * x);
    S::of(0.5) * x * (S::one() + inner.tanh())
}

#[inline]
pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let x2 = x * x;
    let inner = S::of(GELU_C) * (x + S::of(0.044715) * x2 * x);
    let t = inner.tanh();
    let dinner = S::of(GELU_C) * (S::one() + S::of(3.0 * 0.044715) * x2);
    S::of(0.5) * (S::one() + t) + S::of(0.5) * x * (S::one() - t * t) * dinner
}

/// In-place numerically stable softmax over one slice.
pub fn softmax_in_place<S: Scalar>(v: &mut [S]) {
    let m = v.iter().copied().fold(S::neg_infinity(), S::max);
    let mut z = S::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Geometry of one grouped-query attention call.
#[derive(Debug, Clone, Copy)]
pub struct AttnDims {
    pub tq: usize,
    pub tk: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
    /// `Some(offset)`: query `i` sits at absolute position `offset + i` and
    /// sees keys `0..=offset + i`. `None`: bidirectional.
    pub causal_offset: Option<usize>,
}

impl AttnDims {
    #[inline]
    fn limit(&self, i: usize) -> usize {
        match self.causal_offset {
            Some(off) => (off + i + 1).min(self.tk),
            None => self.tk,
        }
    }
}

/// Scaled dot-product attention with KV heads shared across query-head
/// groups. Returns `[tq, n_heads·head_dim]`; when `probs` is given it
/// receives the `[n_heads, tq, tk]` attention weights (zeros where masked).
pub fn attention_forward<S: Scalar>(
    q: &[S],
    k: &[S],
    v: &[S],
    dims: AttnDims,
    mut probs: Option<&mut [S]>,
) -> Vec<S> {
    let AttnDims {
        tq,
        tk,
        n_heads,
        n_kv_heads,
        head_dim: hd,
        ..
    } = dims;
    let group = n_heads / n_kv_heads;
    let qw = n_heads * hd;
    let kw = n_kv_heads * hd;
    let scale = S::one() / S::of(hd as f64).sqrt();
    let mut out = vec![S::zero(); tq * qw];
    let mut scores = vec![S::zero(); tk];
    for h in 0..n_heads {
        let g = h / group;
        for i in 0..tq {
            let lim = dims.limit(i);
            let qi = &q[i * qw + h * hd..i * qw + (h + 1) * hd];
            for j in 0..lim {
                scores[j] = dot(qi, &k[j * kw + g * hd..j * kw + (g + 1) * hd]) * scale;
            }
            softmax_in_place(&mut scores[..lim]);
            let orow = &mut out[i * qw + h * hd..i * qw + (h + 1) * hd];
            for j in 0..lim {
                axpy(scores[j], &v[j * kw + g * hd..j * kw + (g + 1) * hd], orow);
            }
            if let Some(p) = probs.as_deref_mut() {
                let base = (h * tq + i) * tk;
                p[base..base + lim].copy_from_slice(&scores[..lim]);
            }
        }
    }
    out
}

/// Gradients of [`attention_forward`] given its saved weights.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<S: Scalar>(
    q: &[S],
    k: &[S],
    v: &[S],
    probs: &[S],
    dout: &[S],
    dims: AttnDims,
    dq: &mut [S],
    dk: &mut [S],
    dv: &mut [S],
) {
    let AttnDims {
        tq,
        tk,
        n_heads,
        n_kv_heads,
        head_dim: hd,
        ..
    } = dims;
    let group = n_heads / n_kv_heads;
    let qw = n_heads * hd;
    let kw = n_kv_heads * hd;
    let scale = S::one() / S::of(hd as f64).sqrt();
    let mut dp = vec![S::zero(); tk];
    for h in 0..n_heads {
        let g = h / group;
        for i in 0..tq {
            let lim = dims.limit(i);
            let p = &probs[(h * tq + i) * tk..(h * tq + i) * tk + lim];
            let qoff = i * qw + h * hd;
            let d_o = &dout[qoff..qoff + hd];
            let mut rowsum = S::zero();
            for j in 0..lim {
                dp[j] = dot(d_o, &v[j * kw + g * hd..j * kw + (g + 1) * hd]);
                rowsum += dp[j] * p[j];
            }
            for j in 0..lim {
                let koff = j * kw + g * hd;
                let ds = p[j] * (dp[j] - rowsum) * scale;
                axpy(ds, &k[koff..koff + hd], &mut dq[qoff..qoff + hd]);
                axpy(ds, &q[qoff..qoff + hd], &mut dk[koff..koff + hd]);
                axpy(p[j], d_o, &mut dv[koff..koff + hd]);
            }
        }
    }
}

/// Depthwise causal convolution over time.
///
/// `x: [t, c]`, `w: [c, width]`, `bias: [c]`, `window: [width-1, c]` holding
/// the inputs that precede `x` (oldest first).
pub fn causal_conv_forward<S: Scalar>(
    x: &[S],
    t: usize,
    c: usize,
    w: &[S],
    width: usize,
    bias: &[S],
    window: &[S],
) -> Vec<S> {
    let hist = width - 1;
    let mut out = vec![S::zero(); t * c];
    for step in 0..t {
        for ch in 0..c {
            let mut acc = bias[ch];
            for j in 0..width {
                let tau = step as isize - hist as isize + j as isize;
                let xin = if tau >= 0 {
                    x[tau as usize * c + ch]
                } else {
                    window[(hist as isize + tau) as usize * c + ch]
                };
                acc += w[ch * width + j] * xin;
            }
            out[step * c + ch] = acc;
        }
    }
    out
}

/// Rolls the conv window forward past `x` (`[t, c]`).
pub fn causal_conv_advance<S: Scalar>(window: &mut [S], x: &[S], t: usize, c: usize, width: usize) {
    let hist = width - 1;
    if hist == 0 {
        return;
    }
    let mut joined = window.to_vec();
    joined.extend_from_slice(&x[..t * c]);
    let total = hist + t;
    window.copy_from_slice(&joined[(total - hist) * c..total * c]);
}

/// Backward of [`causal_conv_forward`] with a zero window.
#[allow(clippy::too_many_arguments)]
pub fn causal_conv_backward<S: Scalar>(
    x: &[S],
    t: usize,
    c: usize,
    w: &[S],
    width: usize,
    dout: &[S],
    dx: &mut [S],
    dw: &mut [S],
    dbias: &mut [S],
) {
    let hist = width - 1;
    for step in 0..t {
        for ch in 0..c {
            let g = dout[step * c + ch];
            dbias[ch] += g;
            for j in 0..width {
                let tau = step as isize - hist as isize + j as isize;
                if tau >= 0 {
                    let xi = tau as usize * c + ch;
                    dw[ch * width + j] += g * x[xi];
                    dx[xi] += g * w[ch * width + j];
                }
            }
        }
    }
}

/// Geometry of a selective scan: `t` steps over `c` channels with `s`
/// state entries per channel.
#[derive(Debug, Clone, Copy)]
pub struct ScanDims {
    pub t: usize,
    pub c: usize,
    pub s: usize,
}

/// Inputs of the selective recurrence
/// `h_t = exp(Δ_t·A)·h_{t−1} + Δ_t·B_t·u_t`, `y_t = C_t·h_t + D·u_t`.
#[derive(Debug, Clone, Copy)]
pub struct ScanInputs<'a, S> {
    /// `[t, c]`
    pub u: &'a [S],
    /// `[t, c]`, positive
    pub delta: &'a [S],
    /// `[c, s]`, negative
    pub a: &'a [S],
    /// `[t, s]`
    pub b: &'a [S],
    /// `[t, s]`
    pub cm: &'a [S],
    /// `[c]`
    pub d: &'a [S],
}

#[inline]
fn readout<S: Scalar>(cm: &[S], h: &[S], d: S, u: S) -> S {
    let mut acc = S::zero();
    for (&ci, &hi) in cm.iter().zip(h) {
        acc += ci * hi;
    }
    acc + d * u
}

/// Step-by-step recurrence; the reference form. `state` (`[c, s]`) is
/// read as the initial state and left holding the final one. `hist`, when
/// given, receives every intermediate state (`[t, c, s]`).
pub fn scan_sequential<S: Scalar>(
    inp: ScanInputs<'_, S>,
    dims: ScanDims,
    state: &mut [S],
    mut hist: Option<&mut [S]>,
) -> Vec<S> {
    let ScanDims { t, c, s } = dims;
    let mut y = vec![S::zero(); t * c];
    for step in 0..t {
        let bt = &inp.b[step * s..(step + 1) * s];
        let ct = &inp.cm[step * s..(step + 1) * s];
        for ch in 0..c {
            let dt = inp.delta[step * c + ch];
            let uu = inp.u[step * c + ch];
            let arow = &inp.a[ch * s..(ch + 1) * s];
            let h = &mut state[ch * s..(ch + 1) * s];
            for k in 0..s {
                let decay = (dt * arow[k]).exp();
                let inc = dt * bt[k] * uu;
                h[k] = decay * h[k] + inc;
            }
            y[step * c + ch] = readout(ct, h, inp.d[ch], uu);
        }
        if let Some(hh) = hist.as_deref_mut() {
            hh[step * c * s..(step + 1) * c * s].copy_from_slice(state);
        }
    }
    y
}

/// Same recurrence evaluated as a work-efficient (Blelloch) exclusive scan
/// over `(decay, increment)` pairs under the associative operator
/// `(a₁, b₁) ∘ (a₂, b₂) = (a₁·a₂, a₂·b₁ + b₂)`.
pub fn scan_parallel<S: Scalar>(
    inp: ScanInputs<'_, S>,
    dims: ScanDims,
    state: &mut [S],
    hist: Option<&mut [S]>,
) -> Vec<S> {
    let ScanDims { t, c, s } = dims;
    let m = c * s;
    let mut decay = vec![S::zero(); t * m];
    let mut inc = vec![S::zero(); t * m];
    for step in 0..t {
        for ch in 0..c {
            let dt = inp.delta[step * c + ch];
            let uu = inp.u[step * c + ch];
            for k in 0..s {
                let idx = step * m + ch * s + k;
                decay[idx] = (dt * inp.a[ch * s + k]).exp();
                inc[idx] = dt * inp.b[step * s + k] * uu;
            }
        }
    }
    // fold the carried-in state into the first increment
    for i in 0..m {
        inc[i] = decay[i] * state[i] + inc[i];
    }
    let states = associative_scan(&decay, &inc, t, m);
    state.copy_from_slice(&states[(t - 1) * m..t * m]);
    let mut y = vec![S::zero(); t * c];
    for step in 0..t {
        let ct = &inp.cm[step * s..(step + 1) * s];
        for ch in 0..c {
            let h = &states[step * m + ch * s..step * m + (ch + 1) * s];
            y[step * c + ch] = readout(ct, h, inp.d[ch], inp.u[step * c + ch]);
        }
    }
    if let Some(hh) = hist {
        hh.copy_from_slice(&states);
    }
    y
}

/// Inclusive scan of `h_t = a_t·h_{t−1} + b_t` (`h_{−1} = 0`) for `width`
/// independent lanes via up-sweep / down-sweep over a power-of-two tree.
/// `a` and `b` are `[t, width]`; the result is `[t, width]`.
pub fn associative_scan<S: Scalar>(a: &[S], b: &[S], t: usize, width: usize) -> Vec<S> {
    let n = t.next_power_of_two();
    let mut sa = vec![S::one(); n * width];
    let mut sb = vec![S::zero(); n * width];
    sa[..t * width].copy_from_slice(&a[..t * width]);
    sb[..t * width].copy_from_slice(&b[..t * width]);

    // up-sweep: node `right` becomes the composition of its subtree
    let mut d = 1;
    while d < n {
        let mut i = 0;
        while i < n {
            let left = i + d - 1;
            let right = i + 2 * d - 1;
            for l in 0..width {
                let (la, lb) = (sa[left * width + l], sb[left * width + l]);
                let (ra, rb) = (sa[right * width + l], sb[right * width + l]);
                sa[right * width + l] = la * ra;
                sb[right * width + l] = ra * lb + rb;
            }
            i += 2 * d;
        }
        d *= 2;
    }

    // down-sweep to an exclusive prefix
    for l in 0..width {
        sa[(n - 1) * width + l] = S::one();
        sb[(n - 1) * width + l] = S::zero();
    }
    let mut d = n / 2;
    while d >= 1 {
        let mut i = 0;
        while i < n {
            let left = i + d - 1;
            let right = i + 2 * d - 1;
            for l in 0..width {
                let (la, lb) = (sa[left * width + l], sb[left * width + l]);
                let (pa, pb) = (sa[right * width + l], sb[right * width + l]);
                sa[left * width + l] = pa;
                sb[left * width + l] = pb;
                // prefix of the right child = parent prefix ∘ left subtree
                sa[right * width + l] = pa * la;
                sb[right * width + l] = la * pb + lb;
            }
            i += 2 * d;
        }
        d /= 2;
    }

    // inclusive: exclusive prefix ∘ own element
    let mut h = vec![S::zero(); t * width];
    for step in 0..t {
        for l in 0..width {
            let idx = step * width + l;
            h[idx] = a[idx] * sb[idx] + b[idx];
        }
    }
    h
}

/// Reverse-time gradients of the selective scan from a zero initial state.
/// `hist` is the `[t, c, s]` state history of the forward pass.
#[allow(clippy::too_many_arguments)]
pub fn scan_backward<S: Scalar>(
    inp: ScanInputs<'_, S>,
    dims: ScanDims,
    hist: &[S],
    dy: &[S],
    du: &mut [S],
    ddelta: &mut [S],
    da: &mut [S],
    db: &mut [S],
    dc: &mut [S],
    dd: &mut [S],
) {
    let ScanDims { t, c, s } = dims;
    let m = c * s;
    // gradient flowing into h_t from later steps
    let mut g = vec![S::zero(); m];
    for step in (0..t).rev() {
        let ht = &hist[step * m..(step + 1) * m];
        for ch in 0..c {
            let gy = dy[step * c + ch];
            let uu = inp.u[step * c + ch];
            let dt = inp.delta[step * c + ch];
            dd[ch] += gy * uu;
            du[step * c + ch] += inp.d[ch] * gy;
            let mut ddt = S::zero();
            let mut duu = S::zero();
            for k in 0..s {
                let idx = ch * s + k;
                dc[step * s + k] += gy * ht[idx];
                let gh = g[idx] + inp.cm[step * s + k] * gy;
                let ak = inp.a[idx];
                let decay = (dt * ak).exp();
                let hprev = if step > 0 { hist[(step - 1) * m + idx] } else { S::zero() };
                let ddecay = gh * hprev * decay;
                ddt += ddecay * ak;
                da[idx] += ddecay * dt;
                let bk = inp.b[step * s + k];
                ddt += gh * bk * uu;
                db[step * s + k] += gh * dt * uu;
                duu += gh * bk * dt;
                g[idx] = gh * decay;
            }
            ddelta[step * c + ch] += ddt;
            du[step * c + ch] += duu;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let x: Vec<f64> = (0..19).map(|i| i as f64 * 0.5 - 3.0).collect();
        let y: Vec<f64> = (0..19).map(|i| (i as f64).sin()).collect();
        let naive: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((dot(&x, &y) - naive).abs() < 1e-12);
    }

    #[test]
    fn degenerate_scan_grows_linearly() {
        let t = 13;
        let a = vec![1.0f64; t];
        let b = vec![0.25f64; t];
        let h = associative_scan(&a, &b, t, 1);
        for (i, v) in h.iter().enumerate() {
            assert!((v - 0.25 * (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_window_advance_keeps_latest_inputs() {
        let mut window = vec![0.0f64; 3 * 2];
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        causal_conv_advance(&mut window, &x, 5, 2, 4);
        assert_eq!(window, vec![4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    }
}
